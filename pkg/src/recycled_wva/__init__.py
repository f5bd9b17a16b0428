"""Recycled weak-value amplification: analytic model, beam reshaping,
photon-level Monte Carlo and spectral SNR analysis."""
from .analysis import SpectrumResult, measure_snr
from .config import (
    ConventionalOptics,
    DetectorModel,
    InterferometerParams,
    MirrorDrive,
    Mode,
    SimulationConfig,
    SourceParams,
)
from .errors import FormatError, WVAError
from .model import RecyclingParams, postselection_probability, snr_gain, weak_value
from .montecarlo import simulate, simulate_config
from .reshaping import BeamProfile, ReshapingParams
from .timetags import TimeTagSet, read_timetags, write_timetags

__version__ = "0.1.0"

__all__ = [
    "BeamProfile", "ConventionalOptics", "DetectorModel", "FormatError", "InterferometerParams",
    "MirrorDrive", "Mode", "RecyclingParams", "ReshapingParams", "SimulationConfig",
    "SourceParams", "SpectrumResult", "TimeTagSet", "WVAError", "measure_snr",
    "postselection_probability", "read_timetags", "simulate", "simulate_config", "snr_gain",
    "weak_value", "write_timetags",
]
