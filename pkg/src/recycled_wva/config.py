"""Apparatus parameters and their flat ``key=value`` serialization.

Defaults reproduce the desk-top experiment: 690 nm pulses at 200 kHz, a
Sagnac interferometer at phi = 0.35 rad with 16 % optical loss per pass and
up to 27 passes, a knife-edge PSD with a 3.75 um dead stripe and ~65 %
efficient APDs, and a 500 Hz mirror drive of up to 7.5 urad.
"""
from __future__ import annotations

import dataclasses
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .model import RecyclingParams, postselection_probability
from .reshaping import ReshapingParams, kick_from_angular_width

SPEED_OF_LIGHT = 299_792_458.0


class Mode(str, enum.Enum):
    CONVENTIONAL = "conventional"
    SINGLE = "single"
    MULTI = "multi"


@dataclass(frozen=True)
class SourceParams:
    pulse_rate: float = 200e3
    # ~3 kcps per APD on the first pass with the default loss and efficiency
    mean_photons_per_pulse: float = 2.0
    acquisition_time: float = 10.0
    wavelength: float = 690e-9

    def __post_init__(self):
        for name in ("pulse_rate", "mean_photons_per_pulse", "acquisition_time", "wavelength"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"source.{name} must be positive")
        if self.mean_photons_per_pulse > 10:
            warnings.warn("mean photons per pulse > 10: not in the single-photon regime",
                          stacklevel=3)

    @property
    def n_pulses(self) -> int:
        return int(math.floor(self.pulse_rate * self.acquisition_time + 1e-9))


@dataclass(frozen=True)
class MirrorDrive:
    drive_frequency: float = 500.0
    tilt_amplitude_peak: float = 7.5e-6

    def __post_init__(self):
        if not self.drive_frequency > 0:
            raise InvalidConfig("drive.drive_frequency must be positive")
        if self.tilt_amplitude_peak < 0:
            raise InvalidConfig("drive.tilt_amplitude_peak must be non-negative")

    def tilt(self, t):
        return self.tilt_amplitude_peak * np.sin(2 * np.pi * self.drive_frequency * t)


@dataclass(frozen=True)
class InterferometerParams:
    phi: float = 0.35
    gamma: float = 0.16
    max_passes: int = 27
    parity_flip: bool = False
    beam_sigma: float = 86e-6
    angular_width: float = 0.94e-3
    # overrides the angular-width conversion when set (rad/m per rad of tilt)
    kick_per_radian: float | None = None
    loop_length: float = 1.2

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise InvalidConfig("interferometer.gamma must lie in [0, 1)")
        if int(self.max_passes) != self.max_passes or self.max_passes < 1:
            raise InvalidConfig("interferometer.max_passes must be a positive integer")
        for name in ("beam_sigma", "angular_width", "loop_length"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"interferometer.{name} must be positive")

    @property
    def p(self) -> float:
        return postselection_probability(self.phi)

    @property
    def kick_scale(self) -> float:
        if self.kick_per_radian is not None:
            return self.kick_per_radian
        return kick_from_angular_width(1.0, self.beam_sigma, self.angular_width)

    def kick(self, tilt):
        return self.kick_scale * tilt

    def recycling(self) -> RecyclingParams:
        return RecyclingParams(self.p, self.gamma, self.max_passes)

    def reshaping(self, tilt: float = 0.0) -> ReshapingParams:
        return ReshapingParams(self.phi, self.kick(tilt), self.gamma, self.parity_flip)

    def for_mode(self, mode: Mode) -> "InterferometerParams":
        """Copy with the pass count a mode implies (1 unless multi-pass)."""
        if Mode(mode) is Mode.MULTI:
            return self
        return dataclasses.replace(self, max_passes=1)


@dataclass(frozen=True)
class DetectorModel:
    knife_edge_position: float = 0.0
    dead_zone_width: float = 3.75e-6
    efficiency: float = 0.65
    dark_count_rate: float = 250.0
    detector_sigma: float = 20e-6

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise InvalidConfig("detector.efficiency must lie in [0, 1]")
        if self.dead_zone_width < 0 or self.dark_count_rate < 0:
            raise InvalidConfig("detector dead zone and dark-count rate must be non-negative")
        if not self.detector_sigma > 0:
            raise InvalidConfig("detector.detector_sigma must be positive")


@dataclass(frozen=True)
class ConventionalOptics:
    """Direct tilt measurement: lens of focal length ``f`` in front of the PSD."""

    focal_length: float = 0.3
    beam_sigma: float = 280e-6
    displacement_factor: float = 1.0

    def __post_init__(self):
        if not (self.focal_length > 0 and self.beam_sigma > 0):
            raise InvalidConfig("conventional focal length and beam width must be positive")

    def displacement(self, tilt):
        return self.displacement_factor * self.focal_length * tilt


_SECTIONS = {
    "source": SourceParams,
    "drive": MirrorDrive,
    "interferometer": InterferometerParams,
    "detector": DetectorModel,
    "conventional": ConventionalOptics,
}


@dataclass(frozen=True)
class SimulationConfig:
    mode: Mode = Mode.MULTI
    source: SourceParams = field(default_factory=SourceParams)
    drive: MirrorDrive = field(default_factory=MirrorDrive)
    interferometer: InterferometerParams = field(default_factory=InterferometerParams)
    detector: DetectorModel = field(default_factory=DetectorModel)
    conventional: ConventionalOptics = field(default_factory=ConventionalOptics)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SimulationConfig":
        """Copy with top-level fields or dotted ``section.field`` keys replaced."""
        top, nested = {}, {}
        for key, value in changes.items():
            if "." in key:
                sec, name = key.split(".", 1)
                nested.setdefault(sec, {})[name] = value
            else:
                top[key] = value
        for sec, vals in nested.items():
            if sec not in _SECTIONS:
                raise InvalidConfig(f"unknown config section {sec!r}")
            top[sec] = _replace_checked(top.get(sec, getattr(self, sec)), vals, sec)
        return dataclasses.replace(self, **top)

    def to_flat(self) -> dict[str, str]:
        flat = {"mode": self.mode.value, "seed": str(int(self.seed))}
        for sec in _SECTIONS:
            obj = getattr(self, sec)
            for f in dataclasses.fields(obj):
                flat[f"{sec}.{f.name}"] = _format_value(getattr(obj, f.name))
        return flat

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "SimulationConfig":
        return cls().replace(**{k: _parse_value(k, v) for k, v in flat.items()})


def _replace_checked(obj, values, sec):
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = set(values) - names
    if unknown:
        raise InvalidConfig(f"unknown keys in {sec}: {sorted(unknown)}")
    return dataclasses.replace(obj, **values)


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {
    f"{sec}.{f.name}": f.type for sec, typ in _SECTIONS.items() for f in dataclasses.fields(typ)
}


def _parse_value(key: str, text):
    if not isinstance(text, str):
        return text
    if key == "mode":
        return Mode(text)
    if key == "seed":
        return int(text)
    typ = _FIELD_TYPES.get(key)
    if typ is None:
        raise InvalidConfig(f"unknown config key {key!r}")
    try:
        if "None" in typ and text == "none":
            return None
        if typ.startswith("bool"):
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        if typ.startswith("int"):
            return int(text)
        return float(text)
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {key}: {text!r}") from exc
