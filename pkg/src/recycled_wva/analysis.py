"""Binning, single-frequency spectral extraction and SNR of time-tag streams.

The pipeline: per-bin difference ``L - R`` of the two APDs, DFT magnitude
at the mirror drive frequency normalized by the total count, times
``sqrt(pi/2)`` (a knife edge on a Gaussian beam reports ``sqrt(2/pi) d/sigma``
for a small displacement ``d``) and times 4 (one-sided DFT amplitude to
peak-to-peak).  The noise floor is the RMS of the same quantity at
neighbouring off-drive frequencies.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps
from scipy import stats

from .errors import EmptyTagSet, FrequencyUnresolvable, OffsetsOutOfBand
from .timetags import TimeTagSet

DEFAULT_BIN_WIDTH = 100e-6
AMPLITUDE_SCALE = 4.0 * math.sqrt(math.pi / 2.0)


@dataclass(frozen=True, eq=False)
class BinnedSeries:
    bin_width: float
    values: np.ndarray
    counts: np.ndarray
    total_counts: int
    duration: float

    @property
    def n_bins(self) -> int:
        return int(self.values.size)

    @property
    def frequency_resolution(self) -> float:
        return 1.0 / self.duration

    @property
    def nyquist(self) -> float:
        return 0.5 / self.bin_width


def bin_timetags(tags: TimeTagSet, bin_width: float = DEFAULT_BIN_WIDTH,
                 duration: float | None = None) -> BinnedSeries:
    """Accumulate ``L - R`` per bin; a partial trailing bin is dropped.

    ``duration`` defaults to the acquisition time recorded in the tag
    metadata, falling back to the last timestamp.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if len(tags) == 0:
        raise EmptyTagSet("no time tags to bin")
    if duration is None:
        acq = tags.metadata.get("source.acquisition_time")
        duration = float(acq) if acq is not None else (int(tags.timestamps[-1]) + 1) * 1e-9
    bin_ns = int(round(bin_width * 1e9))
    n_bins = int(round(duration * 1e9)) // bin_ns
    if n_bins < 1:
        raise ValueError("acquisition shorter than one bin")
    idx = tags.timestamps // bin_ns
    keep = idx < n_bins
    idx = idx[keep]
    right = tags.detectors[keep].astype(bool)
    n_right = np.bincount(idx[right], minlength=n_bins)
    n_left = np.bincount(idx[~right], minlength=n_bins)
    counts = n_left + n_right
    return BinnedSeries(bin_ns * 1e-9, (n_left - n_right).astype(np.int64),
                        counts.astype(np.int64), int(counts.sum()), n_bins * bin_ns * 1e-9)


def dft_at(values, frequency: float, bin_width: float) -> complex:
    """``sum_i v_i exp(-2 pi i f t_i)`` with ``t_i = i * bin_width``."""
    v = np.asarray(values, dtype=float)
    cycles = np.mod(frequency * bin_width * np.arange(v.size), 1.0)
    return complex(np.dot(v, np.exp(-2j * np.pi * cycles)))


def dft_band(values, f_start: float, spacing: float, n: int, bin_width: float) -> np.ndarray:
    """DFT at ``f_start + j * spacing`` for ``j = 0..n-1`` via the chirp-z transform."""
    v = np.asarray(values, dtype=float)
    w = np.exp(-2j * np.pi * spacing * bin_width)
    a = np.exp(2j * np.pi * f_start * bin_width)
    return sps.czt(v, m=n, w=w, a=a)


def _normalized_amplitude(series: BinnedSeries, frequency: float) -> float:
    if series.total_counts <= 0:
        raise EmptyTagSet("series holds no counts")
    return AMPLITUDE_SCALE * abs(dft_at(series.values, frequency, series.bin_width)) / series.total_counts


def extract_signal(series: BinnedSeries, drive_frequency: float) -> float:
    """Peak-to-peak displacement (in beam widths) at ``drive_frequency``."""
    if series.duration < 2.0 / drive_frequency:
        raise FrequencyUnresolvable(
            f"{series.duration} s spans fewer than two periods of {drive_frequency} Hz")
    if drive_frequency >= series.nyquist:
        raise FrequencyUnresolvable(f"{drive_frequency} Hz is above the bin Nyquist rate")
    return _normalized_amplitude(series, drive_frequency)


def offset_frequencies(drive_frequency: float, n_offsets: int, spacing: float) -> np.ndarray:
    """``n_offsets`` frequencies centred on the drive, excluding it."""
    below = n_offsets // 2
    steps = np.concatenate([np.arange(-below, 0), np.arange(1, n_offsets - below + 1)])
    return drive_frequency + spacing * steps


def noise_floor(series: BinnedSeries, drive_frequency: float, n_offsets: int = 100,
                offset_spacing: float | None = None) -> float:
    """RMS normalized amplitude at ``n_offsets`` off-drive frequencies."""
    if n_offsets < 1:
        raise OffsetsOutOfBand("need at least one offset frequency")
    spacing = series.frequency_resolution if offset_spacing is None else offset_spacing
    if not spacing > 0:
        raise OffsetsOutOfBand("offset spacing must be positive")
    freqs = offset_frequencies(drive_frequency, n_offsets, spacing)
    if freqs.min() <= 0 or freqs.max() >= series.nyquist:
        raise OffsetsOutOfBand(
            f"offsets span {freqs.min():.6g}..{freqs.max():.6g} Hz, outside (0, {series.nyquist:g})")
    if series.total_counts <= 0:
        raise EmptyTagSet("series holds no counts")
    below = n_offsets // 2
    band = dft_band(series.values, freqs[0], spacing, n_offsets + 1, series.bin_width)
    band = np.delete(band, below)
    amps = AMPLITUDE_SCALE * np.abs(band) / series.total_counts
    return float(np.sqrt(np.mean(amps ** 2)))


@dataclass(frozen=True)
class SpectrumResult:
    signal_amplitude: float
    noise_floor: float
    snr: float
    detected_photons: int
    drive_frequency: float
    frequency_resolution: float
    photon_detections: int

    @property
    def signal_counts(self) -> float:
        """Signal in count units: the normalized amplitude times the total count."""
        return self.signal_amplitude * self.detected_photons

    def to_dict(self) -> dict:
        return asdict(self)


def measure_snr(tags: TimeTagSet, drive_frequency: float | None = None,
                bin_width: float = DEFAULT_BIN_WIDTH, n_offsets: int = 100,
                offset_spacing: float | None = None) -> SpectrumResult:
    """Signal, noise floor and SNR at the drive frequency.

    ``detected_photons`` is every binned record, dark counts included;
    ``photon_detections`` keeps only records with a known pass index.
    """
    if drive_frequency is None:
        drive_frequency = float(tags.metadata["drive.drive_frequency"])
    series = bin_timetags(tags, bin_width)
    signal = extract_signal(series, drive_frequency)
    noise = noise_floor(series, drive_frequency, n_offsets, offset_spacing)
    if noise > 0:
        snr = signal / noise
    elif signal == 0:
        snr = 0.0
    else:
        raise ValueError("noise floor is zero with a nonzero signal; SNR is unbounded")
    in_window = tags.timestamps < int(round(series.duration * 1e9))
    photons = int(np.count_nonzero(tags.photon_mask & in_window))
    return SpectrumResult(signal, noise, snr, series.total_counts, drive_frequency,
                          series.frequency_resolution, photons)


def rice_std(signal_rms: float, noise_floor: float) -> float:
    """Std of ``|s + Z|`` for complex Gaussian ``Z`` with ``E|Z|^2 = noise_floor^2``."""
    scale = noise_floor / math.sqrt(2.0)
    if scale == 0:
        return 0.0
    return float(stats.rice.std(signal_rms / scale, scale=scale))


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least-squares slope of ``y = m x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size == 0:
        raise ValueError("x and y must be non-empty and of equal length")
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y)) / sxx
    if x.size < 2:
        return slope, float("nan")
    resid = y - slope * x
    return slope, math.sqrt(float(np.dot(resid, resid)) / (x.size - 1) / sxx)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class RepeatabilityReport:
    results: tuple
    mean_signal: float
    std_signal: float
    predicted_std: float
    excess_noise: bool

    @property
    def std_ratio(self) -> float:
        return self.std_signal / self.predicted_std if self.predicted_std else float("inf")


def repeatability_check(config, n_repeats: int = 20, workers: int = 1,
                        bin_width: float = DEFAULT_BIN_WIDTH) -> RepeatabilityReport:
    """Repeat one acquisition with derived seeds and compare the scatter to shot noise.

    The prediction is the Rice-distribution std of ``|s + noise|`` using the
    mean noise floor and the moment estimate ``s^2 = <A^2> - floor^2``.
    ``excess_noise`` is set when the sample std exceeds it by more than 50 %.
    """
    from .montecarlo import derive_seed, simulate_config

    if n_repeats < 2:
        raise ValueError("need at least two repeats")
    results = []
    for i in range(n_repeats):
        tags = simulate_config(config.replace(seed=derive_seed(config.seed, i)), workers)
        results.append(measure_snr(tags, bin_width=bin_width))
    amps = np.array([r.signal_amplitude for r in results])
    floor_sq = float(np.mean([r.noise_floor ** 2 for r in results]))
    s_rms = math.sqrt(max(float(np.mean(amps ** 2)) - floor_sq, 0.0))
    predicted = rice_std(s_rms, math.sqrt(floor_sq))
    std = float(amps.std(ddof=1))
    return RepeatabilityReport(tuple(results), float(amps.mean()), std, predicted,
                               std > 1.5 * predicted)
