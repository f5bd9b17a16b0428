"""Photon-level Monte Carlo of the three measurement modes.

Each pulse carries a Poisson number of photons.  A photon enters the loop
at a transverse position ``x`` drawn from the Gaussian input profile; on
every pass it survives the optical loss with probability ``1 - gamma`` and
then leaves through the dark port with probability ``sin^2(phi/2 - k y)``
(``y`` its current position, mirrored each pass when the loop flips
parity).  Detected photons are a thinned Poisson process, so instead of
walking every input photon we draw candidates at a bounded rate and accept
each with its total exit probability; the pass index is then drawn from the
per-pass weights.  The law of the accepted photons is exactly the per-pass
density of :mod:`recycled_wva.reshaping`.

Random numbers come from counter-based Philox streams keyed by the seed.
Pulses are processed in fixed blocks of ``BLOCK_PULSES`` and block ``b``
always uses the stream jumped ``b`` times, so output does not depend on how
blocks are spread over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtr

from .config import (
    SPEED_OF_LIGHT,
    ConventionalOptics,
    DetectorModel,
    InterferometerParams,
    MirrorDrive,
    Mode,
    SimulationConfig,
    SourceParams,
)
from .errors import InvalidConfig
from .model import detected_fraction_per_pass
from .timetags import LEFT, RIGHT, UNKNOWN_PASS, TimeTagSet

BLOCK_PULSES = 1 << 16
_PHOTON_STREAM = 0
_DARK_STREAM = 1
_TAIL_SIGMAS = 8.0


def loop_delay(length: float) -> float:
    """Round-trip delay in nanoseconds of a recycling loop ``length`` meters long."""
    if not length > 0:
        raise ValueError("loop length must be positive")
    return length / SPEED_OF_LIGHT * 1e9


def stream(seed: int, stream_id: int, block: int = 0) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), stream_id]).generate_state(2, np.uint64)
    bitgen = np.random.Philox(key=key)
    if block:
        bitgen = bitgen.jumped(block)
    return np.random.Generator(bitgen)


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for repeat/sweep index ``path``."""
    return int(np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(1, np.uint64)[0])


def pass_weights(x, k, interferometer: InterferometerParams):
    """Per-pass exit probabilities for photons entering at ``x`` with kick ``k``.

    Returns ``(w, sign)`` where ``w[i, j]`` is the probability that photon
    ``i`` is detected on pass ``j + 1`` and ``sign[j]`` maps the entry
    position to the position on that pass (``-1`` on mirrored passes).
    """
    x = np.asarray(x, dtype=float)
    k = np.broadcast_to(np.asarray(k, dtype=float), x.shape)
    r = interferometer.max_passes
    keep = 1.0 - interferometer.gamma
    half = interferometer.phi / 2
    sign = np.ones(r)
    if interferometer.parity_flip:
        sign[1::2] = -1.0
    w = np.empty(x.shape + (r,))
    alive = np.ones_like(x)
    cache = {}
    for j in range(r):
        s = sign[j]
        if s not in cache:
            u = half - s * k * x
            cache[s] = (np.sin(u) ** 2, np.cos(u) ** 2)
        exit_p, stay_p = cache[s]
        alive = alive * keep
        w[..., j] = alive * exit_p
        alive = alive * stay_p
    return w, sign


def _exit_bound(interferometer: InterferometerParams, k_max: float) -> float:
    """Upper bound on the total exit probability for |x| <= 8 sigma, |k| <= k_max."""
    extent = _TAIL_SIGMAS * interferometer.beam_sigma
    if k_max == 0:
        w, _ = pass_weights(np.zeros(1), 0.0, interferometer)
        return float(w.sum())
    x = np.linspace(-extent, extent, 4001)
    w, _ = pass_weights(x, k_max, interferometer)
    return min(1.0, 1.01 * float(w.sum(axis=1).max()))


def _dead_zone_mass(center: float, sigma: float, detector: DetectorModel) -> float:
    h = detector.dead_zone_width / 2
    e = detector.knife_edge_position
    return float(ndtr((e + h - center) / sigma) - ndtr((e - h - center) / sigma))


def expected_detections(config: SimulationConfig) -> float:
    """Mean photon detections (dark counts excluded) at zero tilt."""
    src, det, ifo = config.source, config.detector, config.interferometer
    n_in = src.mean_photons_per_pulse * src.n_pulses * det.efficiency
    if config.mode is Mode.CONVENTIONAL:
        frac, sigma = 1.0 - ifo.gamma, config.conventional.beam_sigma
    else:
        frac = float(detected_fraction_per_pass(ifo.for_mode(config.mode).recycling()).sum())
        sigma = det.detector_sigma
    return n_in * frac * (1.0 - _dead_zone_mass(0.0, sigma, det))


def _weak_candidates(rng, pulse_kicks, interferometer, bound):
    """Accepted entry positions, pass indices and detector-frame positions."""
    n = pulse_kicks.size
    x = rng.normal(0.0, interferometer.beam_sigma, n)
    accept_u = rng.random(n)
    pass_u = rng.random(n)
    w, sign = pass_weights(x, pulse_kicks, interferometer)
    total = w.sum(axis=1)
    accepted = accept_u * bound < total
    cum = np.cumsum(w[accepted], axis=1)
    target = pass_u[accepted] * total[accepted]
    idx = np.minimum((cum < target[:, None]).sum(axis=1), interferometer.max_passes - 1)
    y = x[accepted] * sign[idx]
    return accepted, idx + 1, y


def sample_detected_positions(n: int, tilt: float, interferometer: InterferometerParams,
                              seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Debug tap: ``n`` detected positions (tilt-mirror frame, before the PSD) and passes.

    Uses the same sampler as :func:`simulate` at a constant tilt.
    """
    rng = stream(seed, 2)
    k = interferometer.kick(tilt)
    bound = _exit_bound(interferometer, abs(k))
    ys, ps = [], []
    got = 0
    while got < n:
        m = min(int(1.2 * (n - got) / bound) + 64, BLOCK_PULSES)
        acc, passes, y = _weak_candidates(rng, np.full(m, k), interferometer, bound)
        ys.append(y)
        ps.append(passes)
        got += y.size
    return np.concatenate(ys)[:n], np.concatenate(ps)[:n]


class _Run:
    """Everything a block worker needs; immutable after construction."""

    def __init__(self, mode, source, drive, interferometer, detector, conventional, seed):
        self.mode = Mode(mode)
        self.source, self.drive = source, drive
        self.ifo, self.det, self.conv = interferometer, detector, conventional
        self.seed = int(seed)
        self.n_pulses = source.n_pulses
        self.period_ns = 1e9 / source.pulse_rate
        self.delay_ns = loop_delay(interferometer.loop_length)
        if self.mode is Mode.CONVENTIONAL:
            self.bound = 1.0
            self.rate = source.mean_photons_per_pulse * detector.efficiency * (1 - interferometer.gamma)
        else:
            k_max = abs(interferometer.kick(drive.tilt_amplitude_peak))
            self.bound = _exit_bound(interferometer, k_max)
            self.rate = source.mean_photons_per_pulse * detector.efficiency * self.bound

    def block(self, b):
        rng = stream(self.seed, _PHOTON_STREAM, b)
        start = b * BLOCK_PULSES
        stop = min(self.n_pulses, start + BLOCK_PULSES)
        n = rng.poisson(self.rate * (stop - start))
        pulse = np.sort(rng.integers(start, stop, size=n))
        tilt = self.drive.tilt(pulse / self.source.pulse_rate)
        if self.mode is Mode.CONVENTIONAL:
            pos = self.conv.displacement(tilt) + rng.normal(0.0, self.conv.beam_sigma, n)
            passes = np.ones(n, dtype=np.int16)
            t_ns = np.rint(pulse * self.period_ns)
        else:
            accepted, passes, y = _weak_candidates(rng, self.ifo.kick(tilt), self.ifo, self.bound)
            pulse = pulse[accepted]
            pos = y * (self.det.detector_sigma / self.ifo.beam_sigma)
            t_ns = np.rint(pulse * self.period_ns + passes * self.delay_ns)
        edge = self.det.knife_edge_position
        live = np.abs(pos - edge) >= self.det.dead_zone_width / 2
        t_ns = t_ns[live].astype(np.int64)
        dets = np.where(pos[live] < edge, LEFT, RIGHT).astype(np.uint8)
        passes = np.asarray(passes)[live].astype(np.int16)
        order = np.argsort(t_ns, kind="stable")
        return t_ns[order], dets[order], passes[order]

    def dark_counts(self):
        rng = stream(self.seed, _DARK_STREAM)
        duration_ns = self.source.acquisition_time * 1e9
        out = []
        for det in (LEFT, RIGHT):
            n = rng.poisson(self.det.dark_count_rate * self.source.acquisition_time)
            t = np.floor(rng.random(n) * duration_ns).astype(np.int64)
            out.append((t, np.full(n, det, np.uint8), np.full(n, UNKNOWN_PASS, np.int16)))
        return out


def _check_mode(mode: Mode, interferometer: InterferometerParams):
    if mode in (Mode.SINGLE, Mode.CONVENTIONAL) and interferometer.max_passes != 1:
        raise InvalidConfig(f"{mode.value} mode requires max_passes = 1, "
                            f"got {interferometer.max_passes}")
    if mode is Mode.CONVENTIONAL and interferometer.parity_flip:
        raise InvalidConfig("conventional mode has no recycling loop to flip")


def simulate(mode, source: SourceParams, drive: MirrorDrive,
             interferometer: InterferometerParams, detector: DetectorModel, seed: int,
             conventional: ConventionalOptics | None = None, workers: int = 1) -> TimeTagSet:
    """Simulate one acquisition and return its time tags.

    The result is a pure function of the arguments other than ``workers``.
    """
    mode = Mode(mode)
    conventional = conventional or ConventionalOptics()
    _check_mode(mode, interferometer)
    if workers < 1:
        raise InvalidConfig("workers must be >= 1")
    cfg = SimulationConfig(mode, source, drive, interferometer, detector, conventional, seed)
    run = _Run(mode, source, drive, interferometer, detector, conventional, seed)
    n_blocks = -(-run.n_pulses // BLOCK_PULSES)
    if workers == 1 or n_blocks <= 1:
        parts = [run.block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run.block, range(n_blocks)))
    parts.extend(run.dark_counts())
    t = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
    d = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, np.uint8)
    p = np.concatenate([p[2] for p in parts]) if parts else np.empty(0, np.int16)
    order = np.argsort(t, kind="stable")
    return TimeTagSet(t[order], d[order], p[order], cfg.to_flat())


def simulate_config(config: SimulationConfig, workers: int = 1) -> TimeTagSet:
    return simulate(config.mode, config.source, config.drive, config.interferometer,
                    config.detector, config.seed, config.conventional, workers)


def mode_config(config: SimulationConfig, mode) -> SimulationConfig:
    """``config`` switched to ``mode`` with the matching pass count."""
    mode = Mode(mode)
    return config.replace(mode=mode, interferometer=config.interferometer.for_mode(mode))
