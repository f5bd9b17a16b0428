"""Closed-form weak-value and photon-recycling quantities.

The two-path system is the pair of counter-propagating Sagnac modes
``{CW, CCW}``.  States are normalized two-component complex vectors and
observables are Hermitian 2x2 matrices in that basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveWidth, OverlapZero, ZeroPostselection

_NORM_TOL = 1e-12
_OVERLAP_TOL = 1e-14


@dataclass(frozen=True)
class TwoPathState:
    """Normalized ket ``amp_cw |CW> + amp_ccw |CCW>``."""

    amp_cw: complex
    amp_ccw: complex

    def __post_init__(self):
        norm = abs(self.amp_cw) ** 2 + abs(self.amp_ccw) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_cw, self.amp_ccw], dtype=complex)

    @classmethod
    def sagnac_initial(cls, phi: float) -> "TwoPathState":
        """State inside the interferometer for a relative phase ``phi``."""
        s = 1 / math.sqrt(2)
        return cls(s * complex(math.cos(phi / 2), math.sin(phi / 2)),
                   s * 1j * complex(math.cos(phi / 2), -math.sin(phi / 2)))

    @classmethod
    def sagnac_dark_port(cls) -> "TwoPathState":
        """Ket whose bra ``(<CW| + i<CCW|)/sqrt(2)`` is the dark-port projection."""
        s = 1 / math.sqrt(2)
        return cls(complex(s, 0.0), complex(0.0, -s))


@dataclass(frozen=True)
class PathOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("path operator must be 2x2")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=_NORM_TOL):
            raise ValueError("path operator must be Hermitian")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def which_path(cls) -> "PathOperator":
        return cls(np.diag([1.0, -1.0]).astype(complex))

    @classmethod
    def identity(cls) -> "PathOperator":
        return cls(np.eye(2, dtype=complex))


def overlap(f: TwoPathState, i: TwoPathState) -> complex:
    """<f|i>."""
    return complex(np.vdot(f.vector, i.vector))


def weak_value(i: TwoPathState, f: TwoPathState, a: PathOperator) -> complex:
    """Return ``<f|A|i> / <f|i>``.

    Raises
    ------
    OverlapZero
        If ``|<f|i>| < 1e-14``; the weak value diverges there.
    """
    den = overlap(f, i)
    if abs(den) < _OVERLAP_TOL:
        raise OverlapZero(f"|<f|i>| = {abs(den):.3e} is below {_OVERLAP_TOL:g}")
    num = complex(np.vdot(f.vector, a.matrix @ i.vector))
    # num * conj(den) / |den|^2 gives exactly 1 when num == den; complex "/" does not
    prod = num * den.conjugate()
    norm = den.real * den.real + den.imag * den.imag
    return complex(prod.real / norm, prod.imag / norm)


def postselection_probability(phi: float) -> float:
    if not math.isfinite(phi):
        raise ValueError("phi must be finite")
    return math.sin(phi / 2) ** 2


def quantum_limited_snr(g: float, n: float, sigma: float) -> float:
    """SNR ``g sqrt(N) / sigma`` of a shot-noise-limited meter."""
    if sigma <= 0:
        raise NonPositiveWidth(f"sigma must be positive, got {sigma!r}")
    if n < 0:
        raise ValueError("photon count must be non-negative")
    return g * math.sqrt(n) / sigma


@dataclass(frozen=True)
class RecyclingParams:
    """Post-selection probability ``p``, per-pass loss ``gamma``, pass count ``r``."""

    p: float
    gamma: float = 0.0
    r: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma!r}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r!r}")
        object.__setattr__(self, "r", int(self.r))

    @classmethod
    def from_phase(cls, phi: float, gamma: float = 0.0, r: int = 1) -> "RecyclingParams":
        return cls(postselection_probability(phi), gamma, r)


def _require_lossless(params: RecyclingParams):
    if params.gamma != 0.0:
        raise ValueError("closed form holds for gamma = 0 only; "
                         "use detected_fraction_per_pass for lossy loops")


def recycled_power_fraction(params: RecyclingParams) -> float:
    """Fraction ``1 - (1-p)^r`` of the input reaching the detector (lossless)."""
    _require_lossless(params)
    return 1.0 - (1.0 - params.p) ** params.r


def snr_gain(params: RecyclingParams) -> float:
    """Recycled-over-single-pass SNR gain ``sqrt((1 - (1-p)^r) / p)``."""
    _require_lossless(params)
    if params.p == 0.0:
        raise ZeroPostselection("gain is 0/0 at p = 0; use snr_gain_small_p")
    # expm1/log1p keep precision when p is tiny
    frac = -math.expm1(params.r * math.log1p(-params.p)) if params.p < 1 else 1.0
    return math.sqrt(frac / params.p)


def snr_gain_limit(p: float) -> float:
    """``r -> inf`` limit of :func:`snr_gain`."""
    if p <= 0:
        raise ZeroPostselection("limit diverges at p = 0")
    return 1.0 / math.sqrt(p)


def snr_gain_small_p(p: float, r: int) -> float:
    """First-order expansion ``sqrt(r) (1 - (r-1) p / 4)``."""
    if p * (r - 1) >= 1:
        raise ValueError("expansion requires p (r - 1) < 1")
    return math.sqrt(r) * (1.0 - (r - 1) * p / 4.0)


def detected_fraction_per_pass(params: RecyclingParams) -> np.ndarray:
    """Fraction of input photons detected on each pass ``n = 1..r``.

    One full loop of loss precedes every post-selection, so pass ``n``
    detects ``p (1-gamma)^n [(1-p)(1-gamma)]^(n-1)``.
    """
    p, g = params.p, params.gamma
    n = np.arange(1, params.r + 1)
    return p * (1 - g) * ((1 - p) * (1 - g)) ** (n - 1)


def count_boost(params: RecyclingParams) -> float:
    """Total detections over all passes relative to the first pass."""
    f = detected_fraction_per_pass(params)
    if f[0] == 0:
        raise ZeroPostselection("no photons detected on the first pass")
    return float(f.sum() / f[0])
