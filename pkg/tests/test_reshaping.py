import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from recycled_wva import model, reshaping
from recycled_wva.config import InterferometerParams
from recycled_wva.errors import EmptyProfile, LossyFlipUnsupported, NonPositiveWidth
from recycled_wva.reshaping import BeamProfile, ReshapingParams

SIGMA = 86e-6
PHI = 0.35
GAMMA = 0.16
K_MAX = InterferometerParams().kick(7.5e-6)
TILTS = np.array([1.5, 3.0, 4.5, 6.0, 7.5]) * 1e-6


@pytest.fixture(scope="module")
def n0():
    return BeamProfile.gaussian(SIGMA)


def _oracle_moments(k, r, gamma=GAMMA, phi=PHI, sigma=SIGMA):
    """(count, first moment) of the r-pass accumulated density by adaptive quadrature."""
    def dens(x):
        u = phi / 2 - k * x
        s2, c2 = math.sin(u) ** 2, math.cos(u) ** 2
        tot = sum((1 - gamma) ** j * s2 * c2 ** (j - 1) for j in range(1, r + 1))
        return tot * math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    lim = 6 * sigma
    n = integrate.quad(dens, -lim, lim, epsabs=0, epsrel=1e-12, limit=200)[0]
    m = integrate.quad(lambda x: x * dens(x), -lim, lim, epsabs=0, epsrel=1e-12, limit=200)[0]
    return n, m


class TestBeamProfile:
    def test_gaussian_normalization(self):
        prof = BeamProfile.gaussian(SIGMA, n_total=1e6)
        assert prof.total() == pytest.approx(1e6, rel=1e-6)
        assert prof.n_points == 4097
        assert prof.x[2048] == 0.0

    def test_validation(self):
        with pytest.raises(NonPositiveWidth):
            BeamProfile.gaussian(0.0)
        with pytest.raises(ValueError):
            BeamProfile(0.0, 1.0, np.array([1.0, -1.0, 1.0]))
        with pytest.raises(ValueError):
            BeamProfile(0.0, 1.0, np.ones(2))

    def test_density_read_only(self, n0):
        with pytest.raises(ValueError):
            n0.density[0] = 1.0

    def test_strong_coupling_flag(self):
        assert not ReshapingParams(PHI, K_MAX).strong_coupling(SIGMA)
        assert ReshapingParams(PHI, 0.6 / SIGMA).strong_coupling(SIGMA)


class TestKick:
    def test_angular_width_conversion(self):
        assert reshaping.kick_from_angular_width(7.5e-6, SIGMA, 0.94e-3) == pytest.approx(
            7.5e-6 / (2 * 86e-6 * 0.94e-3))
        assert K_MAX * SIGMA == pytest.approx(0.00399, abs=1e-5)

    def test_mirror_conversion(self):
        assert reshaping.kick_from_mirror(1e-6, 690e-9) == pytest.approx(4 * math.pi / 0.69)


class TestDensityPass:
    def test_zero_kick_scales_by_p(self, n0):
        out = reshaping.density_pass(n0, ReshapingParams(PHI, 0.0), 1)
        assert out.density == pytest.approx(n0.density * model.postselection_probability(PHI),
                                            rel=1e-14)

    def test_phi_pi_passes_everything(self, n0):
        out = reshaping.density_pass(n0, ReshapingParams(math.pi, 0.0), 1)
        np.testing.assert_allclose(out.density, n0.density, rtol=1e-15)

    def test_count_ratio_matches_geometric_oracle(self, n0):
        rec = model.RecyclingParams(model.postselection_probability(PHI), GAMMA, 10)
        f = model.detected_fraction_per_pass(rec)
        ratio = lambda k: (reshaping.density_pass(n0, ReshapingParams(PHI, k, GAMMA), 10).total()
                           / reshaping.density_pass(n0, ReshapingParams(PHI, k, GAMMA), 1).total())
        assert ratio(0.0) == pytest.approx(f[9] / f[0], rel=1e-6)
        assert ratio(K_MAX) == pytest.approx(f[9] / f[0], rel=1e-2)

    def test_pass_index_validated(self, n0):
        with pytest.raises(ValueError):
            reshaping.density_pass(n0, ReshapingParams(PHI, 0.0), 0)


class TestAccumulated:
    def test_equals_explicit_sum(self, n0):
        for params in (ReshapingParams(PHI, K_MAX, GAMMA), ReshapingParams(PHI, 50 * K_MAX, 0.0),
                       ReshapingParams(PHI, K_MAX, GAMMA, parity_flip=True)):
            acc = reshaping.density_accumulated(n0, params, 27).density
            direct = sum(reshaping.density_pass(n0, params, j).density for j in range(1, 28))
            np.testing.assert_allclose(acc, direct, rtol=1e-10, atol=0)

    def test_single_pass_identity(self, n0):
        p = ReshapingParams(PHI, K_MAX, GAMMA)
        assert np.array_equal(reshaping.density_accumulated(n0, p, 1).density,
                              reshaping.density_pass(n0, p, 1).density)

    def test_nominal_fraction(self, n0):
        frac = reshaping.density_accumulated(n0, ReshapingParams(PHI, 0.0, GAMMA), 27).total()
        oracle = model.detected_fraction_per_pass(
            model.RecyclingParams(model.postselection_probability(PHI), GAMMA, 27)).sum()
        assert frac == pytest.approx(oracle, rel=1e-6)
        # p (1-g) (1 - q^27) / (1 - q) with q = (1-p)(1-g)
        assert frac == pytest.approx(0.13676, abs=1e-4)

    def test_singular_points(self):
        # phi/2 - k x hits 0 exactly at the grid node x = 0 when phi = 0
        prof = BeamProfile.gaussian(1.0, n_points=11)
        for gamma in (0.0, 0.2):
            p = ReshapingParams(0.0, 0.3, gamma)
            acc = reshaping.density_accumulated(prof, p, 7).density
            direct = sum(reshaping.density_pass(prof, p, j).density for j in range(1, 8))
            np.testing.assert_allclose(acc, direct, rtol=1e-10, atol=1e-300)
            assert acc[5] == 0.0

    def test_difference_is_pass_density(self, n0):
        p = ReshapingParams(PHI, 20 * K_MAX, GAMMA)
        for r in (2, 5, 27, 40):
            diff = (reshaping.density_accumulated(n0, p, r).density
                    - reshaping.density_accumulated(n0, p, r - 1).density)
            ref = reshaping.density_pass(n0, p, r).density
            scale = reshaping.density_accumulated(n0, p, r).density
            assert np.all(np.abs(diff - ref) <= 1e-10 * scale + 1e-300)

    def test_lossless_all_photons_exit(self, n0):
        acc = reshaping.density_accumulated(n0, ReshapingParams(PHI, K_MAX, 0.0), 10_000)
        assert acc.total() == pytest.approx(n0.total(), rel=1e-6)


@settings(max_examples=300, deadline=None)
@given(phi=st.floats(1e-3, math.pi - 1e-3), ks=st.floats(0, 1), gamma=st.floats(0, 0.5,
       exclude_max=True), r=st.integers(1, 50), flip=st.booleans())
def test_densities_nonnegative(phi, ks, gamma, r, flip):
    prof = BeamProfile.gaussian(1.0, n_points=201)
    p = ReshapingParams(phi, ks, gamma, flip)
    assert np.all(reshaping.density_pass(prof, p, r).density >= 0)
    acc = reshaping.density_accumulated(prof, p, r)
    assert np.all(acc.density >= 0)
    if not flip:
        assert np.all(reshaping.density_infinite(prof, p).density >= 0)
    if gamma == 0:
        assert np.all(reshaping.density_flipped_infinite(prof, p).density >= 0)


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(1e-3, math.pi - 1e-3), ks=st.floats(0, 1), gamma=st.floats(0, 0.5),
       r=st.integers(1, 49))
def test_integrated_count_monotone_bounded(phi, ks, gamma, r):
    prof = BeamProfile.gaussian(1.0, n_points=201)
    p = ReshapingParams(phi, ks, min(gamma, 0.499))
    a = reshaping.density_accumulated(prof, p, r).total()
    b = reshaping.density_accumulated(prof, p, r + 1).total()
    assert a <= b * (1 + 1e-12)
    assert b <= prof.total() * (1 + 1e-12)


class TestInfinite:
    def test_lossless_recovers_input(self, n0):
        out = reshaping.density_infinite(n0, ReshapingParams(PHI, K_MAX, 0.0))
        assert np.array_equal(out.density, n0.density)
        assert reshaping.centroid_shift(out) == reshaping.centroid_shift(n0)

    def test_lossy_is_large_r_limit(self, n0):
        p = ReshapingParams(PHI, 0.0, GAMMA)
        inf = reshaping.density_infinite(n0, p).density
        acc = reshaping.density_accumulated(n0, p, 200).density
        np.testing.assert_allclose(acc, inf, rtol=1e-10)

    def test_total_loss_limit(self, n0):
        out = reshaping.density_infinite(n0, ReshapingParams(PHI, K_MAX, 1 - 1e-12))
        assert out.density.max() < 1e-8 * n0.density.max()

    def test_rejects_flip(self, n0):
        with pytest.raises(ValueError):
            reshaping.density_infinite(n0, ReshapingParams(PHI, K_MAX, 0.0, True))


class TestFlipped:
    def test_zero_kick_identity(self, n0):
        for phi in (0.05, PHI, 1.0, 3.0):
            out = reshaping.density_flipped_infinite(n0, ReshapingParams(phi, 0.0))
            np.testing.assert_allclose(out.density, n0.density, rtol=1e-12)

    def test_rejects_loss(self, n0):
        with pytest.raises(LossyFlipUnsupported):
            reshaping.density_flipped_infinite(n0, ReshapingParams(PHI, K_MAX, 0.1))

    def test_parity_symmetry(self, n0):
        a = reshaping.density_flipped_infinite(n0, ReshapingParams(PHI, 30 * K_MAX)).density
        b = reshaping.density_flipped_infinite(n0, ReshapingParams(PHI, -30 * K_MAX)).density
        np.testing.assert_allclose(a, b[::-1], rtol=1e-10)

    def test_recovers_single_pass_shift(self, n0):
        p = ReshapingParams(PHI, K_MAX)
        flipped = reshaping.centroid_shift(reshaping.density_flipped_infinite(n0, p))
        single = reshaping.centroid_shift(reshaping.density_pass(n0, p, 1))
        assert flipped / single == pytest.approx(1.0, abs=0.05)

    def test_formula_matches_closed_form(self):
        prof = BeamProfile.gaussian(1.0, n_points=101)
        k = 0.2
        x = prof.x
        sm, sp = np.sin(PHI / 2 - k * x) ** 2, np.sin(PHI / 2 + k * x) ** 2
        expect = prof.density * sm * (1 + (1 - sm)) / (1 - (1 - sm) * (1 - sp))
        out = reshaping.density_flipped_infinite(prof, ReshapingParams(PHI, k)).density
        np.testing.assert_allclose(out, expect, rtol=1e-12)


class TestCentroid:
    def test_symmetric_zero(self, n0):
        assert abs(reshaping.centroid_shift(n0)) < 1e-20

    def test_shifted(self):
        d = 3e-6
        prof = BeamProfile.gaussian(SIGMA, center=d)
        assert reshaping.centroid_shift(prof) == pytest.approx(d, abs=(prof.spacing) / 100)

    def test_empty(self, n0):
        with pytest.raises(EmptyProfile):
            reshaping.centroid_shift(n0.scaled(0.0))

    def test_grid_refinement(self):
        p = ReshapingParams(PHI, K_MAX, GAMMA)
        coarse = BeamProfile.gaussian(SIGMA)
        fine = BeamProfile.gaussian(SIGMA, n_points=8193)
        a = reshaping.centroid_shift(reshaping.density_accumulated(coarse, p, 27))
        b = reshaping.centroid_shift(reshaping.density_accumulated(fine, p, 27))
        assert abs(a - b) < 1e-8 * SIGMA

    def test_against_quadrature_oracle(self, n0):
        for r in (1, 27):
            n, m = _oracle_moments(K_MAX, r)
            prof = reshaping.density_accumulated(n0, ReshapingParams(PHI, K_MAX, GAMMA), r)
            assert prof.total() == pytest.approx(n, rel=1e-8)
            assert reshaping.centroid_shift(prof) == pytest.approx(m / n, rel=1e-6)


class TestBoosts:
    # frozen from the adaptive-quadrature oracle at the default apparatus values
    SIGNAL_BOOST = 4.6502
    SNR_BOOST = 2.0067

    def test_oracle_values(self):
        n1, m1 = _oracle_moments(K_MAX, 1)
        nr, mr = _oracle_moments(K_MAX, 27)
        assert mr / m1 == pytest.approx(self.SIGNAL_BOOST, abs=1e-3)
        assert (mr / nr * math.sqrt(nr)) / (m1 / n1 * math.sqrt(n1)) == pytest.approx(
            self.SNR_BOOST, abs=1e-3)

    def test_signal_and_snr_boost(self, n0):
        p = ReshapingParams(PHI, K_MAX, GAMMA)
        assert reshaping.signal_boost(n0, p, 27) == pytest.approx(self.SIGNAL_BOOST, abs=1e-3)
        assert reshaping.reshaped_snr_boost(n0, p, 27, 20e-6) == pytest.approx(self.SNR_BOOST,
                                                                                 abs=1e-3)
        assert reshaping.reshaped_snr_boost(n0, p, 1, 20e-6) == 1.0

    def test_sweep(self, n0):
        ifo = InterferometerParams()
        out = reshaping.sweep_boosts(n0, ifo.reshaping(), [ifo.kick(t) for t in TILTS], 27)
        assert out.count_boost == pytest.approx(5.370, abs=2e-3)
        assert out.shift_ratio == pytest.approx(0.866, abs=2e-3)
        assert out.signal_boost == pytest.approx(self.SIGNAL_BOOST, abs=2e-3)
        assert out.snr_boost == pytest.approx(self.SNR_BOOST, abs=2e-3)
        one = reshaping.sweep_boosts(n0, ifo.reshaping(), [ifo.kick(t) for t in TILTS], 1)
        assert one.signal_boost == pytest.approx(1.0) and one.snr_boost == pytest.approx(1.0)

    def test_lossless_reshaping_penalty(self, n0):
        boost = reshaping.reshaped_snr_boost(n0, ReshapingParams(PHI, K_MAX, 0.0), 27, 20e-6)
        assert boost < model.snr_gain(model.RecyclingParams(0.03, 0, 27))
        assert boost < model.snr_gain(model.RecyclingParams(model.postselection_probability(PHI),
                                                            0, 27))

    def test_zero_kick_undefined(self, n0):
        with pytest.raises(ValueError):
            reshaping.signal_boost(n0, ReshapingParams(PHI, 0.0, GAMMA), 27)
