import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import QubitClosedForm, brute_sorted
from finitebath import bath as bath_mod
from finitebath.bath import (
    BathSpec,
    SiteSpectrum,
    build_sorted_spectrum,
    compositions,
    entropy_of,
    gibbs_site_probs,
    moments,
    multinomial,
    sorted_value_at,
    type_classes,
)
from finitebath.errors import ResourceLimitError, ValidationError


def direct_moments(levels, beta):
    levels = np.asarray(levels, dtype=float)
    w = np.exp(-beta * levels)
    p = w / w.sum()
    mean = p @ levels
    var = p @ (levels - mean) ** 2
    skew = p @ (levels - mean) ** 3 / var**1.5
    return mean, var, skew, -(p @ np.log(p))


class TestSiteSpectrum:
    def test_levels_are_floats(self):
        assert SiteSpectrum((1, -1)).levels == (1.0, -1.0)

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError, match="degenerate"):
            SiteSpectrum((0.5, 0.5))

    def test_single_level_rejected(self):
        with pytest.raises(ValidationError):
            SiteSpectrum((1.0,))

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            SiteSpectrum((0.0, math.inf))

    def test_preset(self):
        assert SiteSpectrum.from_preset("qubit±1").levels == (1.0, -1.0)
        with pytest.raises(ValidationError):
            SiteSpectrum.from_preset("nope")


class TestBathSpec:
    @pytest.mark.parametrize("beta", [-0.1, math.nan, math.inf])
    def test_bad_beta(self, beta):
        with pytest.raises(ValidationError):
            BathSpec(SiteSpectrum((1, -1)), beta, 3)

    @pytest.mark.parametrize("n", [0, -2, 2.5])
    def test_bad_n(self, n):
        with pytest.raises(ValidationError):
            BathSpec(SiteSpectrum((1, -1)), 0.1, n)


class TestMoments:
    @pytest.mark.parametrize("beta", [0.0, 1 / 30, 0.7, 3.0])
    def test_two_level_closed_form(self, beta):
        m = moments(SiteSpectrum((1.0, -1.0)), beta)
        assert m.variance == pytest.approx(1 / math.cosh(beta) ** 2, rel=1e-13)
        assert m.skewness == pytest.approx(2 * math.sinh(beta), rel=1e-12, abs=1e-15)

    def test_two_level_closed_form_matches_direct_summation(self):
        beta = 0.45
        mean, var, skew, ent = direct_moments((1.0, -1.0), beta)
        assert 1 / math.cosh(beta) ** 2 == pytest.approx(var, rel=1e-13)
        assert 2 * math.sinh(beta) == pytest.approx(skew, rel=1e-12)

    def test_infinite_temperature(self):
        m = moments(SiteSpectrum((1.0, -1.0)), 0.0)
        assert m.mean_energy == 0.0
        assert m.variance == pytest.approx(1.0)
        assert m.skewness == 0.0
        assert math.isinf(m.psi_prime)

    @given(
        levels=st.lists(st.floats(-3, 3), min_size=2, max_size=5).filter(lambda v: max(v) - min(v) > 0.1),
        beta=st.floats(0.01, 2.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_against_direct_central_moments(self, levels, beta):
        m = moments(SiteSpectrum(tuple(levels)), beta)
        mean, var, skew, ent = direct_moments(levels, beta)
        assert m.mean_energy == pytest.approx(mean, abs=1e-12)
        assert m.variance == pytest.approx(var, rel=1e-9)
        assert m.skewness == pytest.approx(skew, rel=1e-7, abs=1e-9)
        assert m.site_entropy == pytest.approx(ent, rel=1e-10)

    @pytest.mark.parametrize("levels,beta", [((1.0, -1.0), 1 / 30), ((1.0, -1.0), 0.8), ((0.0, 1.0, 2.5), 0.6)])
    def test_psi_derivatives_from_cumulant_function(self, levels, beta):
        psi1, psi2 = QubitClosedForm.psi_derivatives(levels, beta)
        m = moments(SiteSpectrum(levels), beta)
        assert m.psi_prime == pytest.approx(float(psi1), rel=1e-6)
        assert m.psi_double_prime == pytest.approx(float(psi2), rel=1e-6)

    def test_psi_second_derivative_sign_follows_energy_skewness(self):
        # a positive energy skewness makes log p negatively skewed
        m = moments(SiteSpectrum((1.0, -1.0)), 0.5)
        assert m.skewness > 0 and m.psi_double_prime > 0


class TestTypeClasses:
    def test_compositions_count(self):
        assert len(list(compositions(6, 3))) == math.comb(8, 2)

    def test_multinomial(self):
        assert multinomial((2, 1, 1)) == 12

    def test_multiplicities_sum(self):
        total = sum(tc.multiplicity for tc in type_classes(BathSpec(SiteSpectrum((0, 1, 2)), 0.3, 7)))
        assert total == 3**7


class TestSortedSpectrum:
    @pytest.mark.parametrize("levels,beta,n", [((1.0, -1.0), 0.4, 10), ((0.0, 1.0, 2.7), 0.9, 6), ((1.0, -1.0), 0.0, 5)])
    def test_matches_dense_enumeration(self, levels, beta, n):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum(levels), beta, n))
        lp, energy = spec.dense()
        p_ref, e_ref = brute_sorted(levels, beta, n)
        np.testing.assert_allclose(np.exp(lp), p_ref, rtol=1e-12)
        assert spec.size == len(levels) ** n

    def test_energies_sorted_ascending(self):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((0.0, 1.0, math.sqrt(2))), 0.5, 6))
        energies = [float(e) for e in spec.block_energies]
        assert energies == sorted(energies)

    @pytest.mark.parametrize("precision,tol", [("double", 200 * 1e-15), ("extended", 1e-28)])
    def test_normalisation(self, precision, tol):
        # log-probabilities carry a relative error of about n * eps
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((1.0, -1.0)), 1 / 15, 200), precision)
        assert abs(spec.cum_probs[-1] - 1) < tol
        assert spec.cum_counts[-1] == 2**200
        assert spec.exact_counts

    def test_infinite_temperature_single_block(self):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((1.0, -1.0)), 0.0, 9))
        assert spec.num_blocks == 1 and spec.block_counts[0] == 512

    def test_equal_energy_types_merge(self):
        # 0 + 2 = 1 + 1 for two sites on an evenly spaced ladder
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((0.0, 1.0, 2.0)), 0.3, 2))
        assert spec.num_blocks == 5
        assert list(spec.block_counts) == [1, 2, 3, 2, 1]

    def test_float_counts_agree_with_exact(self, monkeypatch):
        bath = BathSpec(SiteSpectrum((1.0, -1.0)), 0.2, 300)
        exact = build_sorted_spectrum(bath, "extended")
        monkeypatch.setattr(bath_mod, "EXACT_COUNT_BIT_BUDGET", 0)
        approx = build_sorted_spectrum(bath, "extended")
        assert exact.exact_counts and not approx.exact_counts
        for a, b in zip(exact.cum_counts, approx.cum_counts):
            assert abs(approx.ictx.mpf(a) - b) <= approx.ictx.mpf(a) * mpmath.mpf(2) ** -150
        assert approx.cum_counts[-1] == approx.ictx.mpf(2) ** 300

    def test_float_counts_stay_monotone_at_large_n(self):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((1.0, -1.0)), 1 / 15, 56234), "extended")
        cum = spec.cum_counts
        assert not spec.exact_counts
        assert all(cum[i] <= cum[i + 1] for i in range(len(cum) - 1))

    def test_block_cap(self):
        with pytest.raises(ResourceLimitError):
            build_sorted_spectrum(BathSpec(SiteSpectrum((0.0, 1.0, 2.5)), 0.3, 50), max_blocks=100)

    def test_sorted_value_at(self):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((1.0, -1.0)), 0.4, 8))
        p_ref, _ = brute_sorted((1.0, -1.0), 0.4, 8)
        for index in (0, 1, 100, 255):
            assert math.exp(sorted_value_at(spec, index)) == pytest.approx(p_ref[index], rel=1e-12)
        with pytest.raises(ValidationError):
            sorted_value_at(spec, 256)

    def test_delta_log_prob(self):
        spec = build_sorted_spectrum(BathSpec(SiteSpectrum((1.0, -1.0)), 0.25, 20))
        assert float(spec.log_prob_range()) == pytest.approx(20 * 2 * 0.25, rel=1e-13)


class TestEntropy:
    def test_extensive(self):
        bath = BathSpec(SiteSpectrum((1.0, -1.0)), 0.3, 50)
        _, _, _, ent = direct_moments((1.0, -1.0), 0.3)
        assert entropy_of(bath) == pytest.approx(50 * ent, rel=1e-12)

    def test_site_probs(self):
        p = gibbs_site_probs(SiteSpectrum((1.0, -1.0)), 0.3)
        assert p.sum() == pytest.approx(1.0)
        assert p[1] / p[0] == pytest.approx(math.exp(0.6))
