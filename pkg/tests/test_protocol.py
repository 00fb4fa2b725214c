import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIG_BETA_COLD, FIG_BETA_HOT, QUBIT_LEVELS, brute_d_x, brute_d_y, brute_sorted
from finitebath.bath import SiteSpectrum, build_sorted_spectrum
from finitebath.errors import ResourceLimitError, ValidationError
from finitebath.protocol import (
    ProtocolConfig,
    ProtocolWarning,
    apply_protocol,
    apply_protocol_blockwise,
    apply_protocol_exact,
    exact_l1_distance,
    final_marginals,
    g2_swap,
    g2_swap_arrays,
    l1_residual_bound,
    product_approx_marginals,
)
from finitebath.thermo import EngineConfig, eta_thermo

QUBIT = SiteSpectrum(QUBIT_LEVELS)


def fig_config(n, m, mode="exact", q=1.0, **kw):
    return ProtocolConfig(EngineConfig.build(QUBIT, FIG_BETA_HOT, FIG_BETA_COLD, n, q), m=m, mode=mode, **kw)


def enumerate_joint(beta_hot, beta_cold, n, m, d=2, levels=QUBIT_LEVELS):
    """Final joint over sorted index pairs, by moving every pair through the swap."""
    p_x, e_x = brute_sorted(levels, beta_hot, n)
    p_y, e_y = brute_sorted(levels, beta_cold, n)
    size = p_x.size
    final = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            i2, j2 = g2_swap(i, j, m, n, d)
            final[i2, j2] += p_x[i] * p_y[j]
    return p_x, e_x, p_y, e_y, final


class TestSwap:
    @given(n=st.integers(2, 7), data=st.data())
    @settings(max_examples=25, deadline=None)
    def test_bijection(self, n, data):
        m = data.draw(st.integers(0, n - 1))
        size = 2**n
        i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        for layout in ("rotate", "inplace"):
            i2, j2 = g2_swap_arrays(i.ravel(), j.ravel(), m, n, 2, layout)
            assert np.unique(i2 * size + j2).size == size * size

    def test_scalar_matches_vector(self):
        i, j = np.arange(64), np.arange(64)[::-1]
        a, b = g2_swap_arrays(i, j, 2, 6, 2)
        assert [g2_swap(int(x), int(y), 2, 6, 2) for x, y in zip(i, j)] == list(zip(a.tolist(), b.tolist()))

    def test_digit_layout(self):
        # n=4, m=1: i = 1011b, j = 0110b -> i' = 0101b (j top digit 0 on top), j' = 1101b
        assert g2_swap(0b1011, 0b0110, 1, 4, 2) == (0b0101, 0b1101)

    def test_zero_block_is_identity(self):
        assert g2_swap(5, 9, 0, 4, 2) == (5, 9)

    def test_validation(self):
        with pytest.raises(ValidationError):
            g2_swap(16, 0, 1, 4, 2)
        with pytest.raises(ValidationError):
            g2_swap(1, 0, 4, 4, 2)
        with pytest.raises(ValidationError):
            g2_swap(1, 0, 1, 4, 2, layout="twist")


class TestConfig:
    def test_default_block_size(self):
        cfg = fig_config(10_000, None, mode="auto", q=0.3 * 10_000 ** (2 / 3))
        assert cfg.m == 8
        assert cfg.resolved_mode == "blockwise" and cfg.resolved_precision == "extended"

    def test_auto_mode_small(self):
        assert fig_config(12, 2, mode="auto").resolved_mode == "exact"

    @pytest.mark.parametrize("kw", [{"mode": "fast"}, {"precision": "quad"}, {"rounding": "round"}, {"layout": "x"}])
    def test_rejects_unknown_options(self, kw):
        with pytest.raises(ValidationError):
            fig_config(8, 1, **kw)

    def test_block_size_bounds(self):
        with pytest.raises(ValidationError):
            fig_config(8, 8)


class TestFinalMarginals:
    @pytest.mark.parametrize("n,m", [(4, 1), (5, 2), (6, 3)])
    def test_against_pair_enumeration(self, n, m):
        p_x, _, p_y, _, final = enumerate_joint(FIG_BETA_HOT, FIG_BETA_COLD, n, m)
        fx, fy = final_marginals(p_x, p_y, m, n, 2)
        np.testing.assert_allclose(fx, final.sum(axis=1), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(fy, final.sum(axis=0), rtol=1e-12, atol=1e-15)


class TestExactMode:
    @pytest.mark.parametrize("n,m", [(5, 1), (6, 2), (7, 3)])
    def test_against_pair_enumeration(self, n, m):
        bh, bl = 0.3, 0.9
        p_x, e_x, p_y, e_y, final = enumerate_joint(bh, bl, n, m)
        heat = p_x @ e_x - final.sum(axis=1) @ e_x
        released = final.sum(axis=0) @ e_y - p_y @ e_y
        cfg = ProtocolConfig(EngineConfig.build(QUBIT, bh, bl, n, 1.0), m=m, mode="exact")
        out = apply_protocol_exact(cfg)
        assert out.heat_hot == pytest.approx(heat, rel=1e-12)
        assert out.work == pytest.approx(heat - released, rel=1e-10, abs=1e-13)
        product = np.outer(p_x, p_y)
        nz = final > 0
        kl = float(np.sum(final[nz] * np.log(final[nz] / product[nz])))
        assert out.kl_total == pytest.approx(kl, rel=1e-10, abs=1e-13)

    @pytest.mark.parametrize("n,m", [(10, 1), (12, 2), (14, 3)])
    def test_efficiency_identity(self, n, m):
        out = apply_protocol_exact(fig_config(n, m))
        assert abs(out.identity_residual) <= 1e-10

    def test_divergence_fields_match_direct_sums(self):
        out = apply_protocol_exact(fig_config(12, 2))
        p_x, _ = brute_sorted(QUBIT_LEVELS, FIG_BETA_HOT, 12)
        p_y, _ = brute_sorted(QUBIT_LEVELS, FIG_BETA_COLD, 12)
        assert out.d_x == pytest.approx(brute_d_x(p_x, 2), rel=1e-12)
        assert out.d_x_floor == pytest.approx(brute_d_x(p_x, 2, rounding="floor"), rel=1e-12)
        assert out.d_y == pytest.approx(brute_d_y(p_y, 2), rel=1e-12)

    def test_efficiency_below_optimal_and_refined_bound(self):
        out = apply_protocol_exact(fig_config(14, 2))
        optimum = eta_thermo(EngineConfig.build(QUBIT, FIG_BETA_HOT, FIG_BETA_COLD, 14, out.heat_hot)).eta_thermo
        assert out.eta <= optimum
        # the refined ceiling is attained up to round-off
        assert out.eta <= out.eta_refined_bound + 1e-9
        assert out.eta_refined_bound <= optimum

    def test_entropy_changes_within_bounds(self):
        for m in (1, 2, 3):
            out = apply_protocol_exact(fig_config(14, m))
            shift = m * math.log(2)
            assert abs(out.delta_s_hot + shift) <= out.entropy_bound_hot
            assert abs(out.delta_s_cold - shift) <= out.entropy_bound_cold

    def test_zero_block_does_nothing(self):
        out = apply_protocol_exact(fig_config(8, 0))
        assert out.eta is None and abs(out.work) < 1e-15

    def test_size_cap(self):
        with pytest.raises(ResourceLimitError):
            apply_protocol_exact(fig_config(26, 2))


class TestResiduals:
    @pytest.mark.parametrize("n,m", [(6, 1), (8, 2), (10, 3)])
    def test_l1_distance_exact_and_bounded(self, n, m):
        cfg = fig_config(n, m)
        out = apply_protocol_exact(cfg)
        measured = exact_l1_distance(cfg)
        assert out.l1_residual == pytest.approx(measured, rel=1e-9)
        hot, cold = build_sorted_spectrum(cfg.engine.hot), build_sorted_spectrum(cfg.engine.cold)
        assert measured <= l1_residual_bound(hot, cold, m).bound

    def test_product_approximation_masses(self):
        cfg = fig_config(8, 2)
        hot, cold = build_sorted_spectrum(cfg.engine.hot), build_sorted_spectrum(cfg.engine.cold)
        approx = product_approx_marginals(hot, cold, 2)
        assert approx.hot.sum() == pytest.approx(1 + approx.hot_excess, rel=1e-12)
        assert approx.cold.sum() == pytest.approx(1 - approx.cold_deficit, rel=1e-12)

    @pytest.mark.parametrize("n", [10, 12, 14])
    @pytest.mark.parametrize("m", [1, 2])
    def test_kl_decomposition(self, n, m):
        out = apply_protocol_exact(fig_config(n, m))
        assert abs(out.kl_total - (out.d_x + out.d_y)) <= out.kl_residual_bound


class TestBlockwiseMode:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_agrees_with_exact_within_bounds(self, m):
        exact = apply_protocol_exact(fig_config(14, m))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ProtocolWarning)
            block = apply_protocol_blockwise(fig_config(14, m, mode="blockwise"))
        assert block.heat_lower <= exact.heat_hot <= block.heat_upper
        assert abs(exact.kl_total - block.kl_total) <= block.kl_residual_bound
        assert block.delta_s_hot == pytest.approx(exact.delta_s_hot, rel=1e-10)
        assert block.delta_s_cold == pytest.approx(exact.delta_s_cold, rel=1e-10)
        assert block.l1_residual == pytest.approx(exact.l1_residual, rel=1e-10)

    @pytest.mark.filterwarnings("ignore::finitebath.protocol.ProtocolWarning")
    def test_large_bath_residuals_are_small(self):
        out = apply_protocol(fig_config(10_000, None, mode="auto", q=0.3 * 10_000 ** (2 / 3)))
        assert out.mode_used == "blockwise" and out.m == 8
        # the cold tail (about 3e-5 here) times the log-probability range dominates
        assert out.l1_bound < 1e-3 and out.kl_residual_bound < 0.1 * out.kl_total
        assert out.heat_upper - out.heat_lower < 0.01 * out.heat_hot
        assert out.eta < out.eta_carnot

    def test_warns_when_block_condition_fails(self):
        with pytest.warns(ProtocolWarning):
            apply_protocol_blockwise(fig_config(2000, 3, mode="blockwise"))

    def test_only_rotate_layout(self):
        with pytest.raises(ValidationError):
            apply_protocol_blockwise(fig_config(50, 1, mode="blockwise", layout="inplace"))


class TestSecondLaw:
    @pytest.mark.parametrize("beta", [0.1, 0.5])
    def test_identical_baths_yield_no_work(self, beta):
        n = 10
        for m in range(1, n // 2 + 1):
            cfg = ProtocolConfig(EngineConfig.build(QUBIT, beta, beta, n, 1.0, allow_equal=True), m=m, mode="exact")
            out = apply_protocol_exact(cfg)
            assert out.work <= 1e-13 * n
            assert out.kl_total >= -1e-13
