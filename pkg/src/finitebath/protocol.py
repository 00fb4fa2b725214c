"""The sort / swap / unsort work-extraction protocol.

Both baths are sorted by descending probability. Sorted indices are read as
``n`` base-``d`` digits: ``i = i_hi * d**m + i_lo`` for the hot bath and
``j = j_top * d**(n-m) + j_rest`` for the cold bath. The swap exchanges the
``m`` low-order digits of the hot index (its least likely, hottest part)
with the ``m`` high-order digits of the cold index:

    i' = i_hi + j_top * d**(n-m)        j' = j_rest * d**m + i_lo

so the hot bath keeps its likely prefix and receives the cold bath's top
digits as a new high-order part, and vice versa. Final marginals factorise:

    P'_X(k + t d**(n-m)) = A(k) T(t)      P'_Y(j d**m + r) = R(j) L(r)

with ``A``/``T`` window sums and ``R``/``L`` residue-class sums of the sorted
arrays. This makes every entropy exact at any ``n``; energies need the
full arrays and are only exact in the enumerating mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import segments
from .asymptotics import block_size_m
from .bath import SortedSpectrum, build_sorted_spectrum, moments, site_log_probs, site_state
from .errors import InfeasibleError, ResourceLimitError, ValidationError
from .numerics import resolve_precision, working_context
from .thermo import EngineConfig, _solve_cold, _solve_hot

EXACT_MAX_STATES = 2**24
LAYOUTS = ("rotate", "inplace")


class ProtocolWarning(UserWarning):
    """A protocol run left the regime where its approximations are controlled."""


def g2_swap(i: int, j: int, m: int, n: int, d: int, layout: str = "rotate") -> tuple[int, int]:
    """Digit swap on a pair of sorted indices.

    ``layout="rotate"`` is the swap used by the protocol (see module
    docstring). ``layout="inplace"`` keeps every digit at its position:
    ``i' = i_hi d**m + j_top``, ``j' = i_lo d**(n-m) + j_rest``. It is also a
    bijection but moves almost no heat, and is kept for comparison.
    """
    size = d**n
    if not (0 <= i < size and 0 <= j < size):
        raise ValidationError(f"indices must lie in [0, {size})")
    if not 0 <= m < n:
        raise ValidationError(f"block size must satisfy 0 <= m < n, got m={m}")
    low, high = d**m, d ** (n - m)
    i_hi, i_lo = divmod(i, low)
    j_top, j_rest = divmod(j, high)
    if layout == "rotate":
        return i_hi + j_top * high, j_rest * low + i_lo
    if layout == "inplace":
        return i_hi * low + j_top, i_lo * high + j_rest
    raise ValidationError(f"unknown layout {layout!r}")


def g2_swap_arrays(i, j, m: int, n: int, d: int, layout: str = "rotate"):
    """Vectorised :func:`g2_swap` on integer numpy arrays."""
    low, high = d**m, d ** (n - m)
    i_hi, i_lo = np.divmod(i, low)
    j_top, j_rest = np.divmod(j, high)
    if layout == "rotate":
        return i_hi + j_top * high, j_rest * low + i_lo
    return i_hi * low + j_top, i_lo * high + j_rest


@dataclass(frozen=True)
class ProtocolConfig:
    engine: EngineConfig
    m: int | None = None
    mode: str = "auto"
    precision: str = "auto"
    rounding: str = "ceil"
    layout: str = "rotate"
    epsilon: float = 0.01

    def __post_init__(self):
        n = self.engine.n
        if self.m is None:
            hot = self.engine.hot
            var = moments(hot.site, hot.beta).variance
            object.__setattr__(self, "m", block_size_m(hot.beta, self.engine.q_target, n, var, hot.d))
        if int(self.m) != self.m or not 0 <= self.m < n:
            raise ValidationError(f"block size must satisfy 0 <= m < n, got m={self.m}, n={n}")
        object.__setattr__(self, "m", int(self.m))
        if self.mode not in ("auto", "exact", "blockwise"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.precision not in ("auto", "double", "extended"):
            raise ValidationError(f"unknown precision {self.precision!r}")
        if self.rounding not in ("ceil", "floor"):
            raise ValidationError(f"unknown rounding {self.rounding!r}")
        if self.layout not in LAYOUTS:
            raise ValidationError(f"unknown layout {self.layout!r}")

    @property
    def resolved_mode(self) -> str:
        if self.mode != "auto":
            return self.mode
        hot, cold = self.engine.hot, self.engine.cold
        return "exact" if max(hot.d, cold.d) ** self.engine.n <= EXACT_MAX_STATES else "blockwise"

    @property
    def resolved_precision(self) -> str:
        return resolve_precision(self.precision, self.engine.n)


@dataclass(frozen=True)
class ProtocolOutcome:
    n: int
    d: int
    m: int
    beta_hot: float
    beta_cold: float
    q_target: float
    work: float
    heat_hot: float
    heat_cold_released: float
    eta: float | None
    d_x: float
    d_y: float
    kl_total: float
    delta_s_hot: float
    delta_s_cold: float
    l1_residual: float
    l1_bound: float
    tail_mass: float
    straddle_term: float
    kl_residual_bound: float
    heat_lower: float
    heat_upper: float
    mode_used: str
    precision_used: str
    rounding: str
    d_x_floor: float
    d_x_ceil: float
    block_condition_ok: bool
    block_condition_margin: float
    entropy_bound_hot: float
    entropy_bound_cold: float
    identity_residual: float | None = None
    rounding_best: str | None = None
    eta_refined_bound: float | None = None
    layout: str = "rotate"
    warnings: tuple = field(default_factory=tuple)

    @property
    def eta_carnot(self) -> float:
        return 1.0 - self.beta_hot / self.beta_cold


@dataclass(frozen=True)
class ResidualTerms:
    tail: float
    straddle: float

    @property
    def bound(self) -> float:
        return self.tail + self.straddle


def _log_max_state(spec: SortedSpectrum):
    return spec.block_log_probs[0]


def _straddle_log(spec: SortedSpectrum, m: int):
    ctx = spec.ctx
    return m * ctx.log(spec.d) + (spec.d - 1) * ctx.log(spec.n + 1) + _log_max_state(spec)


def l1_residual_bound(hot_spec: SortedSpectrum, cold_spec: SortedSpectrum, m: int, n: int | None = None, d: int | None = None) -> ResidualTerms:
    """Cold tail mass past ``d**(n-m)`` plus the hot-side boundary term
    ``d**m (n+1)**(d-1) max_x P_X(x)**n``."""
    tail = segments.tail_mass(cold_spec, m)
    straddle = hot_spec.ctx.exp(_straddle_log(hot_spec, m))
    return ResidualTerms(float(tail), float(straddle))


@dataclass(frozen=True)
class ProductApprox:
    """Product approximation of the final marginals.

    The hot marginal ``P~_X(k) = d**m P_X(k d**m)`` (``k < d**(n-m)``) has
    total mass ``1 + hot_excess``; the cold one, ``P_Y(j) / d**m`` at
    ``j d**m + r`` for ``j < d**(n-m)``, has mass ``1 - cold_deficit``.
    Dense arrays are filled only for enumerable sizes.
    """

    hot_excess: float
    cold_deficit: float
    hot: np.ndarray | None = None
    cold: np.ndarray | None = None


def product_approx_marginals(hot_spec: SortedSpectrum, cold_spec: SortedSpectrum, m: int) -> ProductApprox:
    excess = float(segments.multiples_excess(hot_spec, hot_spec.d**m))
    deficit = float(segments.tail_mass(cold_spec, m))
    hot_dense = cold_dense = None
    if hot_spec.size <= EXACT_MAX_STATES and cold_spec.size <= EXACT_MAX_STATES:
        q, high = hot_spec.d**m, hot_spec.d ** (hot_spec.n - m)
        lp_x, _ = hot_spec.dense()
        lp_y, _ = cold_spec.dense()
        hot_dense = np.zeros(hot_spec.size)
        hot_dense[:high] = q * np.exp(lp_x[::q])
        cold_dense = np.repeat(np.exp(lp_y[:high]) / q, q)
        cold_dense = np.concatenate([cold_dense, np.zeros(cold_spec.size - cold_dense.size)])
    return ProductApprox(excess, deficit, hot_dense, cold_dense)


def _block_condition(config: ProtocolConfig):
    """Margin of the block-size condition that keeps the residuals exponentially small."""
    hot, cold = config.engine.hot, config.engine.cold
    ctx = working_context("double")
    log_d = math.log(cold.d)
    cold_entropy = float(site_state(ctx, cold.site.levels, cold.beta)[3])
    log_p, _ = site_log_probs(ctx, hot.site.levels, hot.beta)
    max_log_p = float(max(log_p))
    limit = min(1.0 - cold_entropy / log_d, -max_log_p / math.log(hot.d)) - config.epsilon
    margin = config.engine.n * limit - config.m
    return margin > 0, margin


def _spectra(config: ProtocolConfig, precision: str):
    eng = config.engine
    return build_sorted_spectrum(eng.hot, precision), build_sorted_spectrum(eng.cold, precision)


def _divergence_terms(hot_spec, cold_spec, m):
    """Divergences of both roundings, the cold divergence and residual pieces."""
    dx_floor = segments.sorted_divergence(hot_spec, m, "x", "floor")
    dx_ceil = segments.sorted_divergence(hot_spec, m, "x", "ceil")
    dy = segments.sorted_divergence(cold_spec, m, "y")
    tail = segments.tail_mass(cold_spec, m)
    straddle_x = hot_spec.ctx.exp(_straddle_log(hot_spec, m))
    # cold-side analogue without the d**m factor: windows straddling a block edge
    straddle_y = cold_spec.ctx.exp(_straddle_log(cold_spec, 0))
    excess = segments.multiples_excess(hot_spec, hot_spec.d**m)
    return dx_floor, dx_ceil, dy, tail, straddle_x, straddle_y, excess


def _entropy_changes(hot_spec, cold_spec, m):
    """Exact entropy changes from the factorised final marginals."""
    n, d = hot_spec.n, hot_spec.d
    ictx = hot_spec.ictx
    q, high = d**m, d ** (n - m)
    s_hot0 = n * site_state(ictx, hot_spec.levels, hot_spec.beta)[3]
    s_cold0 = n * site_state(ictx, cold_spec.levels, cold_spec.beta)[3]
    s_hot = segments.window_masses(hot_spec, q).entropy(ictx) + segments.window_masses(cold_spec, high).entropy(ictx)
    s_cold = segments.residue_masses(cold_spec, high).entropy(ictx) + segments.residue_masses(hot_spec, q).entropy(ictx)
    return s_hot - s_hot0, s_cold - s_cold0


def _entropy_bounds(hot_spec, cold_spec, m, tail, straddle_x):
    """Bounds on ``|dS_H + m log d|`` and ``|dS_L - m log d|``.

    ``dS_H + m log d = S(T) + D(P_X || window average)`` and
    ``m log d - dS_L = D(L || uniform) + H(top cold digits | rest)``. Here
    ``S(T) <= h(tail) + tail m log d``; the window divergence only comes from
    windows straddling a block edge (mass <= straddle) and is at most the
    log-probability range there; ``L`` deviates from uniform by at most the
    largest state probability, so its divergence is below ``q**2 pmax**2``.
    """
    ctx = hot_spec.ctx
    tail = ctx.mpf(tail)
    binary = ctx.zero if tail <= 0 or tail >= 1 else -tail * ctx.log(tail) - (1 - tail) * ctx.log1p(-tail)
    top_digits = binary + tail * m * ctx.log(hot_spec.d)
    window = straddle_x * hot_spec.log_prob_range()
    residues = ctx.exp(2 * (m * ctx.log(hot_spec.d) + _log_max_state(hot_spec)))
    return top_digits + window, top_digits + residues


def _kl_bound(hot_spec, cold_spec, tail, straddle_y, dx_used, dx_floor):
    """Bound on |kl_total - (D_X + D_Y)| from the cold tail and block-edge windows."""
    span_x = hot_spec.log_prob_range()
    span_y = cold_spec.log_prob_range()
    return span_x * tail + span_y * (tail + straddle_y) + abs(dx_used - dx_floor)


def apply_protocol(config: ProtocolConfig) -> ProtocolOutcome:
    if config.resolved_mode == "exact":
        return apply_protocol_exact(config)
    return apply_protocol_blockwise(config)


def apply_protocol_blockwise(config: ProtocolConfig) -> ProtocolOutcome:
    """Large-n evaluation from the block-structured divergences.

    The heat and the relative entropy are the divergence expressions, exact
    up to the reported residual bounds; entropy changes are exact.
    """
    eng = config.engine
    if config.layout != "rotate":
        raise ValidationError("blockwise evaluation supports only the rotate layout")
    if eng.hot.beta == 0.0:
        raise ValidationError("a hot bath at beta=0 cannot release heat at finite cost")
    precision = config.resolved_precision
    hot_spec, cold_spec = _spectra(config, precision)
    ctx = hot_spec.ctx
    m, n, d = config.m, eng.n, eng.hot.d
    notes = []
    ok, margin = _block_condition(config)
    if not ok:
        notes.append(f"block-size condition fails (margin {margin:.3g}); residual bounds may not be small")
    dx_floor, dx_ceil, dy, tail, straddle_x, straddle_y, excess = _divergence_terms(hot_spec, cold_spec, m)
    dx = dx_ceil if config.rounding == "ceil" else dx_floor
    b_h, b_l = ctx.mpf(eng.hot.beta), ctx.mpf(eng.cold.beta)
    shift = m * ctx.log(d)
    heat = (shift - dx) / b_h
    kl = dx + dy
    # exact heat lies in [heat_floor - span_x tail / beta_h, heat_floor]
    heat_floor = (shift - dx_floor) / b_h
    span_x = hot_spec.log_prob_range()
    heat_lo = heat_floor - span_x * tail / b_h
    kl_bound = _kl_bound(hot_spec, cold_spec, tail, straddle_y, dx, dx_floor)
    ds_hot, ds_cold = _entropy_changes(hot_spec, cold_spec, m)
    bound_hot, bound_cold = _entropy_bounds(hot_spec, cold_spec, m, tail, straddle_x)
    l1 = excess * (1 - tail) + tail
    if m == 0 or heat == 0:
        eta, work = None, ctx.zero
    else:
        eta_mp = 1 - b_h / b_l - kl / (b_l * heat)
        eta, work = float(eta_mp), eta_mp * heat
    for note in notes:
        warnings.warn(note, ProtocolWarning, stacklevel=2)
    return ProtocolOutcome(
        n=n,
        d=d,
        m=m,
        beta_hot=eng.hot.beta,
        beta_cold=eng.cold.beta,
        q_target=eng.q_target,
        work=float(work),
        heat_hot=float(heat),
        heat_cold_released=float(heat - work),
        eta=eta,
        d_x=float(dx),
        d_y=float(dy),
        kl_total=float(kl),
        delta_s_hot=float(ds_hot),
        delta_s_cold=float(ds_cold),
        l1_residual=float(l1),
        l1_bound=float(tail + straddle_x),
        tail_mass=float(tail),
        straddle_term=float(straddle_x),
        kl_residual_bound=float(kl_bound),
        heat_lower=float(min(heat_lo, heat)),
        heat_upper=float(max(heat_floor, heat)),
        mode_used="blockwise",
        precision_used=precision,
        rounding=config.rounding,
        d_x_floor=float(dx_floor),
        d_x_ceil=float(dx_ceil),
        block_condition_ok=ok,
        block_condition_margin=float(margin),
        entropy_bound_hot=float(bound_hot),
        entropy_bound_cold=float(bound_cold),
        layout=config.layout,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class ExactState:
    """Dense sorted arrays and final marginals of one exact run."""

    log_p_hot: np.ndarray
    log_p_cold: np.ndarray
    energy_hot: np.ndarray
    energy_cold: np.ndarray
    final_hot: np.ndarray
    final_cold: np.ndarray


def final_marginals(p_hot: np.ndarray, p_cold: np.ndarray, m: int, n: int, d: int, layout: str = "rotate"):
    """Final marginals of both baths after the swap, from the sorted arrays."""
    if m == 0:
        return p_hot.copy(), p_cold.copy()  # identity map, no rounding
    q, high = d**m, d ** (n - m)
    hot_grid = p_hot.reshape(high, q)  # [i_hi, i_lo]
    cold_grid = p_cold.reshape(q, high)  # [j_top, j_rest]
    windows = hot_grid.sum(axis=1)  # A(i_hi)
    low_digits = hot_grid.sum(axis=0)  # L(i_lo)
    top_digits = cold_grid.sum(axis=1)  # T(j_top)
    residues = cold_grid.sum(axis=0)  # R(j_rest)
    if layout == "rotate":
        return np.outer(top_digits, windows).ravel(), np.outer(residues, low_digits).ravel()
    return np.outer(windows, top_digits).ravel(), np.outer(low_digits, residues).ravel()


def exact_state(config: ProtocolConfig, hot_spec=None, cold_spec=None) -> ExactState:
    eng = config.engine
    if max(eng.hot.d, eng.cold.d) ** eng.n > EXACT_MAX_STATES:
        raise ResourceLimitError(f"exact mode needs d**n <= {EXACT_MAX_STATES}")
    if hot_spec is None:
        hot_spec, cold_spec = _spectra(config, "double")
    lp_x, h_x = hot_spec.dense()
    lp_y, h_y = cold_spec.dense()
    fx, fy = final_marginals(np.exp(lp_x), np.exp(lp_y), config.m, eng.n, eng.hot.d, config.layout)
    return ExactState(lp_x, lp_y, h_x, h_y, fx, fy)


def _xlogx_sum(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(np.sum(nz * np.log(nz)))


def _refined_bound(config, heat, final_hot, final_cold, h_x, h_y, s_total):
    """Efficiency ceiling from the optimal efficiency at the achieved heat
    minus the divergence from the final Gibbs pair."""
    from .thermo import eta_thermo

    eng = config.engine
    if heat <= 0:
        return None
    try:
        cfg = replace(eng, q_target=heat)
        sol = eta_thermo(cfg)
    except (InfeasibleError, ValidationError):
        return None
    ctx = working_context("extended")
    bph = _solve_hot(ctx, eng.hot, heat)
    bpc = _solve_cold(ctx, eng.hot, eng.cold, bph)
    log_z_h = float(site_state(ctx, eng.hot.site.levels, bph)[0])
    log_z_c = float(site_state(ctx, eng.cold.site.levels, bpc)[0])
    lp_hot = -float(bph) * h_x - eng.n * log_z_h
    lp_cold = -float(bpc) * h_y - eng.n * log_z_c
    cross = -s_total - float(np.dot(final_hot, lp_hot)) - float(np.dot(final_cold, lp_cold))
    return sol.eta_thermo - max(cross, 0.0) / (float(bpc) * heat)


def apply_protocol_exact(config: ProtocolConfig) -> ProtocolOutcome:
    """Full-array evaluation for ``d**n <= 2**24``; every sum is a finite sum."""
    eng = config.engine
    m, n, d = config.m, eng.n, eng.hot.d
    hot_spec, cold_spec = _spectra(config, "double")
    st = exact_state(config, hot_spec, cold_spec)
    p_x, p_y = np.exp(st.log_p_hot), np.exp(st.log_p_cold)
    s_hot0, s_cold0 = -_xlogx_sum(p_x), -_xlogx_sum(p_y)
    heat = float(np.dot(p_x - st.final_hot, st.energy_hot))
    released = float(np.dot(st.final_cold - p_y, st.energy_cold))
    work = heat - released
    # the swap is a permutation, so the joint entropy is unchanged and the
    # divergence is linear in the final marginals
    kl = -s_hot0 - s_cold0 - float(np.dot(st.final_hot, st.log_p_hot)) - float(np.dot(st.final_cold, st.log_p_cold))
    ds_hot = -_xlogx_sum(st.final_hot) - s_hot0
    ds_cold = -_xlogx_sum(st.final_cold) - s_cold0
    b_h, b_l = eng.hot.beta, eng.cold.beta
    identity = b_l * work - (b_l - b_h) * heat + kl
    dx_floor, dx_ceil, dy, tail, straddle_x, straddle_y, excess = _divergence_terms(hot_spec, cold_spec, m)
    dx = dx_ceil if config.rounding == "ceil" else dx_floor
    gaps = {"ceil": abs(kl - float(dx_ceil + dy)), "floor": abs(kl - float(dx_floor + dy))}
    best = min(gaps, key=gaps.get)
    ok, margin = _block_condition(config)
    eta = None if m == 0 or heat == 0.0 else work / heat
    refined = _refined_bound(config, heat, st.final_hot, st.final_cold, st.energy_hot, st.energy_cold, s_hot0 + s_cold0)
    kl_bound = _kl_bound(hot_spec, cold_spec, tail, straddle_y, dx, dx_floor)
    bound_hot, bound_cold = _entropy_bounds(hot_spec, cold_spec, m, tail, straddle_x)
    l1 = excess * (1 - tail) + tail
    return ProtocolOutcome(
        n=n,
        d=d,
        m=m,
        beta_hot=b_h,
        beta_cold=b_l,
        q_target=eng.q_target,
        work=work,
        heat_hot=heat,
        heat_cold_released=released,
        eta=eta,
        d_x=float(dx),
        d_y=float(dy),
        kl_total=kl,
        delta_s_hot=ds_hot,
        delta_s_cold=ds_cold,
        l1_residual=float(l1),
        l1_bound=float(tail + straddle_x),
        tail_mass=float(tail),
        straddle_term=float(straddle_x),
        kl_residual_bound=float(kl_bound),
        heat_lower=heat,
        heat_upper=heat,
        mode_used="exact",
        precision_used="double",
        rounding=config.rounding,
        d_x_floor=float(dx_floor),
        d_x_ceil=float(dx_ceil),
        block_condition_ok=ok,
        block_condition_margin=float(margin),
        entropy_bound_hot=float(bound_hot),
        entropy_bound_cold=float(bound_cold),
        identity_residual=float(identity),
        rounding_best=best,
        eta_refined_bound=refined,
        layout=config.layout,
    )


def exact_l1_distance(config: ProtocolConfig) -> float:
    """L1 distance between the final joint and the product approximation,
    by enumerating every pair of sorted indices (small ``n`` only)."""
    eng = config.engine
    m, n, d = config.m, eng.n, eng.hot.d
    hot_spec, cold_spec = _spectra(config, "double")
    size = d**n
    if size * size > 2**26:
        raise ResourceLimitError("pair enumeration is limited to d**(2n) <= 2**26")
    lp_x, _ = hot_spec.dense()
    lp_y, _ = cold_spec.dense()
    approx = product_approx_marginals(hot_spec, cold_spec, m)
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    i2, j2 = g2_swap_arrays(i.ravel(), j.ravel(), m, n, d, config.layout)
    final = np.zeros(size * size)
    final[i2 * size + j2] = np.exp(lp_x[i.ravel()] + lp_y[j.ravel()])
    product = np.outer(approx.hot, approx.cold).ravel()
    return float(np.abs(final - product).sum())
