"""Thermodynamically optimal efficiency of an engine between two finite baths.

The hot bath gives up heat ``q`` and ends at ``beta_prime_hot``; the cold bath
ends at the ``beta_prime_cold`` that keeps the total entropy unchanged. All
quantities are evaluated per site and scaled by ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bath import BathSpec, SiteSpectrum, site_log_probs, site_state
from .errors import InfeasibleError, NumericalError, ValidationError
from .numerics import working_context

MAX_ITERATIONS = 200
BETA_CEILING = 1e6


@dataclass(frozen=True)
class EngineConfig:
    hot: BathSpec
    cold: BathSpec
    q_target: float
    # equal temperatures are only meaningful for second-law checks of the protocol
    allow_equal: bool = False

    def __post_init__(self):
        if self.hot.n != self.cold.n:
            raise ValidationError("both baths must have the same particle count")
        hotter = self.hot.beta < self.cold.beta or (self.allow_equal and self.hot.beta == self.cold.beta)
        if not hotter:
            raise ValidationError("the hot bath must be hotter: beta_hot < beta_cold")
        q = float(self.q_target)
        if not math.isfinite(q) or q <= 0.0:
            raise ValidationError(f"target heat must be positive and finite, got {self.q_target}")
        object.__setattr__(self, "q_target", q)

    @property
    def n(self) -> int:
        return self.hot.n

    @property
    def carnot(self) -> float:
        return 1.0 - self.hot.beta / self.cold.beta

    @classmethod
    def build(cls, levels, beta_hot, beta_cold, n, q, cold_levels=None, allow_equal=False) -> "EngineConfig":
        site = levels if isinstance(levels, SiteSpectrum) else SiteSpectrum(levels)
        cold_site = site if cold_levels is None else SiteSpectrum(cold_levels)
        return cls(BathSpec(site, beta_hot, n), BathSpec(cold_site, beta_cold, n), q, allow_equal)


@dataclass(frozen=True)
class ThermoSolution:
    beta_prime_hot: float
    beta_prime_cold: float
    eta_thermo: float
    rel_entropy_total: float
    residual_energy: float
    residual_entropy: float


def heat_capacity(hot: BathSpec, precision: str = "extended") -> float:
    """Largest heat the hot bath can release: cooling it to its ground level."""
    ctx = working_context(precision)
    mean = site_state(ctx, hot.site.levels, hot.beta)[1]
    return float(hot.n * (mean - min(hot.site.levels)))


def _solve_decreasing(ctx, func, slope, target, lo, hi, scale, start=None):
    """Root of ``func(beta) = target`` for ``func`` decreasing on ``[lo, hi]``.

    Newton steps from ``start`` kept inside a shrinking bracket; a bisection
    step replaces any Newton step that leaves the bracket or fails to halve
    the residual.
    """
    tol = 16 * ctx.eps * scale
    g_lo = func(lo) - target
    if abs(g_lo) <= tol:
        return lo
    beta = start if start is not None and lo < start < hi else (lo + hi) / 2
    previous = None
    for _ in range(MAX_ITERATIONS):
        g = func(beta) - target
        if abs(g) <= tol:
            return beta
        if g > 0:
            lo = beta
        else:
            hi = beta
        if hi - lo <= 4 * ctx.eps * hi:
            return beta
        step_ok = False
        if previous is None or abs(g) <= previous / 2:
            d = slope(beta)
            if d != 0:
                cand = beta - g / d
                if lo < cand < hi:
                    beta, step_ok = cand, True
        previous = abs(g)
        if not step_ok:
            beta = (lo + hi) / 2
    raise NumericalError("inverse-temperature solver did not converge within the iteration cap")


def _energy_fn(ctx, levels):
    return lambda b: site_state(ctx, levels, b)[1]


def _entropy_fn(ctx, levels):
    return lambda b: site_state(ctx, levels, b)[3]


def _solve_hot(ctx, hot: BathSpec, q):
    if q < 0:
        raise ValidationError("heat drawn from the hot bath must be non-negative")
    if q == 0:
        return ctx.mpf(hot.beta)
    levels = hot.site.levels
    energy = _energy_fn(ctx, levels)
    target = energy(hot.beta) - ctx.mpf(q) / hot.n
    if target <= min(levels):
        raise InfeasibleError("heat exceeds bath capacity")
    lo = ctx.mpf(hot.beta)
    hi = max(2 * lo, ctx.one)
    while energy(hi) > target:
        if hi >= BETA_CEILING:
            raise InfeasibleError("heat exceeds bath capacity (inverse temperature above search ceiling)")
        hi = min(4 * hi, ctx.mpf(BETA_CEILING))
    scale = max(abs(h) for h in levels)
    variance = site_state(ctx, levels, lo)[2]
    start = lo + (energy(lo) - target) / variance if variance > 0 else None
    return _solve_decreasing(ctx, energy, lambda b: -site_state(ctx, levels, b)[2], target, lo, hi, scale, start)


def _solve_cold(ctx, hot: BathSpec, cold: BathSpec, beta_prime_hot):
    entropy_h = _entropy_fn(ctx, hot.site.levels)
    entropy_c = _entropy_fn(ctx, cold.site.levels)
    target = entropy_h(hot.beta) + entropy_c(cold.beta) - entropy_h(beta_prime_hot)
    log_d = ctx.log(cold.d)
    if target > log_d + 16 * ctx.eps:
        raise InfeasibleError("cold bath cannot absorb the entropy: required site entropy exceeds log d")
    if target <= 0:
        raise InfeasibleError("required cold-bath entropy is not positive")
    lo, hi = ctx.zero, ctx.mpf(cold.beta)
    if target >= log_d:
        return lo
    levels = cold.site.levels

    def slope(b):
        return -b * site_state(ctx, levels, b)[2]

    start = hi - (target - entropy_c(hi)) / slope(hi) if hi > 0 else None
    return _solve_decreasing(ctx, entropy_c, slope, target, lo, hi, log_d, start)


def solve_beta_prime_hot(hot: BathSpec, q: float, precision: str = "extended") -> float:
    """Final inverse temperature of the hot bath after releasing heat ``q``."""
    return float(_solve_hot(working_context(precision), hot, q))


def solve_beta_prime_cold(hot: BathSpec, cold: BathSpec, beta_prime_hot: float, precision: str = "extended") -> float:
    """Final cold-bath inverse temperature that conserves the total entropy."""
    ctx = working_context(precision)
    return float(_solve_cold(ctx, hot, cold, ctx.mpf(beta_prime_hot)))


def _site_rel_entropy(ctx, levels, beta_from, beta_to):
    """Per-site relative entropy D(P_beta_from || P_beta_to)."""
    log_z_from, mean_from, _, entropy_from = site_state(ctx, levels, beta_from)
    _, log_z_to = site_log_probs(ctx, levels, beta_to)
    return ctx.mpf(beta_to) * mean_from + log_z_to - entropy_from


def gibbs_rel_entropy(site: SiteSpectrum, beta_from: float, beta_to: float, n: int = 1, precision: str = "extended") -> float:
    """Relative entropy between ``n``-site Gibbs states at two temperatures."""
    BathSpec(site, beta_from, n)
    BathSpec(site, beta_to, n)
    ctx = working_context(precision)
    return float(n * _site_rel_entropy(ctx, site.levels, beta_from, beta_to))


def _solve(ctx, config: EngineConfig):
    hot, cold, q = config.hot, config.cold, ctx.mpf(config.q_target)
    bph = _solve_hot(ctx, hot, config.q_target)
    bpc = _solve_cold(ctx, hot, cold, bph)
    return hot, cold, q, bph, bpc


def eta_thermo(config: EngineConfig, precision: str = "extended") -> ThermoSolution:
    """Optimal efficiency from energy and entropy bookkeeping of the two baths."""
    ctx = working_context(precision)
    hot, cold, q, bph, bpc = _solve(ctx, config)
    n = config.n
    e_hot = _energy_fn(ctx, hot.site.levels)
    e_cold = _energy_fn(ctx, cold.site.levels)
    s_hot = _entropy_fn(ctx, hot.site.levels)
    s_cold = _entropy_fn(ctx, cold.site.levels)
    released = n * (e_cold(bpc) - e_cold(cold.beta))
    eta = 1 - released / q
    target_e = e_hot(hot.beta) - q / n
    res_e = abs(e_hot(bph) - target_e) / max(abs(target_e), max(abs(h) for h in hot.site.levels))
    total_s = s_hot(hot.beta) + s_cold(cold.beta)
    res_s = abs(s_hot(bph) + s_cold(bpc) - total_s) / total_s
    rel = n * (
        _site_rel_entropy(ctx, hot.site.levels, bph, hot.beta) + _site_rel_entropy(ctx, cold.site.levels, bpc, cold.beta)
    )
    return ThermoSolution(
        beta_prime_hot=float(bph),
        beta_prime_cold=float(bpc),
        eta_thermo=float(eta),
        rel_entropy_total=float(rel),
        residual_energy=float(res_e),
        residual_entropy=float(res_s),
    )


def eta_thermo_via_relent(config: EngineConfig, precision: str = "extended") -> float:
    """Optimal efficiency as Carnot minus the relative-entropy penalty."""
    ctx = working_context(precision)
    hot, cold, q, bph, bpc = _solve(ctx, config)
    rel = config.n * (
        _site_rel_entropy(ctx, hot.site.levels, bph, hot.beta) + _site_rel_entropy(ctx, cold.site.levels, bpc, cold.beta)
    )
    b_h, b_l = ctx.mpf(hot.beta), ctx.mpf(cold.beta)
    return float(1 - b_h / b_l - rel / (b_l * q))
