"""Bookkeeping for the energy-preserving unitary that realises the swap.

The classical permutation of bath configurations becomes a unitary once a
work storage absorbs each energy difference ``w = h(i, j) - h(i', j')``.
This module builds the distribution of ``w``, the entropy the storage picks
up, and the entropy-energy ratios of the three subsystems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import segments
from .bath import SortedSpectrum, build_sorted_spectrum
from .errors import ResourceLimitError, ValidationError
from .protocol import EXACT_MAX_STATES, ProtocolConfig, ProtocolOutcome, exact_state, g2_swap_arrays

# relative resolution used to merge numerically equal work values
MERGE_RESOLUTION = 1e-9


@dataclass(frozen=True)
class WorkDistribution:
    support: tuple
    probs: tuple
    mean: float
    entropy: float


@dataclass(frozen=True)
class LiftReport:
    a_hot: float
    a_cold: float
    a_storage: float
    s_storage: float
    bound: float
    conservation_ok: bool
    unital_ok: bool
    conservation_residual: float


def storage_entropy_cap(n: int, d: int) -> float:
    """``log N**2`` with ``N = (n+1)**(2(d-1))`` distinct total energies."""
    return 4 * (d - 1) * math.log(n + 1)


def _aggregate(values: np.ndarray, weights: np.ndarray, scale: float):
    """Merge values that agree to ``MERGE_RESOLUTION * scale``."""
    keys = np.round(values / (MERGE_RESOLUTION * scale)).astype(np.int64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    mass = np.bincount(inverse, weights=weights, minlength=uniq.size)
    first = np.zeros(uniq.size, dtype=np.int64)
    first[inverse[::-1]] = np.arange(values.size)[::-1]
    return values[first], mass


def _finish(values: np.ndarray, mass: np.ndarray, scale: float) -> WorkDistribution:
    vals, probs = _aggregate(values, mass, scale)
    keep = probs > 0
    vals, probs = vals[keep], probs[keep]
    order = np.argsort(vals)
    vals, probs = vals[order], probs[order]
    mean = math.fsum(vals * probs)
    entropy = -math.fsum(probs * np.log(probs))
    return WorkDistribution(tuple(vals.tolist()), tuple(probs.tolist()), mean, entropy)


def _exact_work(config: ProtocolConfig) -> WorkDistribution:
    eng = config.engine
    m, n, d = config.m, eng.n, eng.hot.d
    st = exact_state(config)
    p_x, p_y = np.exp(st.log_p_hot), np.exp(st.log_p_cold)
    h_x, h_y = st.energy_hot, st.energy_cold
    scale = max(max(abs(x) for x in eng.hot.site.levels), max(abs(x) for x in eng.cold.site.levels)) * n
    q, high = d**m, d ** (n - m)
    i_hi = np.arange(high)
    all_vals, all_mass = [], []
    # for fixed low hot digits and top cold digits the work separates into
    # a hot part over i_hi and a cold part over j_rest
    for i_lo in range(q):
        i = i_hi * q + i_lo
        for j_top in range(q):
            j = j_top * high + i_hi  # j_rest ranges like i_hi
            i2, j2 = g2_swap_arrays(i, j, m, n, d, config.layout)
            hot_vals, hot_mass = _aggregate(h_x[i] - h_x[i2], p_x[i], scale)
            cold_vals, cold_mass = _aggregate(h_y[j] - h_y[j2], p_y[j], scale)
            all_vals.append(np.add.outer(hot_vals, cold_vals).ravel())
            all_mass.append(np.outer(hot_mass, cold_mass).ravel())
    return _finish(np.concatenate(all_vals), np.concatenate(all_mass), scale)


def _segment_work(spec: SortedSpectrum, targets: list, sign: float):
    """Distribution of ``sign * (E(i) - E(phi(i)))`` under ``P``."""
    probs = segments.block_probs(spec)
    ictx = spec.ictx
    vals, mass = [], []
    for lo, hi, b, bt in segments.overlay(spec, targets):
        vals.append(sign * float(spec.block_energies[b] - spec.block_energies[bt]))
        mass.append(float(ictx.mpf(hi - lo) * probs[b]))
    return np.array(vals), np.array(mass)


def _blockwise_work(config: ProtocolConfig) -> WorkDistribution:
    """Product approximation: the hot index moves to ``c(i)`` and the cold
    index ``j`` to ``d**m j``, independently."""
    eng = config.engine
    m, n, d = config.m, eng.n, eng.hot.d
    precision = config.resolved_precision
    hot_spec = build_sorted_spectrum(eng.hot, precision)
    cold_spec = build_sorted_spectrum(eng.cold, precision)
    scale = max(max(abs(x) for x in eng.hot.site.levels), max(abs(x) for x in eng.cold.site.levels)) * n
    q = d**m
    hot_vals, hot_mass = _segment_work(hot_spec, segments.preimage_boundaries(hot_spec, q, config.rounding), 1.0)
    cold_vals, cold_mass = _segment_work(cold_spec, segments.preimage_boundaries(cold_spec, q, "scale"), 1.0)
    hot_vals, hot_mass = _aggregate(hot_vals, hot_mass, scale)
    cold_vals, cold_mass = _aggregate(cold_vals, cold_mass, scale)
    return _finish(np.add.outer(hot_vals, cold_vals).ravel(), np.outer(hot_mass, cold_mass).ravel(), scale)


def work_distribution(config: ProtocolConfig) -> WorkDistribution:
    """Distribution of the energy handed to the storage by one swap."""
    if config.m == 0:
        return WorkDistribution((0.0,), (1.0,), 0.0, 0.0)
    if config.resolved_mode == "exact":
        return _exact_work(config)
    return _blockwise_work(config)


def classical_permutation(config: ProtocolConfig) -> np.ndarray:
    """The swap as a permutation of joint configurations ``(x, y)``.

    Configurations are base-``d`` integers. Each bath is sorted by descending
    probability with a stable order inside ties, the sorted indices are
    swapped, and the result is unsorted. Only for ``d**(2n) <= 2**20``.
    """
    eng = config.engine
    n, d, m = eng.n, eng.hot.d, config.m
    size = d**n
    if size * size > 2**20:
        raise ResourceLimitError("explicit permutation is limited to d**(2n) <= 2**20")
    digits = np.array(np.unravel_index(np.arange(size), (d,) * n)).T
    hot_energy = np.asarray(eng.hot.site.levels)[digits].sum(axis=1)
    cold_energy = np.asarray(eng.cold.site.levels)[digits].sum(axis=1)
    hot_order = np.argsort(hot_energy, kind="stable")  # sorted position -> configuration
    cold_order = np.argsort(cold_energy, kind="stable")
    hot_rank = np.empty(size, dtype=np.int64)
    hot_rank[hot_order] = np.arange(size)
    cold_rank = np.empty(size, dtype=np.int64)
    cold_rank[cold_order] = np.arange(size)
    x, y = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    i2, j2 = g2_swap_arrays(hot_rank[x.ravel()], cold_rank[y.ravel()], m, n, d, config.layout)
    return hot_order[i2] * size + cold_order[j2]


def lift_report(outcome: ProtocolOutcome, wd: WorkDistribution, config: ProtocolConfig) -> LiftReport:
    """Entropy-energy ratios of the hot bath, cold bath and storage."""
    if outcome.heat_hot == 0.0 or outcome.eta is None:
        raise ValidationError("entropy-energy ratios are undefined when no heat flows")
    q_h, eta = outcome.heat_hot, outcome.eta
    residual = abs(wd.mean - outcome.work)
    tol = 1e-10 * max(1.0, abs(outcome.work)) if outcome.mode_used == "exact" else max(
        1e-10, outcome.kl_residual_bound / config.engine.cold.beta
    )
    return LiftReport(
        a_hot=outcome.delta_s_hot / (-q_h),
        a_cold=outcome.delta_s_cold / ((1.0 - eta) * q_h),
        a_storage=wd.entropy / (eta * q_h),
        s_storage=wd.entropy,
        bound=storage_entropy_cap(outcome.n, outcome.d),
        conservation_ok=residual <= tol,
        unital_ok=True,  # a permutation matrix is doubly stochastic
        conservation_residual=residual,
    )


__all__ = [
    "WorkDistribution",
    "LiftReport",
    "work_distribution",
    "lift_report",
    "classical_permutation",
    "storage_entropy_cap",
    "EXACT_MAX_STATES",
]
