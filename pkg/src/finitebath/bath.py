"""Finite i.i.d. qudit baths.

A bath is ``n`` independent copies of a ``d``-level particle held at inverse
temperature ``beta``. Besides site-level Gibbs quantities this module builds
the descending rearrangement of the ``d**n`` product probabilities, stored
as blocks of equal probability (merged type classes) with their counts.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ResourceLimitError, ValidationError
from .numerics import index_context, working_context

# spectra presets accepted by name
PRESETS = {"qubit±1": (1.0, -1.0), "qubit+-1": (1.0, -1.0), "qubit": (1.0, -1.0)}

# cap on the number of type classes enumerated for one bath
MAX_BLOCKS = 10**7
# above this many bits of total count storage, counts are kept as
# high-precision floats instead of exact integers
EXACT_COUNT_BIT_BUDGET = 2**28


@dataclass(frozen=True)
class SiteSpectrum:
    """Energy levels of a single particle, in the order given."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        if len(levels) < 2:
            raise ValidationError("a site spectrum needs at least two levels")
        if not all(math.isfinite(x) for x in levels):
            raise ValidationError("site energy levels must be finite")
        if max(levels) == min(levels):
            raise ValidationError("degenerate spectrum: all levels are equal")
        object.__setattr__(self, "levels", levels)

    @property
    def d(self) -> int:
        return len(self.levels)

    @classmethod
    def from_preset(cls, name: str) -> "SiteSpectrum":
        try:
            return cls(PRESETS[name])
        except KeyError:
            raise ValidationError(f"unknown spectrum preset {name!r}") from None


@dataclass(frozen=True)
class BathSpec:
    site: SiteSpectrum
    beta: float
    n: int

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or beta < 0.0:
            raise ValidationError(f"inverse temperature must be finite and >= 0, got {self.beta}")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"particle count must be a positive integer, got {self.n}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "n", int(self.n))

    @property
    def d(self) -> int:
        return self.site.d


def site_log_probs(ctx, levels: Sequence[float], beta) -> tuple[list, object]:
    """Log Gibbs weights of one site and the log partition function.

    The lowest level is factored out before exponentiating.
    """
    beta = ctx.mpf(beta)
    ground = min(levels)
    log_z = -beta * ground + ctx.log(ctx.fsum(ctx.exp(-beta * (h - ground)) for h in levels))
    return [-beta * h - log_z for h in levels], log_z


def site_state(ctx, levels: Sequence[float], beta):
    """Return ``(log Z, mean energy, variance, entropy)`` per site in ``ctx``."""
    log_p, log_z = site_log_probs(ctx, levels, beta)
    probs = [ctx.exp(lp) for lp in log_p]
    mean = ctx.fsum(p * h for p, h in zip(probs, levels))
    var = ctx.fsum(p * (h - mean) ** 2 for p, h in zip(probs, levels))
    entropy = ctx.mpf(beta) * mean + log_z
    return log_z, mean, var, entropy


def gibbs_site_probs(site: SiteSpectrum, beta: float, precision: str = "double") -> np.ndarray:
    """Gibbs probabilities ``exp(-beta h) / Z`` of one site."""
    BathSpec(site, beta, 1)
    ctx = working_context(precision)
    log_p, _ = site_log_probs(ctx, site.levels, beta)
    return np.array([float(ctx.exp(lp)) for lp in log_p])


@dataclass(frozen=True)
class MomentSet:
    log_partition: float
    mean_energy: float
    variance: float
    skewness: float
    site_entropy: float
    psi_prime: float
    psi_double_prime: float


def moments(site: SiteSpectrum, beta: float, precision: str = "double") -> MomentSet:
    """Per-site energy moments and the derived psi-function derivatives.

    ``psi`` inverts ``phi'(s) = d/ds log sum p**s`` and is evaluated at
    ``-S``: ``psi' = 1/phi''`` and ``psi'' = -phi'''/phi''**3``. The third
    cumulant of ``log p`` is ``-beta**3`` times the energy one, so in terms of
    the energy skewness ``psi'' = +gamma/(beta sigma)**3``.

    At ``beta == 0`` the psi derivatives are infinite (or nan when the
    skewness vanishes); every other field is finite.
    """
    BathSpec(site, beta, 1)
    ctx = working_context(precision)
    log_z, mean, var, entropy = site_state(ctx, site.levels, beta)
    log_p, _ = site_log_probs(ctx, site.levels, beta)
    third = ctx.fsum(ctx.exp(lp) * (h - mean) ** 3 for lp, h in zip(log_p, site.levels))
    if var <= 0 or float(var) == 0.0:
        raise ValidationError("degenerate spectrum: zero energy variance")
    sigma = ctx.sqrt(var)
    skew = third / sigma**3
    if beta > 0:
        b = ctx.mpf(beta)
        psi1 = 1 / (b**2 * var)
        psi2 = skew / (b * sigma) ** 3
        psi1, psi2 = float(psi1), float(psi2)
    else:
        psi1 = math.inf
        psi2 = math.nan if float(skew) == 0.0 else math.copysign(math.inf, float(skew))
    return MomentSet(
        log_partition=float(log_z),
        mean_energy=float(mean),
        variance=float(var),
        skewness=float(skew),
        site_entropy=float(entropy),
        psi_prime=psi1,
        psi_double_prime=psi2,
    )


def entropy_of(bath: BathSpec, precision: str = "double") -> float:
    """Shannon entropy (nats) of the whole bath, ``n`` times the site entropy."""
    ctx = working_context(precision)
    return float(bath.n * site_state(ctx, bath.site.levels, bath.beta)[3])


@dataclass(frozen=True)
class TypeClass:
    counts: tuple
    multiplicity: int
    log_prob_per_state: float
    total_energy: float


def compositions(n: int, d: int) -> Iterator[tuple]:
    """All occupation vectors of ``n`` particles over ``d`` levels."""
    if d == 1:
        yield (n,)
        return
    for k in range(n, -1, -1):
        for rest in compositions(n - k, d - 1):
            yield (k,) + rest


def multinomial(counts: Sequence[int]) -> int:
    total, result = 0, 1
    for k in counts:
        total += k
        result *= math.comb(total, k)
    return result


def type_classes(bath: BathSpec, precision: str = "double") -> Iterator[TypeClass]:
    """Enumerate type classes with exact multiplicities (unsorted)."""
    ctx = working_context(precision)
    log_p, _ = site_log_probs(ctx, bath.site.levels, bath.beta)
    for counts in compositions(bath.n, bath.d):
        yield TypeClass(
            counts=counts,
            multiplicity=multinomial(counts),
            log_prob_per_state=float(ctx.fsum(k * lp for k, lp in zip(counts, log_p))),
            total_energy=math.fsum(k * h for k, h in zip(counts, bath.site.levels)),
        )


@dataclass(frozen=True)
class SortedSpectrum:
    """Descending rearrangement of a product Gibbs distribution.

    Block ``b`` covers sorted indices ``cum_counts[b] <= i < cum_counts[b+1]``,
    each with log-probability ``block_log_probs[b]``. Counts are exact Python
    integers when ``exact_counts`` is true, otherwise high-precision floats
    of the index context.
    """

    n: int
    d: int
    beta: float
    levels: tuple
    precision: str
    log_partition: object
    site_log_probs: tuple
    occupations: tuple
    block_counts: tuple
    cum_counts: tuple
    block_log_probs: tuple
    block_energies: tuple
    block_masses: tuple
    cum_probs: tuple
    exact_counts: bool
    _float_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self):
        return self.cum_counts[-1]

    @property
    def num_blocks(self) -> int:
        return len(self.block_counts)

    @property
    def ctx(self):
        return working_context(self.precision)

    @property
    def ictx(self):
        return index_context(self.precision)

    def block_of(self, index) -> int:
        return bisect_right(self.cum_counts, index) - 1

    def delta_log_prob(self, a: int, b: int):
        """``lp[a] - lp[b]`` from occupation differences (no cancellation)."""
        if a == b:
            return self.ctx.zero
        occ_a, occ_b = self.occupations[a], self.occupations[b]
        return self.ctx.fsum((ka - kb) * lp for ka, kb, lp in zip(occ_a, occ_b, self.site_log_probs))

    def log_prob_range(self):
        """Largest minus smallest log-probability over the whole array."""
        return self.delta_log_prob(0, self.num_blocks - 1)

    def float_arrays(self):
        """Per-block ``(log_probs, energies, counts)`` as numpy arrays."""
        if "arrays" not in self._float_cache:
            self._float_cache["arrays"] = (
                np.array([float(x) for x in self.block_log_probs]),
                np.array([float(x) for x in self.block_energies]),
                np.array([int(c) for c in self.block_counts], dtype=np.int64),
            )
        return self._float_cache["arrays"]

    def dense(self):
        """Per-state ``(log_probs, energies)`` arrays of length ``d**n``."""
        lp, en, counts = self.float_arrays()
        return np.repeat(lp, counts), np.repeat(en, counts)


def _count_storage_bits(n: int, d: int, blocks: int) -> float:
    return blocks * n * math.log2(d)


def build_sorted_spectrum(bath: BathSpec, precision: str = "double", max_blocks: int = MAX_BLOCKS) -> SortedSpectrum:
    """Sort the product distribution of ``bath`` into equal-probability blocks."""
    n, d, beta = bath.n, bath.d, bath.beta
    num_types = math.comb(n + d - 1, d - 1)
    if num_types > max_blocks:
        raise ResourceLimitError(f"{num_types} type classes exceed the cap of {max_blocks}")
    ctx, ictx = working_context(precision), index_context(precision)
    levels = bath.site.levels
    log_p, log_z = site_log_probs(ctx, levels, beta)

    def energy(counts):
        return ctx.fsum(k * h for k, h in zip(counts, levels))

    types = sorted((energy(c), c) for c in compositions(n, d))
    if beta == 0.0:
        groups = [types]
    else:
        scale = max(abs(h) for h in levels)
        tol = ctx.mpf(1e-12) * n * scale
        groups, current = [], [types[0]]
        for item in types[1:]:
            if item[0] - current[0][0] <= tol:
                current.append(item)
            else:
                groups.append(current)
                current = [item]
        groups.append(current)

    exact = _count_storage_bits(n, d, len(groups)) <= EXACT_COUNT_BIT_BUDGET
    # exact integers when affordable; otherwise counts live in the index
    # context and the binomial recurrence runs there directly
    num = (lambda v: v) if exact else ictx.mpf

    def multiplicity(occ, prev):
        if d == 2 and prev is not None and abs(occ[0] - prev[0]) == 1:
            k_prev, c_prev = prev
            if occ[0] == k_prev + 1:
                return c_prev * (n - k_prev) // (k_prev + 1) if exact else c_prev * (n - k_prev) / (k_prev + 1)
            return c_prev * k_prev // (n - k_prev + 1) if exact else c_prev * k_prev / (n - k_prev + 1)
        if exact:
            return multinomial(occ)
        return ictx.exp(ictx.loggamma(n + 1) - ictx.fsum(ictx.loggamma(k + 1) for k in occ))

    occupations, counts, cum, lps, energies, masses, cum_probs = [], [], [num(0)], [], [], [], [ictx.zero]
    running = num(0)
    prev = None
    running_prob = ictx.zero
    for group in groups:
        group_count = num(0)
        weighted_energy = ctx.zero
        for e, occ in group:
            mult = multiplicity(occ, prev)
            if d == 2:
                prev = (occ[0], mult)
            group_count += mult
            if len(group) > 1:
                weighted_energy += ctx.mpf(mult) * e
        rep = group[0][1]
        lp = ctx.fsum(k * q for k, q in zip(rep, log_p))
        block_energy = group[0][0] if len(group) == 1 else weighted_energy / ctx.mpf(group_count)
        mass = ictx.mpf(group_count) * ictx.exp(lp)
        running += group_count
        running_prob += mass
        occupations.append(rep)
        counts.append(group_count)
        cum.append(running)
        lps.append(lp)
        energies.append(block_energy)
        masses.append(mass)
        cum_probs.append(running_prob)
    if exact and running != d**n:
        raise ArithmeticError("type-class multiplicities do not add up to d**n")
    if not exact:
        # rounding can push the running sum past d**n; clamping keeps the
        # boundaries monotone and the last one exact
        size = ictx.mpf(d) ** n
        cum = [min(c, size) for c in cum]
        cum[-1] = size
        counts = [hi - lo for lo, hi in zip(cum, cum[1:])]
    return SortedSpectrum(
        n=n,
        d=d,
        beta=beta,
        levels=levels,
        precision=precision,
        log_partition=log_z,
        site_log_probs=tuple(log_p),
        occupations=tuple(occupations),
        block_counts=tuple(counts),
        cum_counts=tuple(cum),
        block_log_probs=tuple(lps),
        block_energies=tuple(energies),
        block_masses=tuple(masses),
        cum_probs=tuple(cum_probs),
        exact_counts=exact,
    )


def sorted_value_at(spec: SortedSpectrum, index) -> float:
    """Log-probability of the state at sorted position ``index`` (0-based)."""
    if not 0 <= index < spec.size:
        raise ValidationError(f"index {index} outside [0, d**n)")
    return float(spec.block_log_probs[spec.block_of(index)])


def sorted_type_classes(spec: SortedSpectrum) -> list:
    """Blocks of ``spec`` as :class:`TypeClass` records (merged blocks keep a representative)."""
    return [
        TypeClass(occ, int(c), float(lp), float(e))
        for occ, c, lp, e in zip(spec.occupations, spec.block_counts, spec.block_log_probs, spec.block_energies)
    ]


__all__ = [
    "PRESETS",
    "SiteSpectrum",
    "BathSpec",
    "MomentSet",
    "TypeClass",
    "SortedSpectrum",
    "gibbs_site_probs",
    "moments",
    "entropy_of",
    "type_classes",
    "build_sorted_spectrum",
    "sorted_value_at",
    "sorted_type_classes",
    "site_log_probs",
    "site_state",
    "compositions",
    "multinomial",
]
