"""Exact finite sums over the virtual sorted array of a bath.

The sorted array has ``d**n`` entries but is constant on each block of a
:class:`SortedSpectrum`, so sums of functions of ``P(i)`` and ``P(phi(i))``
for a monotone index map ``phi`` split into at most ``2 * blocks`` constant
segments. Window sums ``sum_r P(k w + r)`` and residue-class sums
``sum_t P(r + t M)`` are likewise piecewise constant in ``k`` and ``r``.

Indices are Python integers when the spectrum stores exact counts and
high-precision floats otherwise; the helpers below handle both.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bath import SortedSpectrum
from .errors import ResourceLimitError

MAX_SEGMENTS = 10**7


def _fdiv(spec: SortedSpectrum, x, q):
    if spec.exact_counts:
        return x // q
    return spec.ictx.floor(x / q)


def _cdiv(spec: SortedSpectrum, x, q):
    if spec.exact_counts:
        return -(-x // q)
    return spec.ictx.ceil(x / q)


def _mod(spec: SortedSpectrum, x, q):
    if spec.exact_counts:
        return x % q
    r = x - spec.ictx.floor(x / q) * q
    return min(max(r, spec.ictx.zero), q - 1)


def _num(spec: SortedSpectrum, v):
    return v if spec.exact_counts else spec.ictx.mpf(v)


def block_probs(spec: SortedSpectrum) -> list:
    """Per-state probability of each block, in the index context."""
    key = "probs"
    if key not in spec._float_cache:
        ictx = spec.ictx
        spec._float_cache[key] = [ictx.exp(lp) for lp in spec.block_log_probs]
    return spec._float_cache[key]


def preimage_boundaries(spec: SortedSpectrum, q, kind: str) -> list:
    """Start index of the preimage of each block under an index map.

    ``kind`` selects the map: ``"floor"`` is i -> floor(i/q), ``"ceil"`` is
    i -> ceil(i/q), and ``"scale"`` is j -> j*q with indices past the end
    clamped onto the last block.
    """
    q = _num(spec, q)
    cum, size = spec.cum_counts, spec.size
    if kind == "floor":
        inner = [min(c * q, size) for c in cum[1:-1]]
    elif kind == "ceil":
        inner = [min((c - 1) * q + 1, size) for c in cum[1:-1]]
    elif kind == "scale":
        inner = [_cdiv(spec, c, q) for c in cum[1:-1]]
    else:
        raise ValueError(f"unknown index map {kind!r}")
    return [_num(spec, 0)] + inner + [size]


def overlay(spec: SortedSpectrum, targets: list):
    """Yield ``(lo, hi, b, b_target)`` for the common refinement of two partitions."""
    cum = spec.cum_counts
    blocks = spec.num_blocks
    b = bt = 0
    lo = cum[0]
    emitted = 0
    while b < blocks and bt < blocks:
        hi = min(cum[b + 1], targets[bt + 1])
        if hi > lo:
            emitted += 1
            if emitted > MAX_SEGMENTS:
                raise ResourceLimitError(f"segment count exceeds the cap of {MAX_SEGMENTS}")
            yield lo, hi, b, bt
            lo = hi
        if cum[b + 1] <= hi:
            b += 1
        if targets[bt + 1] <= hi:
            bt += 1


def sorted_divergence(spec: SortedSpectrum, m: int, side: str, rounding: str = "ceil"):
    """Hot-side (``side="x"``) or cold-side (``side="y"``) divergence, in the working context."""
    if m == 0:
        return spec.ctx.zero
    ictx = spec.ictx
    q = spec.d**m
    shift = m * ictx.log(spec.d)
    probs = block_probs(spec)
    terms = []
    if side == "x":
        targets = preimage_boundaries(spec, q, rounding)
        for lo, hi, b, bt in overlay(spec, targets):
            terms.append(ictx.mpf(hi - lo) * probs[b] * (shift + spec.delta_log_prob(b, bt)))
    else:
        targets = preimage_boundaries(spec, q, "scale")
        for lo, hi, b, bt in overlay(spec, targets):
            terms.append(ictx.mpf(hi - lo) * probs[b] * (spec.delta_log_prob(b, bt) - shift))
    return spec.ctx.mpf(ictx.fsum(terms))


def d_x_n(spec: SortedSpectrum, m: int, rounding: str = "ceil") -> float:
    """Hot-side divergence ``sum_i P(i) log(d**m P(i) / P(c(i)))``.

    ``c(i)`` is ``ceil(i / d**m)`` by default or ``floor(i / d**m)``.
    """
    _check_m(spec, m)
    return float(sorted_divergence(spec, m, "x", rounding))


def d_y_n(spec: SortedSpectrum, m: int) -> float:
    """Cold-side divergence ``sum_j P(j) log(P(j) / (d**m P(d**m j)))``.

    Positions past the end of the array take the last block's probability.
    """
    _check_m(spec, m)
    return float(sorted_divergence(spec, m, "y"))


def _check_m(spec: SortedSpectrum, m: int):
    from .errors import ValidationError

    if int(m) != m or not 0 <= m < spec.n:
        raise ValidationError(f"block size must satisfy 0 <= m < n, got m={m}, n={spec.n}")


def mass_from(spec: SortedSpectrum, start):
    """``sum_{i >= start} P(i)`` without cancellation."""
    ictx = spec.ictx
    if start <= 0:
        return ictx.one
    if start >= spec.size:
        return ictx.zero
    b = spec.block_of(start)
    probs = block_probs(spec)
    part = ictx.mpf(spec.cum_counts[b + 1] - start) * probs[b]
    return part + ictx.fsum(spec.block_masses[b + 1 :])


def tail_mass(spec: SortedSpectrum, m: int):
    """Mass of sorted indices at or beyond ``d**(n-m)``."""
    return mass_from(spec, _num(spec, spec.d ** (spec.n - m)))


@dataclass(frozen=True)
class Pieces:
    """Piecewise-constant nonnegative function on ``[0, length)``.

    ``starts[k] <= x < ends[k]`` has value ``values[k]``; pieces are sorted
    and cover the domain without gaps.
    """

    starts: tuple
    ends: tuple
    values: tuple

    def entropy(self, ictx):
        return ictx.fsum(
            -ictx.mpf(e - s) * v * ictx.log(v) for s, e, v in zip(self.starts, self.ends, self.values) if v > 0
        )

    def total(self, ictx):
        return ictx.fsum(ictx.mpf(e - s) * v for s, e, v in zip(self.starts, self.ends, self.values))


def _segment_mass(spec: SortedSpectrum, start, stop):
    """``sum_{start <= i < stop} P(i)`` by walking the blocks it touches."""
    ictx = spec.ictx
    probs = block_probs(spec)
    b = spec.block_of(start)
    total = []
    lo = start
    while lo < stop:
        hi = min(spec.cum_counts[b + 1], stop)
        total.append(ictx.mpf(hi - lo) * probs[b])
        lo = hi
        b += 1
    return ictx.fsum(total)


def window_masses(spec: SortedSpectrum, width) -> Pieces:
    """``A(k) = sum_{r < width} P(k * width + r)`` for ``k < d**n / width``."""
    width = _num(spec, width)
    cum = spec.cum_counts
    probs = block_probs(spec)
    ictx = spec.ictx
    found = []
    for b in range(spec.num_blocks):
        k_lo, k_hi = _cdiv(spec, cum[b], width), _fdiv(spec, cum[b + 1], width)
        if k_hi > k_lo:
            found.append((k_lo, k_hi, ictx.mpf(width) * probs[b]))
    straddled = sorted({_fdiv(spec, c, width) for c in cum[1:-1] if _mod(spec, c, width) != 0})
    for k in straddled:
        found.append((k, k + 1, _segment_mass(spec, k * width, (k + 1) * width)))
    found.sort(key=lambda piece: piece[0])
    return Pieces(*map(tuple, zip(*found)))


def residue_masses(spec: SortedSpectrum, modulus) -> Pieces:
    """``R(r) = sum_t P(r + t * modulus)`` for ``r < modulus`` (modulus divides d**n).

    ``R(r) = base + sum_b [r < C_b mod M] (p_{b-1} - p_b)`` over interior
    block starts ``C_b``; every term is nonnegative.
    """
    modulus = _num(spec, modulus)
    cum = spec.cum_counts
    probs = block_probs(spec)
    ictx = spec.ictx
    base = ictx.fsum(
        ictx.mpf(_fdiv(spec, cum[b + 1], modulus) - _fdiv(spec, cum[b], modulus)) * probs[b] for b in range(spec.num_blocks)
    )
    jumps = {}
    for b in range(1, spec.num_blocks):
        r = _mod(spec, cum[b], modulus)
        if r == 0:
            continue
        # p_{b-1} - p_b = p_b * expm1(lp_{b-1} - lp_b)
        step = probs[b] * ictx.expm1(spec.delta_log_prob(b - 1, b))
        jumps[r] = jumps.get(r, ictx.zero) + step
    cuts = sorted(jumps, reverse=True)
    starts, ends, values = [], [], []
    upper = modulus
    # running sum of nonnegative terms: no cancellation
    acc = base
    for r in cuts:
        if upper > r:
            starts.append(r)
            ends.append(upper)
            values.append(acc)
        acc += jumps[r]
        upper = r
    if upper > 0:
        starts.append(_num(spec, 0))
        ends.append(upper)
        values.append(acc)
    return Pieces(tuple(reversed(starts)), tuple(reversed(ends)), tuple(reversed(values)))


def multiples_excess(spec: SortedSpectrum, q):
    """``sum_k q P(k q) - 1``: the excess mass of the sampled hot marginal.

    Per block this is ``p_b (q * #multiples - count)`` with a small integer
    factor, so the result carries no cancellation.
    """
    q = _num(spec, q)
    probs = block_probs(spec)
    ictx = spec.ictx
    cum = spec.cum_counts
    return ictx.fsum(
        probs[b] * ictx.mpf(q * (_cdiv(spec, cum[b + 1], q) - _cdiv(spec, cum[b], q)) - (cum[b + 1] - cum[b]))
        for b in range(spec.num_blocks)
    )
