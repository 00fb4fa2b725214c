"""Precision contexts and small numerical helpers.

All multi-precision arithmetic goes through private mpmath contexts so that
the global ``mpmath.mp`` state is never touched. Contexts are cached per
thread because mpmath temporarily raises the precision inside some functions.
"""

import math
import threading

from mpmath.ctx_mp import MPContext

from .errors import ValidationError

PRECISION_BITS = {"double": 53, "extended": 113}
# extra bits used for index (count) arithmetic on huge virtual arrays
GUARD_BITS = 64
# auto precision switches to extended from this particle count on
EXTENDED_FROM_N = 10_000

_local = threading.local()


def check_precision(precision: str) -> str:
    if precision not in PRECISION_BITS:
        raise ValidationError(f"unknown precision {precision!r}; expected one of {sorted(PRECISION_BITS)}")
    return precision


def resolve_precision(precision: str, n: int) -> str:
    """Map ``"auto"`` onto a concrete precision for an ``n``-particle problem."""
    if precision == "auto":
        return "extended" if n >= EXTENDED_FROM_N else "double"
    return check_precision(precision)


def _context(bits: int) -> MPContext:
    cache = getattr(_local, "contexts", None)
    if cache is None:
        cache = _local.contexts = {}
    ctx = cache.get(bits)
    if ctx is None:
        ctx = MPContext()
        ctx.prec = bits
        cache[bits] = ctx
    return ctx


def working_context(precision: str) -> MPContext:
    """Context used for probabilities, energies and entropies."""
    return _context(PRECISION_BITS[check_precision(precision)])


def index_context(precision: str) -> MPContext:
    """Context with guard bits, used for big counts and prefix sums."""
    return _context(PRECISION_BITS[check_precision(precision)] + GUARD_BITS)


def shannon_entropy(probs) -> float:
    """Entropy in nats of a probability vector, ignoring zero entries."""
    return -math.fsum(p * math.log(p) for p in probs if p > 0.0)
