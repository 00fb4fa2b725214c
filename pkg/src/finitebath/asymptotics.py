"""Large-n expansions of the optimal and protocol efficiencies.

Coefficients are built from the per-site variance and skewness of each bath.
``c1`` and ``c2`` give the thermodynamic efficiency to second order in q/n;
``d1`` is the extra q/n**2 loss of the sort/swap protocol for non-lattice
spectra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

from .bath import MomentSet, SiteSpectrum
from .errors import ValidationError

SMALL_PARAMETER_WARN = 0.1
LATTICE_MAX_DENOMINATOR = 1000


class ExpansionRegimeWarning(UserWarning):
    """An expansion was evaluated outside its small-parameter regime."""


@dataclass(frozen=True)
class ExpansionCoeffs:
    c1: float
    c2: float
    d1: float


@dataclass(frozen=True)
class LatticeClass:
    kind: str  # "lattice" or "non-lattice"
    span: float | None = None
    near_boundary: bool = False

    @property
    def is_lattice(self) -> bool:
        return self.kind == "lattice"


def coeff_c1(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> float:
    inv_hot = 1.0 / (2.0 * beta_hot**2 * hot.variance)
    inv_cold = 1.0 / (2.0 * beta_cold**2 * cold.variance)
    return (inv_hot + inv_cold) * beta_hot**2 / beta_cold


def coeff_c1_from_psi(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> float:
    """Same coefficient written through the psi-function derivatives."""
    return (hot.psi_prime + cold.psi_prime) * beta_hot**2 / (2.0 * beta_cold)


def coeff_c2(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> float:
    """Second-order coefficient, written through the psi derivatives.

    Expanding the entropy balance to third order in q/n gives
    ``(psi''_H/6 - psi''_L/6 + psi'_L**2/2 + psi'_H psi'_L/2) beta_H**3/beta_L``.
    """
    bracket = (
        hot.psi_double_prime / 6.0
        - cold.psi_double_prime / 6.0
        + cold.psi_prime**2 / 2.0
        + hot.psi_prime * cold.psi_prime / 2.0
    )
    return bracket * beta_hot**3 / beta_cold


def coeff_c2_energy_skew(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> float:
    """The same bracket with ``psi''`` replaced by ``-gamma/(beta sigma)**3``.

    Kept for comparison only: it flips the sign of both skewness terms and
    disagrees with a direct Taylor expansion of the optimal efficiency.
    """
    sh, sl = math.sqrt(hot.variance), math.sqrt(cold.variance)
    bh, bl = beta_hot, beta_cold
    bracket = (
        -hot.skewness / (6.0 * (bh * sh) ** 3)
        + cold.skewness / (6.0 * (bl * sl) ** 3)
        + 1.0 / (2.0 * (bl * sl) ** 4)
        + 1.0 / (2.0 * (bh * sh) ** 2 * (bl * sl) ** 2)
    )
    return bracket * bh**3 / bl


def coeff_d1(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> float:
    """Protocol loss coefficient ``[(psi''/(2 psi') - psi')_H**2 + (same)_L**2] beta_H**2/beta_L``."""
    term_hot = hot.psi_double_prime / (2.0 * hot.psi_prime) - hot.psi_prime
    term_cold = cold.psi_double_prime / (2.0 * cold.psi_prime) - cold.psi_prime
    return (term_hot**2 + term_cold**2) * beta_hot**2 / beta_cold


def expansion_coeffs(hot: MomentSet, cold: MomentSet, beta_hot: float, beta_cold: float) -> ExpansionCoeffs:
    return ExpansionCoeffs(
        c1=coeff_c1(hot, cold, beta_hot, beta_cold),
        c2=coeff_c2(hot, cold, beta_hot, beta_cold),
        d1=coeff_d1(hot, cold, beta_hot, beta_cold),
    )


def _check_small(coeffs: ExpansionCoeffs, q: float, n: int):
    if coeffs.c1 * q / n > SMALL_PARAMETER_WARN:
        warnings.warn(
            f"c1*q/n = {coeffs.c1 * q / n:.3g} exceeds {SMALL_PARAMETER_WARN}; expansion may be inaccurate",
            ExpansionRegimeWarning,
            stacklevel=3,
        )


def eta_thermo_expansion(coeffs: ExpansionCoeffs, beta_hot, beta_cold, q, n, order: int = 2) -> float:
    """Carnot efficiency minus the first ``order`` powers of q/n."""
    if order not in (1, 2):
        raise ValidationError("expansion order must be 1 or 2")
    _check_small(coeffs, q, n)
    x = q / n
    eta = 1.0 - beta_hot / beta_cold - coeffs.c1 * x
    if order == 2:
        eta -= coeffs.c2 * x * x
    return eta


def eta_protocol_expansion(coeffs: ExpansionCoeffs, beta_hot, beta_cold, q, n, lattice: LatticeClass) -> float:
    """Expansion of the sort/swap protocol efficiency.

    Non-lattice spectra get the second-order thermodynamic expansion minus
    ``d1 q / n**2``; lattice spectra only the first-order term.
    """
    if lattice.is_lattice:
        return eta_thermo_expansion(coeffs, beta_hot, beta_cold, q, n, order=1)
    return eta_thermo_expansion(coeffs, beta_hot, beta_cold, q, n, order=2) - coeffs.d1 * q / n**2


def block_size_m(beta_hot: float, q: float, n: int, sigma2_hot: float, d: int) -> int:
    """Number of base-d digits swapped between the baths for target heat ``q``."""
    if q <= 0:
        raise ValidationError("target heat must be positive")
    m = math.floor((beta_hot * q + q * q / (2.0 * n * sigma2_hot)) / math.log(d))
    if m >= n:
        raise ValidationError(f"block size m={m} must be smaller than n={n}")
    return m


def heat_for_block_size(beta_hot: float, m: int, n: int, sigma2_hot: float, d: int) -> float:
    """Heat at which the unfloored block-size rule gives exactly ``m`` digits.

    Inverts ``beta q + q**2 / (2 n sigma2) = m log d`` for ``q > 0``. The
    difference from the target heat is the part of ``Q_H - Q_n`` that comes
    from rounding ``m`` down to an integer.
    """
    if m < 0:
        raise ValidationError("block size must be non-negative")
    scale = n * sigma2_hot
    return scale * (math.sqrt(beta_hot**2 + 2.0 * m * math.log(d) / scale) - beta_hot)


def lattice_classify(site: SiteSpectrum, tol: float = 1e-9, max_denominator: int = LATTICE_MAX_DENOMINATOR) -> LatticeClass:
    """Decide whether all level differences lie on a common lattice ``span * Z``.

    Difference ratios are reduced to fractions by continued fractions; the
    span is the reference difference times gcd(numerators)/lcm(denominators).
    """
    levels = sorted(set(site.levels))
    diffs = [b - a for a in levels for b in levels if b > a]
    ref = min(diffs)
    fractions, worst = [], 0.0
    for diff in diffs:
        ratio = diff / ref
        frac = Fraction(ratio).limit_denominator(max_denominator)
        error = abs(ratio - frac) / ratio
        worst = max(worst, error)
        fractions.append(frac)
    if worst > tol:
        near = worst < 10 * tol
        if near:
            warnings.warn("spectrum is close to the lattice/non-lattice boundary", ExpansionRegimeWarning, stacklevel=2)
        return LatticeClass("non-lattice", None, near)
    num_gcd = reduce(math.gcd, (f.numerator for f in fractions))
    den_lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fractions))
    near = worst > tol / 10
    return LatticeClass("lattice", ref * num_gcd / den_lcm, near)


def _regime_check(m: int, n: int, d: int):
    if m * math.log(d) > n / 10:
        warnings.warn("m log d exceeds n/10; the D expansions assume m log d = o(n)", ExpansionRegimeWarning, stacklevel=3)


def dx_asymptotic(mom: MomentSet, m: int, n: int, lattice: LatticeClass, d: int = 2) -> float:
    """Closed-form large-n value of the hot-side divergence for block size ``m``."""
    _regime_check(m, n, d)
    if m == 0:
        return 0.0
    a = m * math.log(d)
    p1, p2 = mom.psi_prime, mom.psi_double_prime
    lead = a * a / n * p1 / 2.0
    if lattice.is_lattice:
        return lead
    return lead + a**3 / n**2 * (p2 / 6.0 - p1 * p1 / 2.0) + a * a / n**2 * (p2 / (2.0 * p1) - p1) ** 2


def dy_asymptotic(mom: MomentSet, m: int, n: int, lattice: LatticeClass, d: int = 2) -> float:
    """Cold-side counterpart of :func:`dx_asymptotic` (cubic term sign flipped)."""
    _regime_check(m, n, d)
    if m == 0:
        return 0.0
    a = m * math.log(d)
    p1, p2 = mom.psi_prime, mom.psi_double_prime
    lead = a * a / n * p1 / 2.0
    if lattice.is_lattice:
        return lead
    return lead + a**3 / n**2 * (-p2 / 6.0 + p1 * p1 / 2.0) + a * a / n**2 * (p2 / (2.0 * p1) - p1) ** 2
