"""Optimal work extraction between two finite heat baths."""

from .bath import (
    BathSpec,
    MomentSet,
    SiteSpectrum,
    SortedSpectrum,
    build_sorted_spectrum,
    entropy_of,
    gibbs_site_probs,
    moments,
    sorted_value_at,
)
from .errors import FiniteBathError, InfeasibleError, NumericalError, ResourceLimitError, ValidationError
