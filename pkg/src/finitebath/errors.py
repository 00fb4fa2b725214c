"""Exception hierarchy shared by the library and the command line front end."""


class FiniteBathError(Exception):
    """Base class for all library errors."""


class ValidationError(FiniteBathError, ValueError):
    """Invalid input: bad spectrum, temperature, heat, block size, ..."""


class InfeasibleError(ValidationError):
    """The requested heat cannot be drawn from, or dumped into, the baths."""


class NumericalError(FiniteBathError, ArithmeticError):
    """A solver did not converge or a numerical invariant broke."""


class ResourceLimitError(FiniteBathError, MemoryError):
    """The computation would exceed a configured size cap."""
