"""Exception hierarchy shared by all modules.

The CLI maps ``ValidationError`` to exit code 2 and ``NumericalError`` to
exit code 3.
"""


class GicarError(Exception):
    """Base class for package errors."""


class ValidationError(GicarError, ValueError):
    """Input rejected before any computation (bad shape, domain or parameters)."""


class DomainError(ValidationError):
    """Argument outside the domain of an operation (empty window, t < 0, ...)."""


class ParameterError(ValidationError):
    """Family or operator parameters violate an admissibility condition."""


class SpectralGapError(ValidationError):
    """A spectral threshold falls too close to an eigenvalue."""


class NumericalError(GicarError, ArithmeticError):
    """Numerical result could not be certified to the requested tolerance."""


class PrecisionError(NumericalError):
    """Loss of orthogonality or accuracy beyond tolerance."""


class TruncationError(NumericalError):
    """Window truncation leaks more mass than allowed."""


class StatisticsError(NumericalError):
    """Monte Carlo run produced no usable samples."""
