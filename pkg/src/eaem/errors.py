"""Exception hierarchy shared by all modules."""


class EaemError(Exception):
    """Base class for errors raised by this package."""


class DomainError(EaemError, ValueError):
    """An argument lies outside the range where a formula is valid."""


class ConfigurationError(EaemError, ValueError):
    """Inconsistent or incomplete configuration (missing table entries, bad sizes)."""


class NumericError(EaemError, ArithmeticError):
    """A numerical procedure (quadrature, diagonalization) failed to converge."""


class DegenerateSpecimenError(NumericError):
    """The diverging-beam condition has no crossing in (0, pi)."""


class EstimationError(EaemError, ValueError):
    """No usable outcomes were available to form an estimate."""
