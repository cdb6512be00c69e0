"""Exception hierarchy shared across the package."""


class StokepError(Exception):
    """Base class for all stokep errors."""


class InvalidArgumentError(StokepError, ValueError):
    """An operation received arguments outside its contract."""


class NumericDomainError(StokepError, ArithmeticError):
    """An evaluation left the numeric domain (non-finite or singular state)."""


class CollisionError(NumericDomainError):
    """A two-body state reached the collision guard radius."""


class UnboundOrbitError(NumericDomainError):
    """Element extraction was requested for a non-elliptic state (H >= 0)."""


class PericenterUndefinedError(NumericDomainError):
    """Eccentricity too small for the pericenter angle to be meaningful."""

    def __init__(self, message, a=None, e=None):
        super().__init__(message)
        self.a = a
        self.e = e


class PericenterSingularityError(NumericDomainError):
    """Gauss-equation evaluation below the eccentricity singularity threshold."""


class IntegrationFailureError(StokepError):
    """Numeric failure mid-run; carries the valid partial trajectory."""

    def __init__(self, message, partial=None, step_index=None):
        super().__init__(message)
        self.partial = partial
        self.step_index = step_index


class EnsembleDegenerateError(StokepError):
    """Too few realizations survived exclusion for estimates to be formed."""


class InconclusiveStudyError(StokepError):
    """Monte Carlo noise hides the convergence signal of a weak-error study."""


class ConfigError(StokepError):
    """Configuration file or command-line parsing problem."""
