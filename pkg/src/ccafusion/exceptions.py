"""Exception hierarchy shared by all modules."""


class CCAError(Exception):
    """Base class for every error raised by :mod:`ccafusion`."""


class DimensionError(CCAError, ValueError):
    """Shapes of the inputs are inconsistent."""


class DomainError(CCAError, ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(DomainError):
    """A documented precondition (e.g. unit norm) was violated by the caller."""


class ConfigError(CCAError, ValueError):
    """Invalid experiment or simulation configuration."""


class DataError(CCAError, OSError):
    """Input files are missing or malformed."""


class SingularityError(CCAError, ArithmeticError):
    """A matrix that has to be inverted is (numerically) singular."""

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class DegenerateError(CCAError, ArithmeticError):
    """The problem has no informative solution (zero cross-covariance, collapsed basis, ...)."""


class TrainingError(CCAError, RuntimeError):
    """Iterative training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
