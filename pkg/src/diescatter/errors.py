"""Exception hierarchy shared by all modules."""


class DieError(Exception):
    """Base class for solver errors."""


class InvalidParameterError(DieError, ValueError):
    pass


class DomainError(DieError, ValueError):
    """An argument lies outside the domain of a formula."""


class OutOfDomainError(DieError, ValueError):
    """A scatterer is not covered by the computational grid."""


class GridMismatchError(DieError, ValueError):
    pass


class ResourceCapError(DieError):
    """A dense operation was requested above its size cap."""


class BreakdownError(DieError):
    """GMRES least-squares problem became singular.

    The partial :class:`~diescatter.krylov.ConvergenceRecord` is attached as
    ``record``.
    """

    def __init__(self, message, record=None, solution=None):
        super().__init__(message)
        self.record = record
        self.solution = solution


class NumericalFailureError(DieError):
    pass


class DegenerateBasisError(DieError):
    pass


class TruncationError(DieError):
    pass


class ConfigError(DieError, ValueError):
    pass
