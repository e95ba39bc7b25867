"""Exception hierarchy shared across the package."""


class SingviError(Exception):
    """Base class for all library errors."""


class DomainError(SingviError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedModelError(SingviError):
    """The model falls outside the class handled by the requested method."""


class ConditioningError(SingviError):
    """The requested representation is too ill-conditioned to evaluate."""


class NumericalFailure(SingviError):
    """An iterative or adaptive routine failed to reach its target."""


class ConvergenceError(NumericalFailure):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
