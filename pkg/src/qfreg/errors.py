"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class QfregError(Exception):
    exit_code = 1


class DomainError(QfregError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class InsufficientDataError(DomainError):
    pass


class DegenerateDesignError(DomainError):
    pass


class DegeneratePredictionError(DomainError):
    pass


class ConsistencyError(DomainError):
    pass


class InferenceUnavailableError(DomainError):
    """The plug-in density is undefined for this fit (e.g. zero scale estimate)."""


class DataFormatError(DomainError):
    """Malformed input file; the message names the row and column."""


class AccuracyError(QfregError, ArithmeticError):
    """Numerical refinement stopped before reaching the requested tolerance."""

    exit_code = 3

    def __init__(self, message, best_estimate=None, error_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


class InputOutputError(QfregError, OSError):
    """A file could not be read or written."""

    exit_code = 4
