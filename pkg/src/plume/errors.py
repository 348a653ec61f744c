"""Exception types shared across the package."""


class PlumeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PlumeError):
    """Invalid configuration or parameter value."""


class DataError(PlumeError):
    """Problem with input data: files, labels, degenerate datasets."""


class DimensionError(PlumeError):
    """Shapes of model parameters and data do not agree."""

    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class NumericalError(PlumeError):
    """Numerical failure: non-finite values or an unsolvable linear system."""


class NonAscentDirectionError(NumericalError):
    """Line search was handed a direction with non-positive directional derivative."""


class ArmijoExhaustedError(NumericalError):
    """Backtracking ran out of attempts without sufficient increase.

    Carries the best step among those tried so callers can inspect how
    close the search came.
    """

    def __init__(self, message, best_step=None):
        super().__init__(message)
        self.best_step = best_step
