"""Exception hierarchy shared by every lqrlab module."""


class LqrLabError(Exception):
    """Base class for all errors raised by lqrlab."""


class DimensionError(LqrLabError, ValueError):
    pass


class NotPositiveDefiniteError(LqrLabError, ValueError):
    pass


class InstabilityError(LqrLabError):
    """A gain or linear map has spectral radius >= 1 where stability is required."""


class NotStabilizableError(LqrLabError):
    pass


class ValidationError(LqrLabError, ValueError):
    pass


class NumericError(LqrLabError, ArithmeticError):
    pass


class DivergenceError(LqrLabError):
    """Training or simulation left the stable region.

    ``trace`` holds whatever was recorded before the failure (may be None for
    plain rollouts).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(LqrLabError, ValueError):
    pass


class FitError(LqrLabError, ValueError):
    pass


class ExperimentError(LqrLabError):
    pass
