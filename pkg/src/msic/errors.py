"""Exception hierarchy shared by every module."""


class MsicError(Exception):
    """Base class for all library errors."""


class DimensionError(MsicError, ValueError):
    pass


class PreconditionError(MsicError, ValueError):
    pass


class NumericError(MsicError, ArithmeticError):
    """A NaN or infinity showed up where finite values are required."""


class ParseError(MsicError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(MsicError, ValueError):
    pass


class ConfigError(MsicError, ValueError):
    pass


class ParameterError(MsicError, ValueError):
    pass


class SizeError(MsicError, ValueError):
    pass


class TrainingError(MsicError, RuntimeError):
    pass


class MetricUndefined(MsicError, ValueError):
    """Raised when a metric has no defined value for the given inputs.

    Report builders catch this and record ``null`` together with ``reason``.
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)
