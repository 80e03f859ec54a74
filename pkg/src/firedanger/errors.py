"""Exception hierarchy shared by every stage of the pipeline."""


class FireDangerError(Exception):
    """Base class for all package errors."""


class DimensionError(FireDangerError, ValueError):
    pass


class ParameterError(FireDangerError, ValueError):
    pass


class NumericError(FireDangerError, ArithmeticError):
    pass


class GraphError(FireDangerError):
    pass


class GridError(FireDangerError, ValueError):
    pass


class SchemaError(FireDangerError, ValueError):
    pass


class StateError(FireDangerError):
    pass


class BoundsError(FireDangerError, IndexError):
    pass


class ConfigError(FireDangerError, ValueError):
    pass


class DivergenceError(FireDangerError, ArithmeticError):
    pass


class UndefinedMetricError(FireDangerError, ValueError):
    pass


class SampleRejected(FireDangerError):
    """Raised when an extraction window contains missing data."""


class FormatError(FireDangerError, ValueError):
    """Malformed binary file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
