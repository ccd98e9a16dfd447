"""
Exception hierarchy for odgae.

Every error the pipeline raises on purpose derives from OdgaeError and
carries the process exit code the CLI reports for it.
"""
from typing import Optional


class OdgaeError(Exception):
    """Base class for all expected odgae failures."""
    exit_code = 1


class ConfigError(OdgaeError):
    """Invalid configuration, usage, or experiment setup."""
    exit_code = 1


class DataError(OdgaeError):
    """Problem with input data or a stored container."""
    exit_code = 2


class SchemaError(DataError):
    """A column named by the record schema is missing from the header."""

    def __init__(self, column: str, source: str = "<stream>"):
        self.column = column
        self.source = source
        super().__init__(f"{source}: missing column '{column}'")


class RecordError(DataError):
    """A single input row could not be parsed or violates a precondition."""

    def __init__(self, line: int, message: str, source: str = "<stream>"):
        self.line = line
        self.source = source
        super().__init__(f"{source}:{line}: {message}")


class ZoneSelectionError(DataError):
    """Fewer zones are available than were requested."""

    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(
            f"requested {requested} zones but only {available} distinct zones are available"
        )


class DegenerateScalerError(DataError):
    """Training travel times do not span a usable range."""


class ContainerError(DataError):
    """A dataset or checkpoint container is corrupt or incompatible."""

    def __init__(self, message: str, parameter: Optional[str] = None):
        self.parameter = parameter
        super().__init__(message if parameter is None else f"{parameter}: {message}")


class QueryError(DataError):
    """An edge query references a node outside the graph."""


class EmptyTargetError(QueryError):
    """A snapshot without edges carries nothing to reconstruct."""


class NumericError(OdgaeError):
    """Numerical failure during training or evaluation."""
    exit_code = 3


class NonFiniteGradientError(NumericError):
    """A gradient entry is NaN or infinite."""

    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"non-finite gradient in parameter '{parameter}'")


class DimensionError(NumericError, ValueError):
    """Operand shapes do not agree."""


class DomainError(NumericError, ValueError):
    """An argument lies outside the domain of an operation."""


class UndefinedMetricError(NumericError):
    """A metric is undefined for the given labels."""
