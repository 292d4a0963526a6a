"""Exception taxonomy shared across the package.

Every failure the library can report deliberately is an ``AlertaNetError``
subclass, so callers (and the CLI) can distinguish our diagnostics from
genuine bugs.
"""


class AlertaNetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AlertaNetError):
    """Matrix/vector shapes are incompatible for the requested operation."""


class DomainError(AlertaNetError, ValueError):
    """A scalar argument violates its precondition (e.g. nonpositive price)."""


class UsageError(AlertaNetError):
    """The API was called out of order or with conflicting arguments."""


class SchemaError(AlertaNetError):
    """An input file is missing required columns."""


class ParseError(AlertaNetError):
    """An input file contains a cell that cannot be parsed."""


class DataIntegrityError(AlertaNetError):
    """Input data violates an integrity rule (duplicate dates, bad prices)."""


class PreprocessingError(AlertaNetError):
    """Feature values violate preprocessing preconditions (negative entries)."""


class ConfigError(AlertaNetError):
    """A configuration value or combination is invalid."""


class TrainingError(AlertaNetError):
    """Training aborted (e.g. non-finite loss)."""


class CheckpointError(AlertaNetError):
    """A checkpoint file is malformed or inconsistent with the data."""


class UndefinedMetricError(AlertaNetError):
    """The requested metric is undefined for the given inputs."""
