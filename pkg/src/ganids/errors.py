"""Exception hierarchy shared across the pipeline."""


class GanidsError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GanidsError, ValueError):
    """Array dimensions do not fit the operation."""


class ParameterError(GanidsError, ValueError):
    """A scalar argument is outside its valid range."""


class DataError(GanidsError, ValueError):
    """Problems with input data: ingestion, encoding, labels, selection."""


class IngestionError(DataError):
    pass


class EncodingError(DataError):
    pass


class LabelError(DataError):
    pass


class SelectionError(DataError):
    pass


class TrainingError(GanidsError, RuntimeError):
    """Numerical failure during optimisation (non-finite loss or gradient)."""


class ConfigError(GanidsError, ValueError):
    pass


class CheckpointError(GanidsError, ValueError):
    """Unreadable, truncated, corrupted or incompatible checkpoint file."""


class StageError(GanidsError, RuntimeError):
    """A pipeline stage is missing upstream artifacts or would clobber stale ones."""
