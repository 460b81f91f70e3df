"""Exception hierarchy shared by every kinepipe module."""


class KinepipeError(Exception):
    """Base class for all errors raised by kinepipe."""


class ModelParseError(KinepipeError):
    """Model description could not be parsed or failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(KinepipeError, ValueError):
    """Array shapes are inconsistent with the model or with each other."""


class SolverError(KinepipeError):
    """The fitting solver could not produce a step (e.g. singular normal equations)."""


class InputError(KinepipeError, ValueError):
    """Invalid numeric input, such as NaN detections."""


class StageError(KinepipeError):
    """A pipeline stage was misused or failed."""


class ArchiveError(KinepipeError):
    """An intermediate archive is missing, malformed or corrupt."""


class ConfigError(KinepipeError, ValueError):
    """A configuration value or file is invalid."""


class PipelineError(KinepipeError):
    """A pipeline run failed; carries the batch index when known."""

    def __init__(self, message, batch_index=None):
        self.batch_index = batch_index
        if batch_index is not None:
            message = f"batch {batch_index}: {message}"
        super().__init__(message)
