"""
Custom exceptions and error handling.

Every error raised on purpose by the pipeline derives from HsanError and
carries the process exit code the CLI reports for it.
"""


class HsanError(Exception):
    """Base error for the review classification pipeline."""

    exit_code: int = 1

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ShapeError(HsanError):
    """Raised when a primitive receives operands with incompatible shapes."""

    exit_code = 3

    def __init__(self, primitive: str, *shapes: tuple[int, ...], detail: str | None = None):
        self.primitive = primitive
        self.shapes = shapes
        rendered = " and ".join(str(tuple(shape)) for shape in shapes)
        message = f"{primitive}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class TapeError(HsanError):
    """Raised for invalid use of a recording tape."""

    exit_code = 3


class CorpusFormatError(HsanError):
    """Raised when a corpus file cannot be parsed."""

    exit_code = 4

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmbeddingFormatError(CorpusFormatError):
    """Raised when a word2vec text file is malformed or has the wrong dimension."""


class InfeasibleSpecError(HsanError):
    """Raised when a synthetic corpus cannot satisfy its requested witness rate."""

    exit_code = 2


class ConfigError(HsanError):
    """Raised for invalid run configuration."""

    exit_code = 2


class ModelKindError(ConfigError):
    """Raised for an unknown model name."""

    def __init__(self, name: str, valid: list[str]):
        self.name = name
        self.valid = valid
        super().__init__(f"Unknown model {name!r}; valid models: {', '.join(valid)}")


class NotFittedError(HsanError):
    """Raised when a transform is applied before fitting."""

    exit_code = 3


class DegenerateDataError(HsanError):
    """Raised when training data cannot define the requested model."""

    exit_code = 4


class MetricUndefinedError(HsanError):
    """Raised when a metric has no defined value on the given labels."""

    exit_code = 4


class TrainingDivergedError(HsanError):
    """Raised when the training loss stops being finite."""

    exit_code = 5


class CheckpointError(HsanError):
    """Raised when a checkpoint cannot be read or does not match its model."""

    exit_code = 4


class NumericalError(HsanError):
    """Raised when a primitive produces NaN or infinite values."""

    exit_code = 5
