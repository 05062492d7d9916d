"""Exception types shared across the pipeline."""


class SignseqError(Exception):
    """Base class for all pipeline errors."""


class FormatError(SignseqError):
    """Binary or text input does not match the declared layout."""


class TruncationError(FormatError):
    """Input ends before the declared payload is complete."""


class IoError(SignseqError):
    """Underlying file system operation failed."""


class InvariantError(SignseqError):
    """A value violates a structural requirement of its type."""


class EmptyInputError(SignseqError):
    """An operation that needs at least one element received none."""


class AnnotationOrderError(SignseqError):
    """Annotation frame numbers are not in the required order."""


class LabelError(SignseqError):
    """Unknown word label or signer identifier."""


class RangeError(SignseqError):
    """Requested frame range exceeds the available stream."""


class CalibrationError(SignseqError):
    """No frame with both shoulder points present was found."""


class FpsError(SignseqError):
    """Frame rate is not one of the supported capture rates."""


class LengthError(SignseqError):
    """Sequence or vector length does not match what the operation needs."""


class SchemeError(SignseqError):
    """Quantization scheme is malformed (bad level count or axis range)."""


class ClassCoverageError(SignseqError):
    """A template pool is missing at least one word class."""


class DegenerateLabelsError(SignseqError):
    """Training labels contain fewer than two distinct classes."""


class DivergenceError(SignseqError):
    """Training loss became NaN."""

    def __init__(self, epoch: int):
        super().__init__(f"loss diverged to NaN at epoch {epoch}")
        self.epoch = epoch


class ConfigError(SignseqError):
    """A configuration key is missing or holds an invalid value."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key
