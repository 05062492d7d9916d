"""MediaPipe Holistic landmark extraction into LMK1 streams."""

from .errors import (
    AnnotationError,
    EmptyVideoError,
    FilenameError,
    MediaError,
    MpExtractError,
)
from .extract import ExtractionJob, assemble_frame, extract, parse_video_name, resolve_metadata

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "EmptyVideoError",
    "ExtractionJob",
    "FilenameError",
    "MediaError",
    "MpExtractError",
    "assemble_frame",
    "extract",
    "parse_video_name",
    "resolve_metadata",
    "__version__",
]
