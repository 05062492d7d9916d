"""Word-level sign language recognition pipeline over holistic landmarks."""

__version__ = "0.1.0"

from .errors import SignseqError
from .labels import NUM_CLASSES, WORD_LABELS, class_index
from .landmarks import (
    Dominance,
    FeatureSet,
    TrialSequence,
    read_landmarks,
    write_landmarks,
)

__all__ = [
    "SignseqError",
    "NUM_CLASSES",
    "WORD_LABELS",
    "class_index",
    "Dominance",
    "FeatureSet",
    "TrialSequence",
    "read_landmarks",
    "write_landmarks",
    "__version__",
]
