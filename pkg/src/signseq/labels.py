"""The 60 word classes and their canonical index order.

Class index is position in WORD_LABELS; the numeric suffix order of the
published vocabulary is preserved (W1..W12, W19, W20, W37..W50, W91..W100,
W111, W112, W211..W220, W351..W360).
"""

from .errors import LabelError

WORD_LABELS: tuple[str, ...] = (
    "W1", "W2", "W3", "W4", "W5", "W6", "W7", "W8", "W9", "W10",
    "W11", "W12", "W19", "W20", "W37", "W38", "W39", "W40", "W41", "W42",
    "W43", "W44", "W45", "W46", "W47", "W48", "W49", "W50", "W91", "W92",
    "W93", "W94", "W95", "W96", "W97", "W98", "W99", "W100", "W111", "W112",
    "W211", "W212", "W213", "W214", "W215", "W216", "W217", "W218", "W219", "W220",
    "W351", "W352", "W353", "W354", "W355", "W356", "W357", "W358", "W359", "W360",
)

NUM_CLASSES = len(WORD_LABELS)

_WORD_TO_INDEX = {w: i for i, w in enumerate(WORD_LABELS)}


def class_index(word_label: str) -> int:
    """Map a word label to its class index, or raise LabelError."""
    try:
        return _WORD_TO_INDEX[word_label]
    except KeyError:
        raise LabelError(f"unknown word label {word_label!r}") from None


def label_of(index: int) -> str:
    if not 0 <= index < NUM_CLASSES:
        raise LabelError(f"class index {index} out of range 0..{NUM_CLASSES - 1}")
    return WORD_LABELS[index]


def parse_signer(signer_id: str) -> int:
    """'U11' -> 11."""
    if not signer_id.startswith("U") or not signer_id[1:].isdigit():
        raise LabelError(f"bad signer id {signer_id!r}")
    return int(signer_id[1:])
