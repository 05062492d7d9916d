"""Scalar dynamic time warping, template banks, and DTW feature vectors.

The alignment is the classic unconstrained dynamic program with local cost
|a_i - b_j| and steps (1,0), (0,1), (1,1); cost is the minimum accumulated
path cost with both endpoints matched. Features for a trial are its
per-channel distances to one template per word class, template-major.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ClassCoverageError,
    EmptyInputError,
    FormatError,
    IoError,
    LengthError,
    TruncationError,
)
from .labels import NUM_CLASSES, WORD_LABELS
from .landmarks import FeatureSet, TrialSequence, select_trial_features

_DTWF_HEADER = struct.Struct("<4sII")
_DTWF_MAGIC = b"DTWF"


def _band_mask(n: int, m: int, band: float | None) -> np.ndarray | None:
    # band is a fraction of the normalized diagonal: cell (i, j) is allowed
    # iff |i/(n-1) - j/(m-1)| <= band, so band >= 1.0 admits every cell
    if band is None:
        return None
    i = np.arange(n)[:, None] / max(n - 1, 1)
    j = np.arange(m)[None, :] / max(m - 1, 1)
    return np.abs(i - j) <= band


def dtw_distance_multi(
    a: np.ndarray, b: np.ndarray, band: float | None = None
) -> np.ndarray:
    """Per-channel DTW between (n, C) and (m, C) channel matrices.

    Channels are aligned independently; the dynamic program runs over all
    channels at once, two rows at a time.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyInputError("DTW needs non-empty sequences")
    if a.shape[1] != b.shape[1]:
        raise LengthError(f"channel counts differ: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    mask = _band_mask(n, m, band)
    prev = np.empty((m, a.shape[1]))
    cur = np.empty_like(prev)
    for i in range(n):
        cost = np.abs(b - a[i])  # (m, C)
        if mask is not None:
            cost[~mask[i]] = np.inf
        if i == 0:
            np.cumsum(cost, axis=0, out=cur)
        else:
            cur[0] = cost[0] + prev[0]
            for j in range(1, m):
                best = np.minimum(np.minimum(cur[j - 1], prev[j]), prev[j - 1])
                cur[j] = cost[j] + best
        prev, cur = cur, prev
    return prev[m - 1].copy()


def dtw_distance(a, b, band: float | None = None) -> float:
    """DTW distance between two scalar sequences."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 1)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 1)
    return float(dtw_distance_multi(a, b, band=band)[0])


class TemplateSource(Enum):
    TEST = "test"
    TRAIN = "train"


@dataclass(frozen=True)
class TemplateBank:
    """One reference trial per word class, ordered by class index."""

    templates: tuple[TrialSequence, ...]
    selection_seed: int
    source: TemplateSource

    def __post_init__(self):
        if len(self.templates) != NUM_CLASSES:
            raise ClassCoverageError(
                f"bank must hold {NUM_CLASSES} templates, got {len(self.templates)}"
            )
        for i, t in enumerate(self.templates):
            if t.word_class != i:
                raise ClassCoverageError(
                    f"template at position {i} is {t.word_label}, "
                    f"expected {WORD_LABELS[i]}"
                )


def select_templates(
    pool, seed: int, source: TemplateSource = TemplateSource.TEST
) -> TemplateBank:
    """Pick one trial per class uniformly at random (seeded) from a pool.

    The conventional source is the held-out test split; selecting there
    leaks template identity into the features, so a warning is emitted.
    Pass trials from the training split to avoid it.
    """
    pool = list(pool)
    by_class: dict[int, list[TrialSequence]] = {}
    for t in pool:
        by_class.setdefault(t.word_class, []).append(t)
    missing = [WORD_LABELS[i] for i in range(NUM_CLASSES) if i not in by_class]
    if missing:
        raise ClassCoverageError(f"template pool missing classes: {missing}")
    if source is TemplateSource.TEST:
        warnings.warn(
            "templates drawn from the evaluation split: DTW features of test "
            "trials will include their own templates",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    chosen = []
    for ci in range(NUM_CLASSES):
        candidates = by_class[ci]
        chosen.append(candidates[int(rng.integers(len(candidates)))])
    return TemplateBank(
        templates=tuple(chosen), selection_seed=seed, source=source
    )


def dtw_features(
    trial: TrialSequence,
    bank: TemplateBank,
    feature_set: FeatureSet,
    band: float | None = None,
) -> np.ndarray:
    """Distances of a trial to every template, template-major then channel.

    Width is feature width x 60. The trial should be the unpadded,
    non-prolonged preprocessed sequence.
    """
    q = select_trial_features(trial, feature_set)
    parts = []
    for tmpl in bank.templates:
        r = select_trial_features(tmpl, feature_set)
        parts.append(dtw_distance_multi(q, r, band=band))
    return np.concatenate(parts)


def write_dtw_matrix(matrix: np.ndarray, path, manifest: dict | None = None) -> None:
    """Store a (rows, cols) feature matrix as DTWF: magic, u32 rows, u32
    cols, f32 row-major little-endian. A JSON manifest lands next to it."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise LengthError(f"DTWF stores 2-D matrices, got shape {m.shape}")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_DTWF_HEADER.pack(_DTWF_MAGIC, m.shape[0], m.shape[1]))
            fh.write(m.astype("<f4").tobytes(order="C"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    if manifest is not None:
        try:
            path.with_suffix(path.suffix + ".json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n"
            )
        except OSError as exc:
            raise IoError(f"cannot write manifest for {path}: {exc}") from exc


def read_dtw_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _DTWF_HEADER.size:
        raise TruncationError(f"{path}: shorter than the fixed header")
    magic, rows, cols = _DTWF_HEADER.unpack_from(blob)
    if magic != _DTWF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _DTWF_HEADER.size + rows * cols * 4
    if len(blob) < expected:
        raise TruncationError(f"{path}: payload short of {rows}x{cols} floats")
    if len(blob) > expected:
        raise FormatError(f"{path}: trailing bytes")
    flat = np.frombuffer(blob, dtype="<f4", offset=_DTWF_HEADER.size)
    return flat.reshape(rows, cols).astype(np.float64)
