"""Landmark frame model and the LMK1 trial file format.

A frame is a (543, 3) float array of (x, y, d) rows in the canonical
holistic order: pose [0, 33), face [33, 501), left hand [501, 522),
right hand [522, 543). A point equal to (0, 0, 0) on all three
components is the missing sentinel; transforms must leave it untouched.

LMK1 layout, little-endian:
    magic   4s   b"LMK1"
    version u32  1
    frames  u32
    points  u32  543
    fps     u8   15 | 24 | 30
    dom     u8   0 = RIGHT, 1 = LEFT
    word    u16  class index 0..59
    trial   u16  >= 1
    signer  u16
then frames * 543 records of three consecutive f32 (x, y, d), frames in
temporal order, points in canonical order. Storage is f32; computation is
float64.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInputError,
    FormatError,
    InvariantError,
    IoError,
    LengthError,
    TruncationError,
)
from .labels import NUM_CLASSES, WORD_LABELS, class_index, parse_signer

NUM_LANDMARKS = 543
POSE = slice(0, 33)
FACE = slice(33, 501)
LEFT_HAND = slice(501, 522)
RIGHT_HAND = slice(522, 543)
HAND = slice(501, 543)

# Pose landmark indices used by transforms.
POSE_NOSE = 0
LEFT_SHOULDER = 11
RIGHT_SHOULDER = 12
LEFT_ELBOW = 13
RIGHT_ELBOW = 14
LEFT_POSE_WRIST = 15
RIGHT_POSE_WRIST = 16
LEFT_HIP = 23
RIGHT_HIP = 24
LEFT_KNEE = 25
RIGHT_KNEE = 26
LEFT_ANKLE = 27
RIGHT_ANKLE = 28
LEFT_HEEL = 29
RIGHT_HEEL = 30

VALID_FPS = (15, 24, 30)

_HEADER = struct.Struct("<4sIIIBBHHH")
MAGIC = b"LMK1"
VERSION = 1


class Dominance(enum.Enum):
    RIGHT = 0
    LEFT = 1


class CameraView(enum.Enum):
    FRONT = "F"
    LATERAL = "L"


class FeatureSet(enum.Enum):
    """Which landmark subset feeds the feature pipeline."""

    FULL543 = "full543"
    POSEHANDS75 = "posehands75"

    @property
    def indices(self) -> np.ndarray:
        if self is FeatureSet.FULL543:
            return np.arange(NUM_LANDMARKS)
        # pose block plus the two hand blocks, face dropped
        return np.concatenate([np.arange(33), np.arange(501, 543)])

    @property
    def point_count(self) -> int:
        return len(self.indices)

    @property
    def width(self) -> int:
        """Flat per-frame feature width (3 scalars per point)."""
        return 3 * self.point_count


@dataclass(frozen=True)
class TrialSequence:
    """One segmented sign trial with its capture metadata."""

    frames: np.ndarray  # (n, 543, 3) float64
    signer_id: str
    word_label: str
    trial_index: int
    dominance: Dominance
    fps: int
    camera_view: CameraView = CameraView.FRONT

    def __post_init__(self):
        frames = np.ascontiguousarray(np.asarray(self.frames, dtype=np.float64))
        if frames.ndim != 3 or frames.shape[1:] != (NUM_LANDMARKS, 3):
            raise InvariantError(
                f"frames must be (n, {NUM_LANDMARKS}, 3), got {frames.shape}"
            )
        if frames.shape[0] < 1:
            raise InvariantError("trial must contain at least one frame")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        class_index(self.word_label)  # raises LabelError on unknown words
        parse_signer(self.signer_id)
        if self.trial_index < 1:
            raise InvariantError(f"trial_index must be >= 1, got {self.trial_index}")
        if self.fps not in VALID_FPS:
            raise InvariantError(f"fps must be one of {VALID_FPS}, got {self.fps}")
        if not isinstance(self.dominance, Dominance):
            raise InvariantError("dominance must be a Dominance value")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def word_class(self) -> int:
        return class_index(self.word_label)

    def with_frames(self, frames: np.ndarray, **meta) -> "TrialSequence":
        """Copy of this trial with new frames and optional metadata overrides."""
        kw = dict(
            signer_id=self.signer_id,
            word_label=self.word_label,
            trial_index=self.trial_index,
            dominance=self.dominance,
            fps=self.fps,
            camera_view=self.camera_view,
        )
        kw.update(meta)
        return TrialSequence(frames=frames, **kw)


def missing_mask(frames: np.ndarray) -> np.ndarray:
    """Boolean (..., n_points) mask of points equal to the zero sentinel."""
    return np.all(frames == 0.0, axis=-1)


def select_features(frame: np.ndarray, feature_set: FeatureSet) -> np.ndarray:
    """Flatten one frame to the feature set's vector, (x, y, d) per point."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (NUM_LANDMARKS, 3):
        raise LengthError(f"frame must be ({NUM_LANDMARKS}, 3), got {frame.shape}")
    return frame[feature_set.indices].reshape(-1)


def select_trial_features(trial: TrialSequence, feature_set: FeatureSet) -> np.ndarray:
    """(n_frames, width) feature matrix for a whole trial."""
    return trial.frames[:, feature_set.indices, :].reshape(trial.n_frames, -1)


def flatten_trial(trial_features: np.ndarray, target_len: int = 164) -> np.ndarray:
    """Concatenate a (target_len, width) feature matrix frame-major.

    Refuses any other frame count: upstream temporal shaping must have
    produced exactly target_len frames.
    """
    m = np.asarray(trial_features, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != target_len:
        raise LengthError(
            f"expected ({target_len}, width) features, got {m.shape}"
        )
    return m.reshape(-1)


def missing_hand_rate(trials) -> float:
    """Fraction of hand points that are the missing sentinel, over all frames."""
    trials = list(trials)
    if not trials:
        raise EmptyInputError("missing_hand_rate needs at least one trial")
    missing = 0
    total = 0
    for t in trials:
        m = missing_mask(t.frames[:, HAND, :])
        missing += int(m.sum())
        total += m.size
    return missing / total


def _header_bytes(trial: TrialSequence) -> bytes:
    return _HEADER.pack(
        MAGIC,
        VERSION,
        trial.n_frames,
        NUM_LANDMARKS,
        trial.fps,
        trial.dominance.value,
        trial.word_class,
        trial.trial_index,
        parse_signer(trial.signer_id),
    )


def write_landmarks(trial: TrialSequence, path, sidecar: bool = False) -> None:
    """Write a trial as an LMK1 file; optionally a JSON sidecar next to it.

    The binary file is authoritative; the sidecar only mirrors the header
    for humans and external tools.
    """
    path = Path(path)
    payload = trial.frames.astype("<f4").tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(_header_bytes(trial))
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    if sidecar:
        meta = {
            "signer_id": trial.signer_id,
            "word_label": trial.word_label,
            "trial_index": trial.trial_index,
            "dominance": "LH" if trial.dominance is Dominance.LEFT else "RH",
            "fps": trial.fps,
            "camera_view": trial.camera_view.value,
            "frame_count": trial.n_frames,
        }
        try:
            path.with_suffix(path.suffix + ".json").write_text(
                json.dumps(meta, indent=2, sort_keys=True) + "\n"
            )
        except OSError as exc:
            raise IoError(f"cannot write sidecar for {path}: {exc}") from exc


def read_landmarks(path) -> TrialSequence:
    """Read and validate an LMK1 file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise TruncationError(f"{path}: file shorter than the fixed header")
    magic, version, n_frames, n_points, fps, dom, word, trial_idx, signer = (
        _HEADER.unpack_from(blob)
    )
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n_points != NUM_LANDMARKS:
        raise FormatError(f"{path}: landmark count {n_points} != {NUM_LANDMARKS}")
    if n_frames < 1:
        raise FormatError(f"{path}: header declares zero frames")
    if fps not in VALID_FPS:
        raise FormatError(f"{path}: fps {fps} not in {VALID_FPS}")
    if dom not in (0, 1):
        raise FormatError(f"{path}: dominance byte {dom} not in {{0, 1}}")
    if word >= NUM_CLASSES:
        raise FormatError(f"{path}: word class index {word} out of range")
    if trial_idx < 1:
        raise FormatError(f"{path}: trial index must be >= 1")
    expected = _HEADER.size + n_frames * NUM_LANDMARKS * 3 * 4
    if len(blob) < expected:
        raise TruncationError(
            f"{path}: declares {n_frames} frames but payload is short "
            f"({len(blob)} of {expected} bytes)"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes")
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    frames = flat.reshape(n_frames, NUM_LANDMARKS, 3).astype(np.float64)
    return TrialSequence(
        frames=frames,
        signer_id=f"U{signer}",
        word_label=WORD_LABELS[word],
        trial_index=trial_idx,
        dominance=Dominance(dom),
        fps=fps,
    )
