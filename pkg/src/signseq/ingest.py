"""Annotation parsing, trial segmentation, dataset stats, signer split.

Annotation line format, whitespace separated:

    signer_id word_label trial_index camera_view dominance fps
    frame_intention frame_actual_start frame_gesture_end frame_withdrawal

e.g. ``U11 W1 1 F RH 30 12 15 40 46``. A JSON document holding an array of
objects with those same field names is accepted interchangeably. Frame
numbers must satisfy intention <= actual_start < gesture_end <= withdrawal;
a trial's frames are the inclusive [actual_start, gesture_end] range of its
source video stream.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import (
    AnnotationOrderError,
    EmptyInputError,
    FormatError,
    LabelError,
    RangeError,
)
from .labels import class_index, parse_signer
from .landmarks import CameraView, Dominance, TrialSequence, VALID_FPS

_FIELDS = (
    "signer_id",
    "word_label",
    "trial_index",
    "camera_view",
    "dominance",
    "fps",
    "frame_intention",
    "frame_actual_start",
    "frame_gesture_end",
    "frame_withdrawal",
)

_DOMINANCE = {"RH": Dominance.RIGHT, "LH": Dominance.LEFT}


@dataclass(frozen=True)
class TrialAnnotation:
    signer_id: str
    word_label: str
    trial_index: int
    camera_view: CameraView
    dominance: Dominance
    fps: int
    frame_intention: int
    frame_actual_start: int
    frame_gesture_end: int
    frame_withdrawal: int

    def __post_init__(self):
        class_index(self.word_label)
        parse_signer(self.signer_id)
        if self.fps not in VALID_FPS:
            raise LabelError(f"fps {self.fps} not in {VALID_FPS}")
        ok = (
            self.frame_intention <= self.frame_actual_start
            and self.frame_actual_start < self.frame_gesture_end
            and self.frame_gesture_end <= self.frame_withdrawal
        )
        if not ok:
            raise AnnotationOrderError(
                f"frame numbers out of order for {self.signer_id} "
                f"{self.word_label} trial {self.trial_index}: "
                f"{self.frame_intention} {self.frame_actual_start} "
                f"{self.frame_gesture_end} {self.frame_withdrawal}"
            )

    @property
    def video_key(self) -> tuple[str, str, str]:
        """(signer, word, camera): one source video per key."""
        return (self.signer_id, self.word_label, self.camera_view.value)


def _annotation_from_parts(parts: dict) -> TrialAnnotation:
    camera = parts["camera_view"]
    if camera not in ("F", "L"):
        raise LabelError(f"camera view must be F or L, got {camera!r}")
    dom = parts["dominance"]
    if dom not in _DOMINANCE:
        raise LabelError(f"dominance must be RH or LH, got {dom!r}")
    return TrialAnnotation(
        signer_id=parts["signer_id"],
        word_label=parts["word_label"],
        trial_index=int(parts["trial_index"]),
        camera_view=CameraView(camera),
        dominance=_DOMINANCE[dom],
        fps=int(parts["fps"]),
        frame_intention=int(parts["frame_intention"]),
        frame_actual_start=int(parts["frame_actual_start"]),
        frame_gesture_end=int(parts["frame_gesture_end"]),
        frame_withdrawal=int(parts["frame_withdrawal"]),
    )


def parse_annotation(text: str) -> list[TrialAnnotation]:
    """Parse annotation text (line format or a JSON array of objects)."""
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad annotation JSON: {exc}") from exc
        out = []
        for i, row in enumerate(rows):
            missing = [f for f in _FIELDS if f not in row]
            if missing:
                raise FormatError(f"annotation object {i} missing {missing}")
            out.append(_annotation_from_parts(row))
        return out

    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != len(_FIELDS):
            raise FormatError(
                f"line {lineno}: expected {len(_FIELDS)} fields, got {len(fields)}"
            )
        try:
            out.append(_annotation_from_parts(dict(zip(_FIELDS, fields))))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        except AnnotationOrderError as exc:
            raise AnnotationOrderError(f"line {lineno}: {exc}") from None
    return out


def segment_trials(
    stream_frames: np.ndarray, annotations: list[TrialAnnotation]
) -> list[TrialSequence]:
    """Cut per-trial sequences out of one video's frame stream.

    Frame indices are 0-based into the stream; the cut keeps
    [frame_actual_start, frame_gesture_end] inclusive. Annotation metadata
    is copied onto each trial.
    """
    stream_frames = np.asarray(stream_frames, dtype=np.float64)
    n = stream_frames.shape[0]
    trials = []
    for ann in annotations:
        start, end = ann.frame_actual_start, ann.frame_gesture_end
        if start < 0 or end >= n:
            raise RangeError(
                f"{ann.signer_id} {ann.word_label} trial {ann.trial_index}: "
                f"frames [{start}, {end}] exceed stream of {n} frames"
            )
        trials.append(
            TrialSequence(
                frames=stream_frames[start : end + 1].copy(),
                signer_id=ann.signer_id,
                word_label=ann.word_label,
                trial_index=ann.trial_index,
                dominance=ann.dominance,
                fps=ann.fps,
                camera_view=ann.camera_view,
            )
        )
    return trials


@dataclass(frozen=True)
class DatasetStats:
    trial_count: int
    max_frames: int
    min_frames: int
    avg_frames: float
    right_hand_instances: int
    left_hand_instances: int

    def to_dict(self) -> dict:
        return {
            "trial_count": self.trial_count,
            "max_frames": self.max_frames,
            "min_frames": self.min_frames,
            "avg_frames": self.avg_frames,
            "right_hand_instances": self.right_hand_instances,
            "left_hand_instances": self.left_hand_instances,
        }


def compute_stats(trials) -> DatasetStats:
    trials = list(trials)
    if not trials:
        raise EmptyInputError("compute_stats needs at least one trial")
    lengths = [t.n_frames for t in trials]
    return DatasetStats(
        trial_count=len(trials),
        max_frames=max(lengths),
        min_frames=min(lengths),
        avg_frames=statistics.fmean(lengths),
        right_hand_instances=sum(t.dominance is Dominance.RIGHT for t in trials),
        left_hand_instances=sum(t.dominance is Dominance.LEFT for t in trials),
    )


@dataclass(frozen=True)
class SplitSpec:
    """Signer-disjoint train/test split; the named signers go to test."""

    test_signers: frozenset = frozenset({"U4", "U8"})


def split_by_signer(trials, spec: SplitSpec = SplitSpec()):
    """Partition trials into (train, test) by signer id. Order preserved."""
    train, test = [], []
    for t in trials:
        (test if t.signer_id in spec.test_signers else train).append(t)
    return train, test
