"""Relative quantization: parent-relative coordinates to small level codes.

Each landmark is first expressed relative to a body-part origin (its own
wrist for hand points, the pose nose for face points, the same-side
shoulder for arm points), then each axis is quantized to a small number of
levels over a fixed half-open range. Points marked IGNORED always code to
(0, 0, 0); a point whose origin is missing becomes the missing sentinel.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, IoError, SchemeError
from .landmarks import (
    FACE,
    FeatureSet,
    LEFT_ANKLE,
    LEFT_HAND,
    LEFT_HEEL,
    LEFT_SHOULDER,
    NUM_LANDMARKS,
    POSE_NOSE,
    RIGHT_ANKLE,
    RIGHT_HAND,
    RIGHT_HEEL,
    RIGHT_SHOULDER,
    TrialSequence,
    missing_mask,
)


class Reference(enum.Enum):
    """Which origin a landmark's coordinates are taken relative to."""

    WRIST_SAME_HAND = "wrist_same_hand"
    NOSE = "nose"
    SHOULDER_SAME_SIDE = "shoulder_same_side"
    HEEL_SAME_SIDE = "heel_same_side"
    GLOBAL = "global"
    IGNORED = "ignored"


_LEFT_WRIST = LEFT_HAND.start      # first point of each hand block is its wrist
_RIGHT_WRIST = RIGHT_HAND.start

# side -> parent landmark per reference kind
_SIDE_PARENTS = {
    Reference.WRIST_SAME_HAND: (_LEFT_WRIST, _RIGHT_WRIST),
    Reference.SHOULDER_SAME_SIDE: (LEFT_SHOULDER, RIGHT_SHOULDER),
    Reference.HEEL_SAME_SIDE: (LEFT_HEEL, RIGHT_HEEL),
}


@dataclass(frozen=True)
class ParentTable:
    """Per-landmark reference kind plus the resolved parent index.

    parent_index holds -1 for GLOBAL and IGNORED entries.
    """

    references: tuple[Reference, ...]
    parent_index: np.ndarray  # (543,) int

    def __post_init__(self):
        if len(self.references) != NUM_LANDMARKS:
            raise SchemeError(
                f"parent table must cover {NUM_LANDMARKS} landmarks, "
                f"got {len(self.references)}"
            )
        pi = np.asarray(self.parent_index, dtype=np.int64)
        pi.flags.writeable = False
        object.__setattr__(self, "parent_index", pi)

    def to_json(self) -> str:
        return json.dumps(
            {
                "references": [r.value for r in self.references],
                "parent_index": self.parent_index.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ParentTable":
        d = json.loads(text)
        return cls(
            references=tuple(Reference(r) for r in d["references"]),
            parent_index=np.asarray(d["parent_index"], dtype=np.int64),
        )


def default_parent_table(ignore_head_and_legs: bool = True) -> ParentTable:
    """Default origin assignment over the canonical 543 landmarks.

    Hands go to their own wrist, the face mesh to the pose nose, elbows and
    pose wrists to the same-side shoulder, pose finger points to the
    same-side hand wrist; shoulders stay global. With ignore_head_and_legs
    (the default) the pose head points and everything below the hips are
    IGNORED; otherwise ankles are taken relative to the same-side heel and
    heels stay global.
    """
    refs: list[Reference] = [Reference.IGNORED] * NUM_LANDMARKS
    parent = np.full(NUM_LANDMARKS, -1, dtype=np.int64)

    def assign(i: int, ref: Reference, par: int = -1):
        refs[i] = ref
        parent[i] = par

    # pose nose + eyes/ears/mouth stay IGNORED (nose anchors the face mesh
    # but carries no code of its own)
    assign(LEFT_SHOULDER, Reference.GLOBAL)
    assign(RIGHT_SHOULDER, Reference.GLOBAL)
    for i, side in ((13, 0), (14, 1), (15, 0), (16, 1)):  # elbows, pose wrists
        assign(i, Reference.SHOULDER_SAME_SIDE,
               _SIDE_PARENTS[Reference.SHOULDER_SAME_SIDE][side])
    for i in range(17, 23):  # pose pinky/index/thumb points
        side = (i - 17) % 2
        assign(i, Reference.WRIST_SAME_HAND,
               _SIDE_PARENTS[Reference.WRIST_SAME_HAND][side])
    if not ignore_head_and_legs:
        assign(LEFT_ANKLE, Reference.HEEL_SAME_SIDE, LEFT_HEEL)
        assign(RIGHT_ANKLE, Reference.HEEL_SAME_SIDE, RIGHT_HEEL)
        assign(LEFT_HEEL, Reference.GLOBAL)
        assign(RIGHT_HEEL, Reference.GLOBAL)
    for i in range(FACE.start, FACE.stop):
        assign(i, Reference.NOSE, POSE_NOSE)
    for i in range(LEFT_HAND.start, LEFT_HAND.stop):
        assign(i, Reference.WRIST_SAME_HAND, _LEFT_WRIST)
    for i in range(RIGHT_HAND.start, RIGHT_HAND.stop):
        assign(i, Reference.WRIST_SAME_HAND, _RIGHT_WRIST)
    return ParentTable(references=tuple(refs), parent_index=parent)


@dataclass(frozen=True)
class GroupSpec:
    """Level counts and half-open [lo, hi) ranges for one landmark group."""

    levels: tuple[int, int, int]
    ranges: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        for L, (lo, hi) in zip(self.levels, self.ranges):
            if L < 1:
                raise SchemeError(f"level count must be >= 1, got {L}")
            if L > 1 and not lo < hi:
                raise SchemeError(f"range [{lo}, {hi}) is empty with {L} levels")


GROUP_HAND = "hand"
GROUP_FACE = "face"
GROUP_POSE = "pose"
GROUP_IGNORED = "ignored"


@dataclass(frozen=True)
class QuantScheme:
    """Per-group quantization setup keyed by hand / face / pose / ignored."""

    groups: dict

    def __post_init__(self):
        missing = {GROUP_HAND, GROUP_FACE, GROUP_POSE, GROUP_IGNORED} - set(self.groups)
        if missing:
            raise SchemeError(f"scheme missing groups {sorted(missing)}")

    def spec_for(self, group: str) -> GroupSpec:
        return self.groups[group]

    def to_json(self) -> str:
        return json.dumps(
            {
                g: {"levels": list(s.levels), "ranges": [list(r) for r in s.ranges]}
                for g, s in self.groups.items()
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "QuantScheme":
        d = json.loads(text)
        return cls(
            groups={
                g: GroupSpec(
                    levels=tuple(v["levels"]),
                    ranges=tuple(tuple(r) for r in v["ranges"]),
                )
                for g, v in d.items()
            }
        )

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_json() + "\n")
        except OSError as exc:
            raise IoError(f"cannot write scheme {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "QuantScheme":
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read scheme {path}: {exc}") from exc


def default_scheme() -> QuantScheme:
    """Default level counts and ranges over parent-relative coordinates.

    Hands get the finest grid (10, 10, 5); face and remaining pose points
    get (5, 5, 3); ignored points collapse to a single level. Ranges are
    half-open and deliberately generous; fit_ranges can replace them with
    percentiles measured on training data.
    """
    return QuantScheme(
        groups={
            GROUP_HAND: GroupSpec(
                levels=(10, 10, 5),
                ranges=((-0.5, 0.5), (-0.5, 0.5), (-0.25, 0.25)),
            ),
            GROUP_FACE: GroupSpec(
                levels=(5, 5, 3),
                ranges=((-0.25, 0.25), (-0.25, 0.25), (-0.1, 0.1)),
            ),
            GROUP_POSE: GroupSpec(
                levels=(5, 5, 3),
                ranges=((-1.0, 1.0), (-1.0, 1.0), (-0.5, 0.5)),
            ),
            GROUP_IGNORED: GroupSpec(
                levels=(1, 1, 1),
                ranges=((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
            ),
        }
    )


def landmark_group(index: int, table: ParentTable) -> str:
    """Quantization group of a landmark under a parent table."""
    if table.references[index] is Reference.IGNORED:
        return GROUP_IGNORED
    if LEFT_HAND.start <= index < RIGHT_HAND.stop:
        return GROUP_HAND
    if FACE.start <= index < FACE.stop:
        return GROUP_FACE
    return GROUP_POSE


def to_local(frame: np.ndarray, table: ParentTable) -> np.ndarray:
    """Express a frame's points relative to their parent origins.

    GLOBAL points pass through, IGNORED points are zeroed, missing points
    stay missing, and a point whose parent is missing becomes the missing
    sentinel.
    """
    frame = np.asarray(frame, dtype=np.float64)
    out = frame.copy()
    refs = np.array([r is not Reference.IGNORED for r in table.references])
    ignored = ~refs
    out[ignored] = 0.0
    has_parent = table.parent_index >= 0
    pidx = table.parent_index[has_parent]
    parents = frame[pidx]
    local = frame[has_parent] - parents
    point_missing = missing_mask(frame[has_parent])
    parent_missing = missing_mask(parents)
    local[point_missing | parent_missing] = 0.0
    out[has_parent] = local
    return out


def quantize_axis(value: float, lo: float, hi: float, levels: int) -> int:
    """Uniform quantization of one scalar over [lo, hi) to 0..levels-1.

    Values outside the range clamp to the boundary levels; a single level
    always yields 0.
    """
    if levels == 1:
        return 0
    if not lo < hi:
        raise SchemeError(f"range [{lo}, {hi}) is empty")
    q = int(np.floor((value - lo) * levels / (hi - lo)))
    return min(max(q, 0), levels - 1)


def _quantize_block(values: np.ndarray, spec: GroupSpec) -> np.ndarray:
    """Vectorized per-axis quantization of an (n, 3) block."""
    out = np.zeros(values.shape, dtype=np.int64)
    for ax in range(3):
        L = spec.levels[ax]
        if L == 1:
            continue
        lo, hi = spec.ranges[ax]
        q = np.floor((values[:, ax] - lo) * L / (hi - lo)).astype(np.int64)
        out[:, ax] = np.clip(q, 0, L - 1)
    return out


def encode_frame(
    frame: np.ndarray,
    table: ParentTable,
    scheme: QuantScheme,
    feature_set: FeatureSet = FeatureSet.POSEHANDS75,
) -> np.ndarray:
    """Quantize one frame to an (n_points, 3) integer code array."""
    local = to_local(frame, table)
    sel = feature_set.indices
    codes = np.zeros((len(sel), 3), dtype=np.int64)
    groups = np.array([landmark_group(int(i), table) for i in sel])
    for g in (GROUP_HAND, GROUP_FACE, GROUP_POSE, GROUP_IGNORED):
        pick = groups == g
        if pick.any():
            codes[pick] = _quantize_block(local[sel[pick]], scheme.spec_for(g))
    return codes


def encode_sequence(
    trial: TrialSequence,
    table: ParentTable,
    scheme: QuantScheme,
    feature_set: FeatureSet = FeatureSet.POSEHANDS75,
) -> np.ndarray:
    """Quantize every frame of a trial: (n_frames, n_points, 3) codes."""
    return np.stack(
        [encode_frame(f, table, scheme, feature_set) for f in trial.frames]
    )


def code_to_token(code: np.ndarray) -> str:
    """Hyphen-joined decimal levels of one frame code; injective over codes."""
    return "-".join(str(int(v)) for v in np.asarray(code).reshape(-1))


def sequence_to_tokens(codes: np.ndarray) -> str:
    """One token line per frame, UTF-8 friendly."""
    return "\n".join(code_to_token(c) for c in codes) + "\n"


def rq_features(
    trial: TrialSequence,
    table: ParentTable,
    scheme: QuantScheme,
    feature_set: FeatureSet = FeatureSet.POSEHANDS75,
) -> np.ndarray:
    """Level indices re-expanded as a real-valued (n_frames, 3*n_points) matrix."""
    codes = encode_sequence(trial, table, scheme, feature_set)
    return codes.reshape(trial.n_frames, -1).astype(np.float64)


def fit_ranges(
    trials,
    table: ParentTable,
    scheme: QuantScheme,
    lo_pct: float = 1.0,
    hi_pct: float = 99.0,
) -> QuantScheme:
    """Data-driven variant of a scheme: per-group axis ranges from training
    percentiles of the parent-relative coordinates."""
    trials = list(trials)
    if not trials:
        raise EmptyInputError("fit_ranges needs at least one trial")
    buckets = {GROUP_HAND: [], GROUP_FACE: [], GROUP_POSE: []}
    groups = np.array([landmark_group(i, table) for i in range(NUM_LANDMARKS)])
    for t in trials:
        for frame in t.frames:
            local = to_local(frame, table)
            for g in buckets:
                buckets[g].append(local[groups == g])
    new_groups = dict(scheme.groups)
    for g, blocks in buckets.items():
        if not blocks:
            continue
        values = np.concatenate(blocks, axis=0)
        ranges = []
        for ax in range(3):
            lo = float(np.percentile(values[:, ax], lo_pct))
            hi = float(np.percentile(values[:, ax], hi_pct))
            if not lo < hi:
                hi = lo + 1e-6
            ranges.append((lo, hi))
        new_groups[g] = GroupSpec(levels=scheme.groups[g].levels, ranges=tuple(ranges))
    return QuantScheme(groups=new_groups)
