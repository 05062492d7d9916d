"""Geometric and temporal preprocessing.

Stage order is fixed: segment -> frame-rate correction -> calibration ->
optional dominance flip -> temporal shaping (zero padding or uniform
prolongation to 164 frames) -> standardization. Missing points (the exact
zero sentinel) pass through every stage unchanged so downstream missing
detection keeps working.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CalibrationError,
    EmptyInputError,
    FpsError,
    InvariantError,
    IoError,
    LengthError,
)
from .landmarks import (
    Dominance,
    FeatureSet,
    LEFT_HAND,
    LEFT_SHOULDER,
    NUM_LANDMARKS,
    RIGHT_HAND,
    RIGHT_SHOULDER,
    TrialSequence,
    missing_mask,
    select_trial_features,
)

TARGET_LEN = 164
REFERENCE_FPS = 30

# Left/right pose pairs swapped by the optional whole-body mirror.
_POSE_MIRROR_PAIRS = (
    (1, 4), (2, 5), (3, 6), (7, 8), (9, 10), (11, 12), (13, 14),
    (15, 16), (17, 18), (19, 20), (21, 22), (23, 24), (25, 26),
    (27, 28), (29, 30), (31, 32),
)


class Temporal(enum.Enum):
    PADDED = "padded"
    PROLONGED = "prolonged"
    NONE = "none"


class DominanceMode(enum.Enum):
    ORIGINAL = "original"
    FLIPPED = "flipped"


@dataclass(frozen=True)
class VariantConfig:
    """Which dataset variant the temporal/flip stages should produce."""

    temporal: Temporal = Temporal.PADDED
    dominance: DominanceMode = DominanceMode.ORIGINAL
    target_len: int = TARGET_LEN


def calibration_origin(trials) -> np.ndarray:
    """Shoulder midpoint of the video's reference frame.

    The reference is the first frame (scanning trials in order, frames in
    order) where both shoulder points are present.
    """
    trials = list(trials)
    if not trials:
        raise EmptyInputError("calibration needs at least one trial")
    for t in trials:
        present = ~missing_mask(t.frames[:, (LEFT_SHOULDER, RIGHT_SHOULDER), :])
        both = present.all(axis=1)
        hit = np.flatnonzero(both)
        if hit.size:
            f = t.frames[hit[0]]
            return (f[LEFT_SHOULDER] + f[RIGHT_SHOULDER]) / 2.0
    raise CalibrationError("no frame with both shoulder points present")


def calibrate_video(trials, axes: tuple[str, ...] = ("x", "y", "d")):
    """Translate every trial of one video so the reference shoulder midpoint
    sits at the origin. Missing points are left at exact zero."""
    trials = list(trials)
    origin = calibration_origin(trials)
    shift = np.zeros(3)
    for ax in axes:
        shift["xyd".index(ax)] = origin["xyd".index(ax)]
    out = []
    for t in trials:
        frames = t.frames - shift
        frames[missing_mask(t.frames)] = 0.0
        out.append(t.with_frames(frames))
    return out


def correct_frame_rate(trial: TrialSequence, fps: int | None = None) -> TrialSequence:
    """Bring a trial to the 30fps reference by in-place frame duplication.

    30fps is identity; 15fps doubles every frame (n -> 2n); 24fps duplicates
    the frames at 0-based source indices 3, 7, 11, ... (n -> n + n // 4).
    """
    fps = trial.fps if fps is None else fps
    if fps == 30:
        idx = np.arange(trial.n_frames)
    elif fps == 15:
        idx = np.repeat(np.arange(trial.n_frames), 2)
    elif fps == 24:
        reps = np.ones(trial.n_frames, dtype=int)
        reps[3::4] = 2
        idx = np.repeat(np.arange(trial.n_frames), reps)
    else:
        raise FpsError(f"unsupported frame rate {fps}")
    return trial.with_frames(trial.frames[idx].copy(), fps=REFERENCE_FPS)


def flip_dominance(trial: TrialSequence, mirror_pose: bool = False) -> TrialSequence:
    """Mirror handedness: negate x of the 42 hand points, swap the left and
    right hand blocks, toggle the dominance tag.

    Face and pose are untouched by default; mirror_pose=True additionally
    negates pose x and swaps left/right pose pairs.
    """
    frames = trial.frames.copy()
    left = frames[:, LEFT_HAND, :].copy()
    right = frames[:, RIGHT_HAND, :].copy()
    left[:, :, 0] *= -1.0
    right[:, :, 0] *= -1.0
    frames[:, LEFT_HAND, :] = right
    frames[:, RIGHT_HAND, :] = left
    if mirror_pose:
        frames[:, 0:33, 0] *= -1.0
        for a, b in _POSE_MIRROR_PAIRS:
            tmp = frames[:, a, :].copy()
            frames[:, a, :] = frames[:, b, :]
            frames[:, b, :] = tmp
    # keep the missing sentinel exactly zero (x negation can produce -0.0)
    frames[missing_mask(frames)] = 0.0
    dom = Dominance.LEFT if trial.dominance is Dominance.RIGHT else Dominance.RIGHT
    return trial.with_frames(frames, dominance=dom)


def prolong_indices(n: int, target_len: int) -> np.ndarray:
    """Source index for each output frame: j -> floor(j * n / target_len)."""
    return (np.arange(target_len) * n) // target_len


def apply_variant_temporal(trial: TrialSequence, config: VariantConfig) -> TrialSequence:
    """Shape a trial to exactly config.target_len frames.

    PADDED appends all-zero frames; PROLONGED repeats source frames
    uniformly, preserving order. Trials longer than target_len are refused.
    """
    n, target = trial.n_frames, config.target_len
    if config.temporal is Temporal.NONE:
        return trial
    if n > target:
        raise LengthError(f"trial has {n} frames, more than target {target}")
    if config.temporal is Temporal.PADDED:
        pad = np.zeros((target - n, NUM_LANDMARKS, 3))
        return trial.with_frames(np.concatenate([trial.frames, pad], axis=0))
    return trial.with_frames(trial.frames[prolong_indices(n, target)].copy())


def apply_variant_dominance(trial: TrialSequence, config: VariantConfig) -> TrialSequence:
    """FLIPPED maps every left-dominant trial onto right-handed geometry."""
    if config.dominance is DominanceMode.FLIPPED and trial.dominance is Dominance.LEFT:
        return flip_dominance(trial)
    return trial


@dataclass
class Normalizer:
    """Per-feature standardization fitted on training data only.

    apply subtracts the mean, divides by the floored deviation and scales by
    post_scale. Deviations are floored at 1e-8 so constant features come out
    centered at zero rather than exploding.
    """

    mean: np.ndarray
    std: np.ndarray
    post_scale: float
    feature_set: FeatureSet
    fit_signers: tuple[str, ...] = ()

    STD_FLOOR = 1e-8

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
                "post_scale": self.post_scale,
                "feature_set": self.feature_set.value,
                "fit_signers": sorted(self.fit_signers),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Normalizer":
        d = json.loads(text)
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            post_scale=float(d["post_scale"]),
            feature_set=FeatureSet(d["feature_set"]),
            fit_signers=tuple(d.get("fit_signers", ())),
        )

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_json() + "\n")
        except OSError as exc:
            raise IoError(f"cannot write normalizer {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Normalizer":
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read normalizer {path}: {exc}") from exc


def fit_normalizer(
    train_trials, feature_set: FeatureSet, post_scale: float = 1.0
) -> Normalizer:
    """Fit per-feature mean/deviation over all frames of the training trials."""
    train_trials = list(train_trials)
    if not train_trials:
        raise EmptyInputError("fit_normalizer needs at least one trial")
    stacked = np.concatenate(
        [select_trial_features(t, feature_set) for t in train_trials], axis=0
    )
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), Normalizer.STD_FLOOR)
    return Normalizer(
        mean=mean,
        std=std,
        post_scale=float(post_scale),
        feature_set=feature_set,
        fit_signers=tuple(sorted({t.signer_id for t in train_trials})),
    )


def apply_normalizer(norm: Normalizer, trial: TrialSequence) -> TrialSequence:
    """Standardize the feature set's landmarks of a trial.

    Landmarks outside the feature set are left as-is; missing points stay
    exactly zero.
    """
    idx = norm.feature_set.indices
    if norm.mean.shape[0] != 3 * len(idx):
        raise InvariantError(
            f"normalizer width {norm.mean.shape[0]} does not match "
            f"feature set {norm.feature_set.value}"
        )
    frames = trial.frames.copy()
    block = frames[:, idx, :].reshape(trial.n_frames, -1)
    block = (block - norm.mean) / norm.std * norm.post_scale
    block = block.reshape(trial.n_frames, len(idx), 3)
    block[missing_mask(trial.frames[:, idx, :])] = 0.0
    frames[:, idx, :] = block
    return trial.with_frames(frames)
