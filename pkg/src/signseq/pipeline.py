"""Batch drivers wiring the stages together over a dataset directory.

Disk layout convention:

    <dataset_root>/videos/U{n}W{w}{cam}.lmk1   per-video landmark streams
    <dataset_root>/annotations/*.txt|*.json    trial annotations
    <out>/trials/U{n}W{w}T{t}.lmk1             segmented trials (ingest)

Training and evaluation always recompute features in memory from the
segmented trials, so reruns with the same manifest are byte-identical.
"""

from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dtw as dtw_mod
from . import rq as rq_mod
from .errors import ConfigError, EmptyInputError, IoError
from .ingest import SplitSpec, parse_annotation, segment_trials, split_by_signer
from .labels import NUM_CLASSES
from .landmarks import (
    FeatureSet,
    TrialSequence,
    read_landmarks,
    select_trial_features,
    write_landmarks,
)
from .preprocess import (
    DominanceMode,
    Normalizer,
    Temporal,
    VariantConfig,
    apply_normalizer,
    apply_variant_dominance,
    apply_variant_temporal,
    calibrate_video,
    correct_frame_rate,
    fit_normalizer,
    prolong_indices,
)
from .rnn import RnnConfig
from .svm import SvmModel, train_svm


def load_trials(trials_dir) -> list[TrialSequence]:
    """All LMK1 trials under a directory, in sorted filename order."""
    trials_dir = Path(trials_dir)
    paths = sorted(trials_dir.glob("*.lmk1"))
    if not paths:
        raise EmptyInputError(f"no .lmk1 files under {trials_dir}")
    return [read_landmarks(p) for p in paths]


def trial_filename(t: TrialSequence) -> str:
    return f"{t.signer_id}{t.word_label}T{t.trial_index}.lmk1"


def ingest_dataset(videos_dir, annotation_paths, out_dir) -> list[TrialSequence]:
    """Segment every annotated video stream into per-trial LMK1 files."""
    videos_dir = Path(videos_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    annotations = []
    for p in annotation_paths:
        annotations.extend(parse_annotation(Path(p).read_text()))
    by_video: dict[tuple, list] = {}
    for ann in annotations:
        by_video.setdefault(ann.video_key, []).append(ann)
    trials = []
    for (signer, word, cam), anns in sorted(by_video.items()):
        stream_path = videos_dir / f"{signer}{word}{cam}.lmk1"
        if not stream_path.exists():
            raise IoError(f"missing video stream {stream_path}")
        stream = read_landmarks(stream_path)
        cut = segment_trials(stream.frames, sorted(anns, key=lambda a: a.trial_index))
        for t in cut:
            write_landmarks(t, out_dir / trial_filename(t))
        trials.extend(cut)
    return trials


def group_by_video(trials) -> dict:
    """Trials keyed by source video (signer, word), trial order preserved."""
    groups: dict[tuple, list] = {}
    for t in sorted(trials, key=lambda t: (t.signer_id, t.word_label, t.trial_index)):
        groups.setdefault((t.signer_id, t.word_label), []).append(t)
    return groups


def preprocess_geometry(
    trials,
    variant: VariantConfig,
    calibration_axes: tuple[str, ...] = ("x", "y", "d"),
) -> list[TrialSequence]:
    """Frame-rate correction, per-video calibration, dominance flip.

    Temporal shaping and normalization are separate so the quantization and
    DTW paths can consume the unshaped sequences.
    """
    out = []
    for _, group in group_by_video(trials).items():
        corrected = [correct_frame_rate(t) for t in group]
        calibrated = calibrate_video(corrected, axes=calibration_axes)
        out.extend(apply_variant_dominance(t, variant) for t in calibrated)
    return out


def pad_matrix(m: np.ndarray, target_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad a (n, F) matrix to (target_len, F); returns (matrix, mask)."""
    n = m.shape[0]
    if n > target_len:
        raise EmptyInputError(f"matrix of {n} rows exceeds target {target_len}")
    mask = np.zeros(target_len)
    mask[:n] = 1.0
    if n == target_len:
        return m, mask
    return np.vstack([m, np.zeros((target_len - n, m.shape[1]))]), mask


def prolong_matrix(m: np.ndarray, target_len: int) -> np.ndarray:
    return m[prolong_indices(m.shape[0], target_len)]


@dataclass
class FeaturePlan:
    """How raw trials become model-ready feature matrices."""

    feature_set: FeatureSet = FeatureSet.POSEHANDS75
    variant: VariantConfig = VariantConfig()
    post_scale: float = 1.0
    use_rq: bool = False
    rq_table: rq_mod.ParentTable | None = None
    rq_scheme: rq_mod.QuantScheme | None = None

    def __post_init__(self):
        if self.use_rq and self.rq_table is None:
            self.rq_table = rq_mod.default_parent_table()
        if self.use_rq and self.rq_scheme is None:
            self.rq_scheme = rq_mod.default_scheme()


def trial_matrix(plan: FeaturePlan, trial: TrialSequence) -> np.ndarray:
    """Unshaped (n_frames, width) features for one preprocessed trial."""
    if plan.use_rq:
        return rq_mod.rq_features(
            trial, plan.rq_table, plan.rq_scheme, plan.feature_set
        )
    return select_trial_features(trial, plan.feature_set)


@dataclass
class MatrixDataset:
    """Stacked per-trial matrices plus labels, masks and provenance."""

    x: np.ndarray  # (N, target_len, width)
    y: np.ndarray  # (N,)
    mask: np.ndarray  # (N, target_len)
    signers: list[str]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    post_scale: float

    def flat(self) -> np.ndarray:
        """(N, target_len * width) frame-major flattening for the SVM."""
        return self.x.reshape(self.x.shape[0], -1)


def build_matrix_dataset(
    plan: FeaturePlan,
    train_trials,
    test_trials=(),
) -> tuple[MatrixDataset, MatrixDataset | None]:
    """Temporal shaping + standardization over per-trial feature matrices.

    Standardization statistics come from the training trials only and are
    applied to both splits; padding happens after scaling so the padded
    tail stays exactly zero.
    """
    train_trials = list(train_trials)
    test_trials = list(test_trials)
    if not train_trials:
        raise EmptyInputError("need at least one training trial")
    if plan.variant.temporal is Temporal.NONE:
        raise ConfigError(
            "variant.temporal", "model features need 'padded' or 'prolonged'"
        )
    train_mats = [trial_matrix(plan, t) for t in train_trials]
    test_mats = [trial_matrix(plan, t) for t in test_trials]
    stacked = np.concatenate(train_mats, axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), Normalizer.STD_FLOOR)

    def shape_split(trials, mats):
        xs, masks = [], []
        for m in mats:
            m = (m - mean) / std * plan.post_scale
            if plan.variant.temporal is Temporal.PROLONGED:
                m = prolong_matrix(m, plan.variant.target_len)
                mask = np.ones(plan.variant.target_len)
            else:
                m, mask = pad_matrix(m, plan.variant.target_len)
            xs.append(m)
            masks.append(mask)
        return MatrixDataset(
            x=np.stack(xs),
            y=np.array([t.word_class for t in trials], dtype=np.int64),
            mask=np.stack(masks),
            signers=[t.signer_id for t in trials],
            norm_mean=mean,
            norm_std=std,
            post_scale=plan.post_scale,
        )

    train_ds = shape_split(train_trials, train_mats)
    test_ds = shape_split(test_trials, test_mats) if test_trials else None
    return train_ds, test_ds


def _dtw_worker(args):
    q, templates, band = args
    parts = [dtw_mod.dtw_distance_multi(q, r, band=band) for r in templates]
    return np.concatenate(parts)


def dtw_feature_matrix(
    trials,
    bank: dtw_mod.TemplateBank,
    feature_set: FeatureSet,
    band: float | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """(N, 60 * width) DTW features; rows follow the input trial order.

    With jobs > 1 the per-trial rows are computed in a process pool and
    merged back in input order, so the result is independent of scheduling.
    """
    templates = [select_trial_features(t, feature_set) for t in bank.templates]
    queries = [select_trial_features(t, feature_set) for t in trials]
    if jobs <= 1:
        rows = [_dtw_worker((q, templates, band)) for q in queries]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_dtw_worker, [(q, templates, band) for q in queries]))
    return np.stack(rows)


def make_split(trials, test_signers) -> tuple[list, list]:
    return split_by_signer(trials, SplitSpec(test_signers=frozenset(test_signers)))


def svm_trainer(x, y, svm_cfg: dict, n_classes: int = NUM_CLASSES, seed: int = 0):
    """trainer/predictor pair for the CV harness over flat features."""

    def trainer(idx):
        return train_svm(
            x[idx],
            y[idx],
            n_classes=n_classes,
            c=svm_cfg.get("c", 1.0),
            tol=svm_cfg.get("tol", 1e-4),
            max_epochs=svm_cfg.get("max_epochs", 1000),
            seed=seed,
        )

    def predictor(model: SvmModel, idx):
        return model.predict(x[idx])

    return trainer, predictor


def rnn_trainer(x, y, mask, config: RnnConfig):
    """trainer/predictor pair for the CV harness over padded sequences.

    Each fold's held-out data doubles as the early-stopping set when
    patience is configured.
    """
    from .rnn import train_rnn

    def trainer(idx):
        val = None
        if config.early_stop_patience is not None:
            all_idx = np.arange(len(y))
            held = np.setdiff1d(all_idx, idx)
            val = (x[held], y[held], mask[held])
        return train_rnn(x[idx], y[idx], mask[idx], config, val=val)

    def predictor(model, idx):
        return model.predict(x[idx], mask[idx])

    return trainer, predictor
