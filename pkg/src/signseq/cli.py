"""Command-line front end.

Subcommands: ingest, stats, preprocess, encode-rq, dtw-features, train,
evaluate, report. Every run writes a manifest (resolved config, seed,
package versions) next to its outputs; two runs with identical manifests
produce byte-identical outputs. Exit codes: 0 success, 2 configuration or
usage error (the failing key is named), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rq as rq_mod
from .dtw import TemplateSource, select_templates, write_dtw_matrix
from .errors import ConfigError, SignseqError
from .evaluate import EvalReport, cross_validate, evaluate
from .ingest import compute_stats
from .landmarks import FeatureSet, missing_hand_rate, write_landmarks
from .pipeline import (
    FeaturePlan,
    build_matrix_dataset,
    dtw_feature_matrix,
    ingest_dataset,
    load_trials,
    make_split,
    preprocess_geometry,
    rnn_trainer,
    svm_trainer,
    trial_filename,
)
from .preprocess import (
    DominanceMode,
    Temporal,
    VariantConfig,
    apply_normalizer,
    apply_variant_temporal,
    correct_frame_rate,
    fit_normalizer,
)
from .rnn import RnnConfig, RnnModel
from .svm import SvmModel

DEFAULT_CONFIG = {
    "dataset_root": None,
    "out": "out",
    "seed": 0,
    "jobs": 1,
    "feature_set": "posehands75",
    "post_scale": None,  # null: 1.0 for svm paths, 100.0 for the rnn
    "variant": {"temporal": "padded", "dominance": "flipped", "target_len": 164},
    "split": {"test_signers": ["U4", "U8"]},
    "cv": {"folds": 10, "stratified": True},
    "classifier": "svm",
    "svm": {"c": 1.0, "tol": 1e-4, "max_epochs": 1000},
    "rnn": {
        "hidden_size": 128,
        "attention_size": None,
        "dropout": 0.3,
        "learning_rate": 3e-5,
        "batch_size": 32,
        "max_epochs": 200,
        "early_stop_patience": None,
        "mask_padding": True,
    },
    "rq": {"enabled": False, "ignore_head_and_legs": True},
    "dtw": {"template_source": "test", "band": None},
    "calibration_axes": ["x", "y", "d"],
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config", "top level must be an object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        cfg = _merge(cfg, user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    if args.out is not None:
        cfg["out"] = args.out
    if cfg["dataset_root"] is None:
        cfg["dataset_root"] = os.environ.get("SIGNSEQ_DATA")
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["feature_set"] not in ("full543", "posehands75"):
        raise ConfigError("feature_set", f"unknown value {cfg['feature_set']!r}")
    v = cfg["variant"]
    if v["temporal"] not in ("padded", "prolonged", "none"):
        raise ConfigError("variant.temporal", f"unknown value {v['temporal']!r}")
    if v["dominance"] not in ("original", "flipped"):
        raise ConfigError("variant.dominance", f"unknown value {v['dominance']!r}")
    if not isinstance(v["target_len"], int) or v["target_len"] < 1:
        raise ConfigError("variant.target_len", "must be a positive integer")
    if cfg["classifier"] not in ("svm", "svm-dtw", "rnn"):
        raise ConfigError("classifier", f"unknown value {cfg['classifier']!r}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed", "must be an integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs", "must be a positive integer")
    if cfg["cv"]["folds"] < 2:
        raise ConfigError("cv.folds", "must be at least 2")
    if cfg["dtw"]["template_source"] not in ("test", "train"):
        raise ConfigError("dtw.template_source", "must be 'test' or 'train'")
    if cfg["post_scale"] is not None and cfg["post_scale"] <= 0:
        raise ConfigError("post_scale", "must be positive")
    if not 0.0 <= cfg["rnn"]["dropout"] < 1.0:
        raise ConfigError("rnn.dropout", "must be in [0, 1)")


def _feature_set(cfg) -> FeatureSet:
    return FeatureSet(cfg["feature_set"])


def _variant(cfg) -> VariantConfig:
    v = cfg["variant"]
    return VariantConfig(
        temporal=Temporal(v["temporal"]),
        dominance=DominanceMode(v["dominance"]),
        target_len=v["target_len"],
    )


def _post_scale(cfg) -> float:
    if cfg["post_scale"] is not None:
        return float(cfg["post_scale"])
    return 100.0 if cfg["classifier"] == "rnn" else 1.0


def _dataset_root(cfg) -> Path:
    root = cfg["dataset_root"]
    if not root:
        raise ConfigError(
            "dataset_root", "not set (use the config file or SIGNSEQ_DATA)"
        )
    root = Path(root)
    if not root.exists():
        raise ConfigError("dataset_root", f"directory not found: {root}")
    return root


def write_manifest(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg,
        "versions": {
            "signseq": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _trials_dir(cfg) -> Path:
    """Segmented trials: <out>/trials if present, else <dataset_root>/trials."""
    out_trials = Path(cfg["out"]) / "trials"
    if out_trials.is_dir() and any(out_trials.glob("*.lmk1")):
        return out_trials
    root = _dataset_root(cfg)
    if (root / "trials").is_dir():
        return root / "trials"
    raise ConfigError("dataset_root", f"no trials directory under {root} or {out_trials}")


def cmd_ingest(args, cfg) -> int:
    root = _dataset_root(cfg)
    videos = root / "videos"
    ann_dir = root / "annotations"
    if not videos.is_dir():
        raise ConfigError("dataset_root", f"missing videos directory {videos}")
    ann_paths = sorted(ann_dir.glob("*")) if ann_dir.is_dir() else []
    ann_paths = [p for p in ann_paths if p.suffix in (".txt", ".json")]
    if not ann_paths:
        raise ConfigError("dataset_root", f"no annotation files under {ann_dir}")
    out_dir = Path(cfg["out"]) / "trials"
    trials = ingest_dataset(videos, ann_paths, out_dir)
    write_manifest(out_dir, "ingest", cfg)
    print(f"ingested {len(trials)} trials -> {out_dir}")
    return 0


def cmd_stats(args, cfg) -> int:
    trials = load_trials(_trials_dir(cfg))
    corrected = [correct_frame_rate(t) for t in trials]
    stats = compute_stats(corrected)
    rate = missing_hand_rate(corrected)
    out_dir = Path(cfg["out"]) / "stats"
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dict(stats.to_dict(), missing_hand_rate=rate)
    (out_dir / "stats.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    write_manifest(out_dir, "stats", cfg)
    print(f"trials:              {stats.trial_count}")
    print(f"max_frames:          {stats.max_frames}")
    print(f"min_frames:          {stats.min_frames}")
    print(f"avg_frames:          {stats.avg_frames:.2f}")
    print(f"right_hand_trials:   {stats.right_hand_instances}")
    print(f"left_hand_trials:    {stats.left_hand_instances}")
    print(f"missing_hand_rate:   {rate:.4f}")
    return 0


def cmd_preprocess(args, cfg) -> int:
    variant = _variant(cfg)
    trials = load_trials(_trials_dir(cfg))
    prepped = preprocess_geometry(
        trials, variant, tuple(cfg["calibration_axes"])
    )
    out_dir = Path(cfg["out"]) / "processed"
    out_dir.mkdir(parents=True, exist_ok=True)
    shaped = [apply_variant_temporal(t, variant) for t in prepped]
    shaped_train = [
        t for t in shaped if t.signer_id not in set(cfg["split"]["test_signers"])
    ]
    norm = None
    if args.normalize:
        fit_pool = shaped_train if shaped_train else shaped
        norm = fit_normalizer(fit_pool, _feature_set(cfg), _post_scale(cfg))
        shaped = [apply_normalizer(norm, t) for t in shaped]
        norm.save(out_dir / "normalizer.json")
    for t in shaped:
        write_landmarks(t, out_dir / trial_filename(t))
    write_manifest(out_dir, "preprocess", cfg)
    print(f"preprocessed {len(shaped)} trials -> {out_dir}")
    return 0


def cmd_encode_rq(args, cfg) -> int:
    variant = _variant(cfg)
    trials = load_trials(_trials_dir(cfg))
    prepped = preprocess_geometry(trials, variant, tuple(cfg["calibration_axes"]))
    table = rq_mod.default_parent_table(cfg["rq"]["ignore_head_and_legs"])
    scheme = rq_mod.default_scheme()
    fs = _feature_set(cfg)
    out_dir = Path(cfg["out"]) / "rq"
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    for t in prepped:
        codes = rq_mod.encode_sequence(t, table, scheme, fs)
        stem = trial_filename(t).removesuffix(".lmk1")
        (out_dir / f"{stem}.tokens").write_text(
            rq_mod.sequence_to_tokens(codes), encoding="utf-8"
        )
        index[stem] = {
            "signer_id": t.signer_id,
            "word_label": t.word_label,
            "trial_index": t.trial_index,
            "frames": t.n_frames,
        }
    (out_dir / "scheme.json").write_text(scheme.to_json() + "\n")
    (out_dir / "parents.json").write_text(table.to_json() + "\n")
    (out_dir / "index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n"
    )
    write_manifest(out_dir, "encode-rq", cfg)
    print(f"encoded {len(index)} trials -> {out_dir}")
    return 0


def _geometry_no_temporal(cfg) -> VariantConfig:
    v = _variant(cfg)
    return VariantConfig(
        temporal=Temporal.NONE, dominance=v.dominance, target_len=v.target_len
    )


def cmd_dtw_features(args, cfg) -> int:
    trials = load_trials(_trials_dir(cfg))
    prepped = preprocess_geometry(
        trials, _geometry_no_temporal(cfg), tuple(cfg["calibration_axes"])
    )
    fs = _feature_set(cfg)
    train, test = make_split(prepped, cfg["split"]["test_signers"])
    norm = fit_normalizer(train if train else prepped, fs, 1.0)
    prepped = [apply_normalizer(norm, t) for t in prepped]
    train, test = make_split(prepped, cfg["split"]["test_signers"])
    source = TemplateSource(cfg["dtw"]["template_source"])
    pool = test if source is TemplateSource.TEST and test else train
    bank = select_templates(pool, seed=cfg["seed"], source=source)
    ordered = sorted(
        prepped, key=lambda t: (t.signer_id, t.word_label, t.trial_index)
    )
    matrix = dtw_feature_matrix(
        ordered, bank, fs, band=cfg["dtw"]["band"], jobs=cfg["jobs"]
    )
    out_dir = Path(cfg["out"]) / "features"
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "selection_seed": cfg["seed"],
        "template_source": source.value,
        "feature_set": fs.value,
        "rows": [trial_filename(t) for t in ordered],
    }
    write_dtw_matrix(matrix, out_dir / "dtw.dtwf", manifest)
    write_manifest(out_dir, "dtw-features", cfg)
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} features -> {out_dir}")
    return 0


def _prepare_features(cfg):
    """Shared train/evaluate feature preparation from the segmented trials."""
    classifier = cfg["classifier"]
    trials = load_trials(_trials_dir(cfg))
    test_signers = cfg["split"]["test_signers"]
    fs = _feature_set(cfg)
    if classifier == "svm-dtw":
        prepped = preprocess_geometry(
            trials, _geometry_no_temporal(cfg), tuple(cfg["calibration_axes"])
        )
        train_t, test_t = make_split(prepped, test_signers)
        norm = fit_normalizer(train_t, fs, 1.0)
        train_t = [apply_normalizer(norm, t) for t in train_t]
        test_t = [apply_normalizer(norm, t) for t in test_t]
        source = TemplateSource(cfg["dtw"]["template_source"])
        pool = test_t if source is TemplateSource.TEST and test_t else train_t
        bank = select_templates(pool, seed=cfg["seed"], source=source)
        x_train = dtw_feature_matrix(
            train_t, bank, fs, band=cfg["dtw"]["band"], jobs=cfg["jobs"]
        )
        x_test = (
            dtw_feature_matrix(
                test_t, bank, fs, band=cfg["dtw"]["band"], jobs=cfg["jobs"]
            )
            if test_t
            else None
        )
        y_train = np.array([t.word_class for t in train_t], dtype=np.int64)
        y_test = (
            np.array([t.word_class for t in test_t], dtype=np.int64)
            if test_t
            else None
        )
        fit_signers = sorted({t.signer_id for t in train_t})
        return {
            "kind": "flat",
            "x_train": x_train,
            "y_train": y_train,
            "x_test": x_test,
            "y_test": y_test,
            "fit_signers": fit_signers,
        }

    variant = _variant(cfg)
    prepped = preprocess_geometry(trials, variant, tuple(cfg["calibration_axes"]))
    train_t, test_t = make_split(prepped, test_signers)
    plan = FeaturePlan(
        feature_set=fs,
        variant=variant,
        post_scale=_post_scale(cfg),
        use_rq=cfg["rq"]["enabled"],
        rq_table=rq_mod.default_parent_table(cfg["rq"]["ignore_head_and_legs"])
        if cfg["rq"]["enabled"]
        else None,
    )
    train_ds, test_ds = build_matrix_dataset(plan, train_t, test_t)
    return {
        "kind": "sequence" if classifier == "rnn" else "flat",
        "train_ds": train_ds,
        "test_ds": test_ds,
        "x_train": train_ds.flat(),
        "y_train": train_ds.y,
        "x_test": test_ds.flat() if test_ds else None,
        "y_test": test_ds.y if test_ds else None,
        "fit_signers": sorted(set(train_ds.signers)),
    }


def _rnn_config(cfg) -> RnnConfig:
    r = cfg["rnn"]
    return RnnConfig(
        hidden_size=r["hidden_size"],
        attention_size=r["attention_size"],
        dropout=r["dropout"],
        learning_rate=r["learning_rate"],
        batch_size=r["batch_size"],
        max_epochs=r["max_epochs"],
        early_stop_patience=r["early_stop_patience"],
        seed=cfg["seed"],
        mask_padding=r["mask_padding"],
    )


def cmd_train(args, cfg) -> int:
    feats = _prepare_features(cfg)
    out_dir = Path(cfg["out"]) / "models"
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier = cfg["classifier"]
    if classifier == "rnn":
        ds = feats["train_ds"]
        trainer, predictor = rnn_trainer(ds.x, ds.y, ds.mask, _rnn_config(cfg))
    else:
        trainer, predictor = svm_trainer(
            feats["x_train"], feats["y_train"], cfg["svm"], seed=cfg["seed"]
        )
    cv = cross_validate(
        feats["y_train"],
        trainer,
        predictor,
        k=cfg["cv"]["folds"],
        seed=cfg["seed"],
        stratified=cfg["cv"]["stratified"],
    )
    for i, model in enumerate(cv.models):
        suffix = "rnn1" if classifier == "rnn" else "svm1"
        model.save(out_dir / f"fold_{i:02d}.{suffix}")
    (out_dir / "cv.json").write_text(
        json.dumps(
            {
                "fold_accuracies": cv.fold_accuracies,
                "avg_cv_accuracy": cv.avg_accuracy,
                "fit_signers": feats["fit_signers"],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    write_manifest(out_dir, "train", cfg)
    print(
        f"trained {len(cv.models)} fold models ({classifier}), "
        f"avg cv accuracy {cv.avg_accuracy:.4f} -> {out_dir}"
    )
    return 0


def cmd_evaluate(args, cfg) -> int:
    models_dir = Path(args.models) if args.models else Path(cfg["out"]) / "models"
    if not models_dir.is_dir():
        raise ConfigError("models", f"models directory not found: {models_dir}")
    cv_path = models_dir / "cv.json"
    if not cv_path.exists():
        raise ConfigError("models", f"missing cv.json under {models_dir}")
    cv_info = json.loads(cv_path.read_text())
    test_signers = set(cfg["split"]["test_signers"])
    leaked = test_signers & set(cv_info.get("fit_signers", []))
    if leaked:
        raise ConfigError(
            "split.test_signers",
            f"models were fitted on test signers {sorted(leaked)}; refusing",
        )
    feats = _prepare_features(cfg)
    if feats["y_test"] is None:
        raise ConfigError("split.test_signers", "test split is empty")
    classifier = cfg["classifier"]
    if classifier == "rnn":
        paths = sorted(models_dir.glob("fold_*.rnn1"))
        models = [RnnModel.load(p) for p in paths]
        ds = feats["test_ds"]
        predictor = lambda m: m.predict(ds.x, ds.mask)
    else:
        paths = sorted(models_dir.glob("fold_*.svm1"))
        models = [SvmModel.load(p) for p in paths]
        predictor = lambda m: m.predict(feats["x_test"])
    if not models:
        raise ConfigError("models", f"no fold models under {models_dir}")
    report = evaluate(
        models,
        predictor,
        feats["y_test"],
        cv_accuracies=cv_info.get("fold_accuracies"),
    )
    out_dir = Path(cfg["out"]) / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save(out_dir / "eval.json")
    (out_dir / "confusion.csv").write_text(report.confusion_csv())
    write_manifest(out_dir, "evaluate", cfg)
    print(f"best test accuracy {report.best_test_accuracy:.4f} -> {out_dir}")
    return 0


def cmd_report(args, cfg) -> int:
    path = Path(args.input) if args.input else Path(cfg["out"]) / "reports" / "eval.json"
    if not path.exists():
        raise ConfigError("report.input", f"report not found: {path}")
    report = EvalReport.from_json(path.read_text())
    print(f"folds:              {len(report.fold_accuracies)}")
    if report.fold_accuracies:
        print(f"avg_cv_accuracy:    {report.avg_cv_accuracy:.4f}")
    print(f"best_test_accuracy: {report.best_test_accuracy:.4f}")
    print(f"best_fold_index:    {report.best_fold_index}")
    shown = [
        (report.labels[i], acc)
        for i, acc in enumerate(report.per_class_top1)
        if report.confusion[i].sum() > 0
    ]
    worst = sorted(shown, key=lambda p: p[1])[:5]
    for label, acc in worst:
        print(f"  weakest {label}: top-1 {acc:.3f}")
    if args.heatmap:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("heatmap skipped: matplotlib is not installed", file=sys.stderr)
            return 1
        fig, ax = plt.subplots(figsize=(10, 10))
        ax.imshow(report.confusion, cmap="viridis")
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        fig.savefig(args.heatmap, dpi=120)
        print(f"heatmap -> {args.heatmap}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signseq",
        description="Word-level sign language recognition pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--jobs", type=int, default=None, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--out", default=None, help="output directory")

    common(sub.add_parser("ingest", help="segment video streams into trials"))
    common(sub.add_parser("stats", help="dataset statistics after frame-rate correction"))
    p = sub.add_parser("preprocess", help="calibrate, flip, shape, standardize")
    common(p)
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    common(sub.add_parser("encode-rq", help="emit quantized token streams"))
    common(sub.add_parser("dtw-features", help="template distances as features"))
    common(sub.add_parser("train", help="k-fold training of the configured classifier"))
    p = sub.add_parser("evaluate", help="score fold models on the test signers")
    common(p)
    p.add_argument("--models", help="models directory (default <out>/models)")
    p = sub.add_parser("report", help="summarize an evaluation report")
    common(p)
    p.add_argument("--input", help="eval.json path (default <out>/reports/eval.json)")
    p.add_argument("--heatmap", help="write a confusion heatmap PNG here")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "preprocess": cmd_preprocess,
    "encode-rq": cmd_encode_rq,
    "dtw-features": cmd_dtw_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SignseqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
