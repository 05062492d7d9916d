"""Cross-validation folds, the evaluation protocol, and report output.

Protocol: seeded stratified k-fold on the training split produces k models;
every fold model is scored on the untouched test split; the reported
accuracy is the best of those, with the confusion matrix taken from the
best model. Test data never participates in training or in fitting any
statistics.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, InvariantError, IoError, LengthError
from .labels import WORD_LABELS


def stratified_folds(
    y: np.ndarray, k: int = 10, seed: int = 0, stratified: bool = True
) -> list[np.ndarray]:
    """k disjoint validation index arrays covering 0..n-1.

    Stratified dealing keeps class proportions; when any class has fewer
    than k members the split silently cannot stratify, so it falls back to a
    plain seeded shuffle and warns.
    """
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    if n < k:
        raise LengthError(f"cannot make {k} folds from {n} samples")
    rng = np.random.default_rng(seed)
    if stratified:
        counts = np.bincount(y)
        present = counts[np.unique(y)]
        if present.min() < k:
            warnings.warn(
                f"a class has fewer than {k} samples; falling back to a "
                "plain random split",
                stacklevel=2,
            )
            stratified = False
    folds: list[list[int]] = [[] for _ in range(k)]
    if stratified:
        cursor = 0
        for cls in np.unique(y):
            idx = np.flatnonzero(y == cls)
            idx = idx[rng.permutation(len(idx))]
            for i in idx:
                folds[cursor % k].append(int(i))
                cursor += 1
    else:
        order = rng.permutation(n)
        for pos, i in enumerate(order):
            folds[pos % k].append(int(i))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CvResult:
    models: list
    fold_accuracies: list[float]

    @property
    def avg_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


def cross_validate(
    y: np.ndarray,
    trainer,
    predictor,
    k: int = 10,
    seed: int = 0,
    stratified: bool = True,
) -> CvResult:
    """Train one model per fold and score it on the held-out fold.

    trainer(train_idx) -> model; predictor(model, idx) -> predicted labels.
    The callables close over the feature arrays, so the harness works for
    any classifier.
    """
    y = np.asarray(y, dtype=np.int64)
    folds = stratified_folds(y, k=k, seed=seed, stratified=stratified)
    all_idx = np.arange(y.shape[0])
    models = []
    accs = []
    for val_idx in folds:
        train_idx = np.setdiff1d(all_idx, val_idx)
        model = trainer(train_idx)
        pred = np.asarray(predictor(model, val_idx))
        accs.append(float((pred == y[val_idx]).mean()))
        models.append(model)
    return CvResult(models=models, fold_accuracies=accs)


def confusion_matrix(
    y_true: np.ndarray, y_pred: np.ndarray, n_classes: int
) -> np.ndarray:
    """(n_classes, n_classes) counts; rows are true classes, columns predicted."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (y_true, y_pred), 1)
    return m


@dataclass
class EvalReport:
    fold_accuracies: list[float]
    avg_cv_accuracy: float
    test_accuracies: list[float]
    best_test_accuracy: float
    best_fold_index: int
    confusion: np.ndarray
    per_class_top1: list[float]
    labels: tuple[str, ...] = tuple(WORD_LABELS)

    def to_dict(self) -> dict:
        return {
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "avg_cv_accuracy": float(self.avg_cv_accuracy),
            "test_accuracies": [float(a) for a in self.test_accuracies],
            "best_test_accuracy": float(self.best_test_accuracy),
            "best_fold_index": int(self.best_fold_index),
            "confusion": self.confusion.tolist(),
            "per_class_top1": [float(a) for a in self.per_class_top1],
            "labels": list(self.labels),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_json())
        except OSError as exc:
            raise IoError(f"cannot write report {path}: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            fold_accuracies=d["fold_accuracies"],
            avg_cv_accuracy=d["avg_cv_accuracy"],
            test_accuracies=d["test_accuracies"],
            best_test_accuracy=d["best_test_accuracy"],
            best_fold_index=d["best_fold_index"],
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            per_class_top1=d["per_class_top1"],
            labels=tuple(d["labels"]),
        )

    def confusion_csv(self) -> str:
        """Confusion counts as CSV with a label header row and column."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\pred", *self.labels])
        for label, row in zip(self.labels, self.confusion):
            writer.writerow([label, *row.tolist()])
        return buf.getvalue()


def evaluate(
    fold_models: list,
    predictor,
    y_test: np.ndarray,
    n_classes: int | None = None,
    cv_accuracies: list[float] | None = None,
    labels: tuple[str, ...] | None = None,
) -> EvalReport:
    """Score every fold model on the test set and report the best.

    predictor(model) -> predicted labels for the whole test set. Ties on
    the best accuracy resolve to the lowest fold index.
    """
    y_test = np.asarray(y_test, dtype=np.int64)
    if y_test.size == 0:
        raise EmptyInputError("evaluate needs a non-empty test set")
    if not fold_models:
        raise EmptyInputError("evaluate needs at least one fold model")
    if labels is None:
        labels = tuple(WORD_LABELS)
    if n_classes is None:
        n_classes = len(labels)
    if len(labels) != n_classes:
        raise InvariantError(
            f"{len(labels)} labels for {n_classes} classes"
        )
    preds = [np.asarray(predictor(m), dtype=np.int64) for m in fold_models]
    for p in preds:
        if p.shape != y_test.shape:
            raise LengthError("predictor output does not match test size")
    test_accs = [float((p == y_test).mean()) for p in preds]
    best_idx = int(np.argmax(test_accs))
    conf = confusion_matrix(y_test, preds[best_idx], n_classes)
    row_sums = conf.sum(axis=1)
    per_class = np.divide(
        np.diag(conf),
        row_sums,
        out=np.zeros(n_classes, dtype=np.float64),
        where=row_sums > 0,
    )
    cv = list(cv_accuracies) if cv_accuracies is not None else []
    return EvalReport(
        fold_accuracies=cv,
        avg_cv_accuracy=float(np.mean(cv)) if cv else 0.0,
        test_accuracies=test_accs,
        best_test_accuracy=test_accs[best_idx],
        best_fold_index=best_idx,
        confusion=conf,
        per_class_top1=per_class.tolist(),
        labels=labels,
    )
