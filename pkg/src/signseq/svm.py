"""One-vs-rest linear SVM trained by dual coordinate descent.

Each binary machine minimizes 0.5 ||w||^2 + C * sum hinge(y_i * w.x_i)
with the bias folded in as a constant 1.0 feature (so the dual is box
constrained only). Optimization runs coordinate updates over the dual
variables with a seeded per-epoch permutation and stops when the duality
gap drops below tolerance. Everything is float64 and deterministic given
(seed, data order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLabelsError,
    FormatError,
    IoError,
    LengthError,
    TruncationError,
)

_SVM_HEADER = struct.Struct("<4sIId")
_SVM_MAGIC = b"SVM1"


def _train_binary(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float,
    max_epochs: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Dual coordinate descent for one binary machine.

    Returns the augmented weight vector (last component is the bias) and the
    dual variables, which callers can feed to dual_objective.
    """
    n = x.shape[0]
    # squared row norms of the augmented rows
    qd = np.einsum("ij,ij->i", x, x) + 1.0
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            yi = y[i]
            g = yi * (x[i] @ w + b) - 1.0
            pg = g
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            if pg != 0.0:
                new = min(max(alpha[i] - g / qd[i], 0.0), c)
                delta = (new - alpha[i]) * yi
                if delta != 0.0:
                    w += delta * x[i]
                    b += delta
                alpha[i] = new
        margins = y * (x @ w + b)
        reg = 0.5 * (w @ w + b * b)
        primal = reg + c * np.maximum(0.0, 1.0 - margins).sum()
        dual = alpha.sum() - reg
        if primal - dual <= tol * max(1.0, primal):
            break
    return np.concatenate([w, [b]]), alpha


def dual_objective(x: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Dual value sum(alpha) - 0.5 ||w(alpha)||^2 with the augmented bias."""
    ya = alpha * y
    w = x.T @ ya
    b = ya.sum()
    return float(alpha.sum() - 0.5 * (w @ w + b * b))


@dataclass
class SvmModel:
    """Per-class weight rows plus biases; prediction is argmax of decisions."""

    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray  # (n_classes,)
    c: float

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise LengthError(
                f"feature width {x.shape[1]} does not match model dim {self.dim}"
            )
        return x @ self.weights.T + self.biases

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Predicted class indices; ties resolve to the lowest class index."""
        return np.argmax(self.decision_values(x), axis=1)

    def save(self, path) -> None:
        path = Path(path)
        try:
            with open(path, "wb") as fh:
                fh.write(
                    _SVM_HEADER.pack(_SVM_MAGIC, self.n_classes, self.dim, self.c)
                )
                fh.write(self.weights.astype("<f8").tobytes(order="C"))
                fh.write(self.biases.astype("<f8").tobytes(order="C"))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SvmModel":
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        if len(blob) < _SVM_HEADER.size:
            raise TruncationError(f"{path}: shorter than the fixed header")
        magic, n_classes, dim, c = _SVM_HEADER.unpack_from(blob)
        if magic != _SVM_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        expected = _SVM_HEADER.size + (n_classes * dim + n_classes) * 8
        if len(blob) != expected:
            raise TruncationError(f"{path}: {len(blob)} bytes, expected {expected}")
        floats = np.frombuffer(blob, dtype="<f8", offset=_SVM_HEADER.size)
        weights = floats[: n_classes * dim].reshape(n_classes, dim).copy()
        biases = floats[n_classes * dim :].copy()
        return cls(weights=weights, biases=biases, c=c)


def train_svm(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int | None = None,
    c: float = 1.0,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    seed: int = 0,
) -> SvmModel:
    """Train one-vs-rest linear machines over integer class labels."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise LengthError(f"bad training shapes {x.shape} vs {y.shape}")
    present = np.unique(y)
    if present.size < 2:
        raise DegenerateLabelsError(
            f"training needs at least two classes, got {present.tolist()}"
        )
    if n_classes is None:
        n_classes = int(present.max()) + 1
    weights = np.zeros((n_classes, x.shape[1]))
    biases = np.zeros(n_classes)
    root = np.random.default_rng(seed)
    seeds = root.integers(0, 2**63 - 1, size=n_classes)
    for k in range(n_classes):
        yk = np.where(y == k, 1.0, -1.0)
        rng = np.random.default_rng(int(seeds[k]))
        wb, _ = _train_binary(x, yk, c, tol, max_epochs, rng)
        weights[k] = wb[:-1]
        biases[k] = wb[-1]
    return SvmModel(weights=weights, biases=biases, c=c)


def predict_svm(model: SvmModel, x: np.ndarray) -> np.ndarray:
    return model.predict(x)
