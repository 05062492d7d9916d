"""Bidirectional LSTM with additive attention, written in plain numpy.

One recurrent layer per direction, an additive attention head that pools
the per-frame outputs into a context vector, then a dense layer producing
class logits. Padded frames are handled by explicit masks: state passes
through unchanged, attention weight is exactly zero there. All math is
float64; the analytic backward pass is verified against central finite
differences by gradient_check.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DivergenceError,
    FormatError,
    InvariantError,
    IoError,
    LengthError,
    TruncationError,
)

_RNN_HEADER = struct.Struct("<4sIIIII")
_RNN_MAGIC = b"RNN1"

_PARAM_ORDER = (
    "wx_f", "wh_f", "b_f",
    "wx_b", "wh_b", "b_b",
    "wa", "ba", "va",
    "wo", "bo",
)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class RnnConfig:
    hidden_size: int = 128
    attention_size: int | None = None  # defaults to hidden_size
    dropout: float = 0.3
    learning_rate: float = 3e-5
    batch_size: int = 32
    max_epochs: int = 200
    early_stop_patience: int | None = None
    seed: int = 0
    mask_padding: bool = True
    n_classes: int = 60

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise InvariantError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.learning_rate <= 0:
            raise InvariantError("learning_rate must be positive")
        if min(self.hidden_size, self.batch_size, self.max_epochs, self.n_classes) < 1:
            raise InvariantError("sizes and epoch count must be >= 1")

    @property
    def attn(self) -> int:
        return self.attention_size or self.hidden_size


def _param_shapes(input_dim: int, hidden: int, attn: int, n_classes: int) -> dict:
    return {
        "wx_f": (4 * hidden, input_dim),
        "wh_f": (4 * hidden, hidden),
        "b_f": (4 * hidden,),
        "wx_b": (4 * hidden, input_dim),
        "wh_b": (4 * hidden, hidden),
        "b_b": (4 * hidden,),
        "wa": (attn, 2 * hidden),
        "ba": (attn,),
        "va": (attn,),
        "wo": (n_classes, 2 * hidden),
        "bo": (n_classes,),
    }


def init_params(
    rng: np.random.Generator, input_dim: int, hidden: int, attn: int, n_classes: int
) -> dict:
    """Uniform fan-balanced init; forget-gate bias starts at 1."""
    params = {}
    for name, shape in _param_shapes(input_dim, hidden, attn, n_classes).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    params["b_f"][hidden : 2 * hidden] = 1.0
    params["b_b"][hidden : 2 * hidden] = 1.0
    params["va"] = rng.uniform(-0.1, 0.1, size=(attn,))
    return params


def _lstm_forward(x, mask, wx, wh, b):
    """Masked LSTM over (B, T, D); masked steps pass state through."""
    bsz, steps, _ = x.shape
    hidden = wh.shape[1]
    h = np.zeros((bsz, hidden))
    c = np.zeros((bsz, hidden))
    hs = np.zeros((bsz, steps, hidden))
    cache = []
    for t in range(steps):
        m = mask[:, t][:, None]
        a = x[:, t] @ wx.T + h @ wh.T + b
        i = _sigmoid(a[:, :hidden])
        f = _sigmoid(a[:, hidden : 2 * hidden])
        g = np.tanh(a[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(a[:, 3 * hidden :])
        c_cand = f * c + i * g
        tanh_c = np.tanh(c_cand)
        h_cand = o * tanh_c
        c_new = m * c_cand + (1.0 - m) * c
        h_new = m * h_cand + (1.0 - m) * h
        cache.append((x[:, t], h, c, i, f, g, o, tanh_c, m))
        h, c = h_new, c_new
        hs[:, t] = h
    return hs, cache


def _lstm_backward(dhs, cache, wx, wh):
    bsz, steps, hidden = dhs.shape
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden)
    dx = np.zeros((bsz, steps, wx.shape[1]))
    dh_next = np.zeros((bsz, hidden))
    dc_next = np.zeros((bsz, hidden))
    for t in reversed(range(steps)):
        x_t, h_prev, c_prev, i, f, g, o, tanh_c, m = cache[t]
        dh = dhs[:, t] + dh_next
        dc = dc_next
        dh_cand = dh * m
        dc_cand = dc * m
        do = dh_cand * tanh_c
        dc_cand = dc_cand + dh_cand * o * (1.0 - tanh_c**2)
        df = dc_cand * c_prev
        di = dc_cand * g
        dg = dc_cand * i
        da = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dwx += da.T @ x_t
        dwh += da.T @ h_prev
        db += da.sum(axis=0)
        dx[:, t] = da @ wx
        dh_next = dh * (1.0 - m) + da @ wh
        dc_next = dc * (1.0 - m) + dc_cand * f
    return dwx, dwh, db, dx


def _attention_forward(h, mask, wa, ba, va):
    """Additive attention pooling with hard masking.

    Returns (context, alpha, cache); alpha rows sum to 1 over valid frames
    and are exactly zero where mask is zero.
    """
    z = h @ wa.T + ba  # (B, T, A)
    u = np.tanh(z)
    e = u @ va  # (B, T)
    neg = np.where(mask > 0, e, -np.inf)
    emax = neg.max(axis=1, keepdims=True)
    ex = np.exp(e - emax) * mask
    denom = ex.sum(axis=1, keepdims=True)
    alpha = ex / denom
    ctx = np.einsum("bt,btc->bc", alpha, h)
    return ctx, alpha, (h, u, alpha)


def _attention_backward(dctx, cache, wa, va):
    h, u, alpha = cache
    dalpha = np.einsum("bc,btc->bt", dctx, h)
    dh = alpha[:, :, None] * dctx[:, None, :]
    s = (alpha * dalpha).sum(axis=1, keepdims=True)
    de = alpha * (dalpha - s)
    dva = np.einsum("bt,bta->a", de, u)
    du = de[:, :, None] * va[None, None, :]
    dz = du * (1.0 - u**2)
    dwa = np.einsum("bta,btc->ac", dz, h)
    dba = dz.sum(axis=(0, 1))
    dh += np.einsum("bta,ac->btc", dz, wa)
    return dh, dwa, dba, dva


def _as_mask(mask, x) -> np.ndarray:
    if mask is None:
        return np.ones(x.shape[:2])
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape[:2]:
        raise LengthError(f"mask shape {mask.shape} does not match {x.shape[:2]}")
    if not mask.any(axis=1).all():
        raise InvariantError("every sample needs at least one valid frame")
    return mask


def forward(
    params: dict,
    x: np.ndarray,
    mask: np.ndarray | None = None,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Full forward pass; returns (logits, alpha, cache)."""
    x = np.asarray(x, dtype=np.float64)
    mask = _as_mask(mask, x)
    hidden = params["wh_f"].shape[1]
    hs_f, cache_f = _lstm_forward(x, mask, params["wx_f"], params["wh_f"], params["b_f"])
    x_rev = x[:, ::-1]
    mask_rev = mask[:, ::-1]
    hs_b_rev, cache_b = _lstm_forward(
        x_rev, mask_rev, params["wx_b"], params["wh_b"], params["b_b"]
    )
    h_bi = np.concatenate([hs_f, hs_b_rev[:, ::-1]], axis=2)
    if dropout > 0.0:
        if rng is None:
            raise InvariantError("dropout needs an RNG")
        keep = 1.0 - dropout
        drop_seq = (rng.random(h_bi.shape) < keep) / keep
        h_drop = h_bi * drop_seq
    else:
        drop_seq = None
        h_drop = h_bi
    ctx, alpha, att_cache = _attention_forward(
        h_drop, mask, params["wa"], params["ba"], params["va"]
    )
    if dropout > 0.0:
        keep = 1.0 - dropout
        drop_ctx = (rng.random(ctx.shape) < keep) / keep
        ctx_drop = ctx * drop_ctx
    else:
        drop_ctx = None
        ctx_drop = ctx
    logits = ctx_drop @ params["wo"].T + params["bo"]
    cache = (x, mask, hidden, cache_f, cache_b, att_cache, ctx_drop,
             drop_seq, drop_ctx)
    return logits, alpha, cache


def loss_and_grads(
    params: dict,
    x: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray | None = None,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Mean cross-entropy and gradients for every parameter."""
    y = np.asarray(y, dtype=np.int64)
    logits, _, cache = forward(params, x, mask, dropout=dropout, rng=rng)
    (x64, mask64, hidden, cache_f, cache_b, att_cache, ctx_drop,
     drop_seq, drop_ctx) = cache
    bsz = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = float(-logp[np.arange(bsz), y].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(bsz), y] -= 1.0
    dlogits /= bsz
    grads = {
        "wo": dlogits.T @ ctx_drop,
        "bo": dlogits.sum(axis=0),
    }
    dctx = dlogits @ params["wo"]
    if drop_ctx is not None:
        dctx = dctx * drop_ctx
    dh_drop, grads["wa"], grads["ba"], grads["va"] = _attention_backward(
        dctx, att_cache, params["wa"], params["va"]
    )
    dh_bi = dh_drop * drop_seq if drop_seq is not None else dh_drop
    dwx_f, dwh_f, db_f, _ = _lstm_backward(
        dh_bi[:, :, :hidden], cache_f, params["wx_f"], params["wh_f"]
    )
    dwx_b, dwh_b, db_b, _ = _lstm_backward(
        dh_bi[:, ::-1, hidden:], cache_b, params["wx_b"], params["wh_b"]
    )
    grads.update(
        wx_f=dwx_f, wh_f=dwh_f, b_f=db_f, wx_b=dwx_b, wh_b=dwh_b, b_b=db_b
    )
    return loss, grads


@dataclass
class RnnModel:
    params: dict
    input_dim: int
    hidden_size: int
    attention_size: int
    n_classes: int
    mask_padding: bool = True
    history: list = field(default_factory=list, compare=False)

    def predict_proba(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        """Class probabilities (softmax over logits), no dropout."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[2] != self.input_dim:
            raise LengthError(
                f"feature width {x.shape[2]} does not match model {self.input_dim}"
            )
        if not self.mask_padding:
            mask = None
        logits, _, _ = forward(self.params, x, mask)
        shifted = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(shifted)
        return ez / ez.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return np.argmax(self.predict_proba(x, mask), axis=1)

    def attention_weights(self, x: np.ndarray, mask: np.ndarray | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        _, alpha, _ = forward(self.params, x, mask if self.mask_padding else None)
        return alpha

    def save(self, path) -> None:
        path = Path(path)
        try:
            with open(path, "wb") as fh:
                fh.write(
                    _RNN_HEADER.pack(
                        _RNN_MAGIC,
                        self.input_dim,
                        self.hidden_size,
                        self.attention_size,
                        self.n_classes,
                        1 if self.mask_padding else 0,
                    )
                )
                for name in _PARAM_ORDER:
                    fh.write(self.params[name].astype("<f8").tobytes(order="C"))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RnnModel":
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        if len(blob) < _RNN_HEADER.size:
            raise TruncationError(f"{path}: shorter than the fixed header")
        magic, input_dim, hidden, attn, n_classes, flags = _RNN_HEADER.unpack_from(blob)
        if magic != _RNN_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        shapes = _param_shapes(input_dim, hidden, attn, n_classes)
        expected = _RNN_HEADER.size + 8 * sum(
            int(np.prod(s)) for s in shapes.values()
        )
        if len(blob) != expected:
            raise TruncationError(f"{path}: {len(blob)} bytes, expected {expected}")
        params = {}
        offset = _RNN_HEADER.size
        for name in _PARAM_ORDER:
            shape = shapes[name]
            count = int(np.prod(shape))
            params[name] = (
                np.frombuffer(blob, dtype="<f8", offset=offset, count=count)
                .reshape(shape)
                .copy()
            )
            offset += 8 * count
        return cls(
            params=params,
            input_dim=input_dim,
            hidden_size=hidden,
            attention_size=attn,
            n_classes=n_classes,
            mask_padding=bool(flags & 1),
        )


def _adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    state["t"] += 1
    t = state["t"]
    for name, g in grads.items():
        m = state["m"][name] = beta1 * state["m"][name] + (1 - beta1) * g
        v = state["v"][name] = beta2 * state["v"][name] + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        params[name] -= lr * mhat / (np.sqrt(vhat) + eps)


def train_rnn(
    x: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray | None = None,
    config: RnnConfig = RnnConfig(),
    val: tuple | None = None,
) -> RnnModel:
    """Train on (N, T, F) padded sequences with a per-frame validity mask.

    Bit-reproducible given (seed, data order, config). Early stopping, when
    configured, watches the held-out loss from ``val = (x, y, mask)`` and
    restores the best parameters.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 3 or x.shape[0] != y.shape[0]:
        raise LengthError(f"bad training shapes {x.shape} vs {y.shape}")
    mask = _as_mask(mask, x) if config.mask_padding else np.ones(x.shape[:2])
    if config.early_stop_patience is not None and val is None:
        raise InvariantError("early stopping needs a validation set")

    ss = np.random.SeedSequence(config.seed)
    init_rng, shuffle_rng, drop_rng = (
        np.random.default_rng(s) for s in ss.spawn(3)
    )
    params = init_params(
        init_rng, x.shape[2], config.hidden_size, config.attn, config.n_classes
    )
    state = {
        "t": 0,
        "m": {k: np.zeros_like(p) for k, p in params.items()},
        "v": {k: np.zeros_like(p) for k, p in params.items()},
    }
    n = x.shape[0]
    history = []
    best_val = np.inf
    best_params = None
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            sel = perm[start : start + config.batch_size]
            loss, grads = loss_and_grads(
                params, x[sel], y[sel], mask[sel],
                dropout=config.dropout, rng=drop_rng,
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            _adam_step(params, grads, state, config.learning_rate)
            losses.append(loss)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val is not None:
            vx, vy, vmask = val
            vmask = _as_mask(vmask, np.asarray(vx, dtype=np.float64))
            vloss, _ = loss_and_grads(params, vx, vy, vmask)
            if not np.isfinite(vloss):
                raise DivergenceError(epoch)
            entry["val_loss"] = vloss
            if config.early_stop_patience is not None:
                if vloss < best_val:
                    best_val = vloss
                    best_params = {k: p.copy() for k, p in params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.early_stop_patience:
                        history.append(entry)
                        break
        history.append(entry)
    if best_params is not None:
        params = best_params
    return RnnModel(
        params=params,
        input_dim=x.shape[2],
        hidden_size=config.hidden_size,
        attention_size=config.attn,
        n_classes=config.n_classes,
        mask_padding=config.mask_padding,
        history=history,
    )


def gradient_check(
    params: dict,
    x: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray | None = None,
    step: float = 1e-5,
    grads: dict | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs with dropout off so the loss is a deterministic function of the
    parameters. Pass precomputed ``grads`` to check an alternative backward
    pass (e.g. a deliberately corrupted one).
    """
    if grads is None:
        _, grads = loss_and_grads(params, x, y, mask)
    worst = 0.0
    for name in _PARAM_ORDER:
        p = params[name]
        flat = p.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            lo_plus, _ = loss_and_grads(params, x, y, mask)
            flat[idx] = orig - step
            lo_minus, _ = loss_and_grads(params, x, y, mask)
            flat[idx] = orig
            numeric = (lo_plus - lo_minus) / (2 * step)
            denom = max(abs(g_flat[idx]) + abs(numeric), 1e-6)
            worst = max(worst, abs(g_flat[idx] - numeric) / denom)
    return worst
