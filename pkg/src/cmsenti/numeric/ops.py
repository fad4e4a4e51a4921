"""Differentiable operations over :class:`~cmsenti.numeric.tensor.Tensor`.

Every op validates shapes, computes the forward value (64-bit accumulation
inside matmuls and reductions, 32-bit storage), and registers a backward
closure on the active tape when any input requires a gradient.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import DTYPE, Tensor, active_tape, guard_finite


def _f64(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float64, copy=False)


def _matmul64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (_f64(a) @ _f64(b)).astype(DTYPE)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    g64 = _f64(g)
    while g64.ndim > len(shape):
        g64 = g64.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g64.shape[axis] != 1:
            g64 = g64.sum(axis=axis, keepdims=True)
    return g64.astype(DTYPE)


def _finish(out: Tensor, op_name: str, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    guard_finite(out.data, op_name)
    t = active_tape()
    if t is not None and any(x.requires_grad for x in inputs):
        out.requires_grad = True
        t.record(out, backward_fn)
    return out


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(g, b.shape))

    return _finish(out, "add", (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _finish(out, "sub", (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def backward_fn(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _finish(out, "mul", (a, b), backward_fn)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor(a.data * np.float32(s))

    def backward_fn(g):
        a.accumulate_grad((g * np.float32(s)).astype(DTYPE))

    return _finish(out, "scale", (a,), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    out = Tensor(_matmul64(a.data, b.data))

    def backward_fn(g):
        ga = _f64(g) @ _f64(b.data).swapaxes(-1, -2)
        gb = _f64(a.data).swapaxes(-1, -2) @ _f64(g)
        a.accumulate_grad(_unbroadcast(ga, a.shape))
        b.accumulate_grad(_unbroadcast(gb, b.shape))

    return _finish(out, "matmul", (a, b), backward_fn)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``y = x @ w + b`` broadcast over the leading dimensions of ``x``."""
    if w.ndim != 2:
        raise ShapeError(f"linear weight must be 2-d, got {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear dims disagree: x {x.shape} vs w {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear bias {b.shape} does not match w {w.shape}")
    y64 = _f64(x.data) @ _f64(w.data)
    if b is not None:
        y64 = y64 + _f64(b.data)
    out = Tensor(y64.astype(DTYPE))

    def backward_fn(g):
        g64 = _f64(g)
        x2 = _f64(x.data).reshape(-1, x.shape[-1])
        g2 = g64.reshape(-1, w.shape[1])
        x.accumulate_grad((g64 @ _f64(w.data).T).astype(DTYPE))
        w.accumulate_grad((x2.T @ g2).astype(DTYPE))
        if b is not None:
            b.accumulate_grad(g2.sum(axis=0).astype(DTYPE))

    inputs = (x, w) if b is None else (x, w, b)
    return _finish(out, "linear", inputs, backward_fn)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def backward_fn(g):
        x.accumulate_grad((g * (x.data > 0)).astype(DTYPE))

    return _finish(out, "relu", (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    x64 = _f64(x.data)
    s = np.where(x64 >= 0, 1.0 / (1.0 + np.exp(-x64)), np.exp(x64) / (1.0 + np.exp(x64)))
    out = Tensor(s.astype(DTYPE))

    def backward_fn(g):
        x.accumulate_grad((_f64(g) * s * (1.0 - s)).astype(DTYPE))

    return _finish(out, "sigmoid", (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(_f64(x.data))
    out = Tensor(t.astype(DTYPE))

    def backward_fn(g):
        x.accumulate_grad((_f64(g) * (1.0 - t * t)).astype(DTYPE))

    return _finish(out, "tanh", (x,), backward_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValidationError(f"softmax axis {axis} invalid for shape {x.shape}")
    x64 = _f64(x.data)
    shifted = x64 - x64.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s.astype(DTYPE))

    def backward_fn(g):
        g64 = _f64(g)
        inner = (g64 * s).sum(axis=axis, keepdims=True)
        x.accumulate_grad((s * (g64 - inner)).astype(DTYPE))

    return _finish(out, "softmax", (x,), backward_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm gain {gain.shape} / bias {bias.shape} do not match last dim {d}"
        )
    x64 = _f64(x.data)
    mean = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mean) * inv_std
    out = Tensor((xhat * _f64(gain.data) + _f64(bias.data)).astype(DTYPE))

    def backward_fn(g):
        g64 = _f64(g)
        gh = g64 * _f64(gain.data)
        gx = inv_std * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        x.accumulate_grad(gx.astype(DTYPE))
        lead = tuple(range(g64.ndim - 1))
        gain.accumulate_grad((g64 * xhat).sum(axis=lead).astype(DTYPE))
        bias.accumulate_grad(g64.sum(axis=lead).astype(DTYPE))

    return _finish(out, "layer_norm", (x, gain, bias), backward_fn)


def cross_entropy(
    logits: Tensor,
    targets: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> Tensor:
    """Weighted mean of per-example negative log-likelihoods.

    ``weights`` defaults to all ones; zero weights drop positions (used for
    padding in language-model training).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [batch, classes], got {logits.shape}")
    n, c = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} does not match batch {n}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ValidationError(f"target outside [0, {c}): {targets.min()}..{targets.max()}")
    if weights is None:
        w = np.ones(n, dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ShapeError(f"weights shape {w.shape} does not match batch {n}")
    total_w = w.sum()
    if total_w <= 0:
        raise ValidationError("cross_entropy needs at least one positive weight")

    x64 = _f64(logits.data)
    shifted = x64 - x64.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    nll = -log_probs[np.arange(n), targets]
    out = Tensor(np.float64((w * nll).sum() / total_w))

    def backward_fn(g):
        p = np.exp(log_probs)
        p[np.arange(n), targets] -= 1.0
        gx = p * (w / total_w)[:, None] * np.float64(np.ravel(g)[0])
        logits.accumulate_grad(gx.astype(DTYPE))

    return _finish(out, "cross_entropy", (logits,), backward_fn)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"dropout probability must be in [0,1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValidationError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p).astype(DTYPE)
    inv = np.float32(1.0 / (1.0 - p))
    out = Tensor(x.data * keep * inv)

    def backward_fn(g):
        x.accumulate_grad((g * keep * inv).astype(DTYPE))

    return _finish(out, "dropout", (x,), backward_fn)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (shape [V, d]) for an integer id array."""
    ids = np.asarray(ids, dtype=np.int64)
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise ValidationError(f"embedding id outside [0, {v})")
    out = Tensor(table.data[ids])

    def backward_fn(g):
        gt = np.zeros(table.shape, dtype=np.float64)
        np.add.at(gt, ids.reshape(-1), _f64(g).reshape(-1, table.shape[1]))
        table.accumulate_grad(gt.astype(DTYPE))

    return _finish(out, "embedding", (table,), backward_fn)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ValidationError("concat needs at least one tensor")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]

    def backward_fn(g):
        offsets = np.cumsum([0] + sizes)
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            part.accumulate_grad(g[tuple(idx)].astype(DTYPE))

    return _finish(out, "concat", tuple(parts), backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def backward_fn(g):
        x.accumulate_grad(g.reshape(x.shape).astype(DTYPE))

    return _finish(out, "reshape", (x,), backward_fn)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    inv = tuple(np.argsort(axes))

    def backward_fn(g):
        x.accumulate_grad(np.ascontiguousarray(g.transpose(inv)).astype(DTYPE))

    return _finish(out, "transpose", (x,), backward_fn)


def timestep(x: Tensor, t: int) -> Tensor:
    """Select ``x[:, t]`` from a [B, T, d] tensor."""
    if x.ndim != 3:
        raise ShapeError(f"timestep expects [B, T, d], got {x.shape}")
    if not 0 <= t < x.shape[1]:
        raise ValidationError(f"timestep {t} outside sequence length {x.shape[1]}")
    out = Tensor(x.data[:, t])

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=DTYPE)
        gx[:, t] = g
        x.accumulate_grad(gx)

    return _finish(out, "timestep", (x,), backward_fn)


def reduce_sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = Tensor(_f64(x.data).sum(axis=axis, keepdims=keepdims).astype(DTYPE))

    def backward_fn(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(g, x.shape).astype(DTYPE))

    return _finish(out, "reduce_sum", (x,), backward_fn)


def reduce_mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    out = Tensor(_f64(x.data).mean(axis=axis, keepdims=keepdims).astype(DTYPE))

    def backward_fn(g):
        g = np.asarray(g) / np.float32(count)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(g, x.shape).astype(DTYPE))

    return _finish(out, "reduce_mean", (x,), backward_fn)
