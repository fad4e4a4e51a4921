"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import DTYPE, Tensor


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the step counter."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float, **kwargs) -> "AdamState":
        if lr < 0:
            raise ValidationError(f"learning rate must be >= 0, got {lr}")
        state = cls(lr=lr, **kwargs)
        state.m = [np.zeros(p.shape, dtype=DTYPE) for p in params]
        state.v = [np.zeros(p.shape, dtype=DTYPE) for p in params]
        return state


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One Adam update in place; gradients are zeroed afterwards.

    Parameters without a populated gradient are treated as having a zero
    gradient (their moments still decay).
    """
    if len(params) != len(state.m):
        raise ShapeError(
            f"optimizer state tracks {len(state.m)} parameters, got {len(params)}"
        )
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for i, p in enumerate(params):
        if state.m[i].shape != p.shape:
            raise ShapeError(
                f"param {i} shape {p.shape} does not match state {state.m[i].shape}"
            )
        g = p.grad if p.grad is not None else np.zeros(p.shape, dtype=DTYPE)
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        g64 = g.astype(np.float64)
        m64 = state.beta1 * state.m[i].astype(np.float64) + (1.0 - state.beta1) * g64
        v64 = state.beta2 * state.v[i].astype(np.float64) + (1.0 - state.beta2) * g64 * g64
        state.m[i] = m64.astype(DTYPE)
        state.v[i] = v64.astype(DTYPE)
        update = state.lr * (m64 / bc1) / (np.sqrt(v64 / bc2) + state.eps)
        p.data -= update.astype(DTYPE)
        p.grad = None
