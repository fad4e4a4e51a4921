"""Dense float32 tensors with a define-by-run gradient tape.

Storage is 32-bit; reductions and matrix products accumulate in 64-bit so
that finite-difference checks stay stable. One tape is active at a time;
forward ops record their backward closures on it and ``backward`` replays
them in reverse, then clears the tape.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from typing import Callable, List, Optional

import numpy as np

from ..errors import ValidationError

DTYPE = np.float32

_check_finite = os.environ.get("NUMERIC_CHECK_FINITE", "") == "1"


def set_finite_check(enabled: bool) -> None:
    """Toggle post-op NaN/Inf assertions (also via NUMERIC_CHECK_FINITE=1)."""
    global _check_finite
    _check_finite = bool(enabled)


def finite_check_enabled() -> bool:
    return _check_finite


def guard_finite(arr: np.ndarray, op_name: str) -> None:
    if _check_finite and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op_name} produced non-finite values")


class Tensor:
    """A float32 n-d array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = np.asarray(g, dtype=DTYPE)
        if g.shape != self.data.shape:
            raise ValidationError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of ops; inputs always precede their consumers."""

    def __init__(self):
        self.records: List[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self.records.append((out, backward_fn))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self):
        return len(self.records)


_TAPE_STACK: List[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def tape():
    """Context manager activating a fresh tape for one forward/backward pass."""
    t = Tape()
    _TAPE_STACK.append(t)
    try:
        yield t
    finally:
        _TAPE_STACK.pop()


def backward(loss: Tensor) -> None:
    """Populate grads of every requires_grad tensor reachable from ``loss``.

    Gradients accumulate additively across multiple uses of a tensor. The
    active tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise ValidationError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    t = active_tape()
    if t is None:
        raise ValidationError("backward called without an active tape")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(t.records):
        g = out.grad
        if g is None:
            continue
        fn(g)
    t.clear()
