"""Minimal dense-tensor engine: float32 storage, tape autodiff, Adam."""

from .tensor import (
    DTYPE,
    Tape,
    Tensor,
    active_tape,
    backward,
    finite_check_enabled,
    guard_finite,
    set_finite_check,
    tape,
)
from .ops import (
    add,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    layer_norm,
    linear,
    matmul,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    tanh,
    timestep,
    transpose,
)
from .optim import AdamState, adam_step

__all__ = [
    "DTYPE",
    "Tape",
    "Tensor",
    "active_tape",
    "backward",
    "tape",
    "set_finite_check",
    "finite_check_enabled",
    "guard_finite",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "linear",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "layer_norm",
    "cross_entropy",
    "dropout",
    "embedding",
    "concat",
    "reshape",
    "transpose",
    "timestep",
    "reduce_sum",
    "reduce_mean",
    "constant",
    "AdamState",
    "adam_step",
]
