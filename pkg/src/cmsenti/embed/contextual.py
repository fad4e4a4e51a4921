"""Locally trained bidirectional recurrent sentence encoder.

Two next-piece GRU language models (one per direction) share an embedding
table; a sentence vector is the mean over real positions of the
concatenated forward and backward hidden states. With the default hidden
size of 512 per direction the output is 1024-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from ..model import gru_cell
from ..numeric import (
    AdamState,
    Tensor,
    adam_step,
    add,
    backward,
    concat,
    constant,
    cross_entropy,
    embedding,
    linear,
    mul,
    scale,
    tape,
    timestep,
)
from .binio import binary_bytes, read_binary, write_binary

MAGIC = b"CMCX"
FORMAT_VERSION = 1

PAD_ID, BOS_ID, EOS_ID = 0, 2, 3


@dataclass
class ContextualConfig:
    embed_dim: int = 128
    hidden_dim: int = 512  # per direction; sentence vectors are twice this
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 32
    max_len: int = 64
    seed: int = 7
    holdout_every: int = 20


@dataclass
class ContextualEncoder:
    config: ContextualConfig
    vocab_size: int
    params: Dict[str, Tensor]
    epoch_perplexities: List[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return 2 * self.config.hidden_dim


def _init_params(vocab_size: int, config: ContextualConfig, rng: np.random.Generator) -> Dict[str, Tensor]:
    e, h = config.embed_dim, config.hidden_dim

    def u(*shape):
        return Tensor(rng.uniform(-0.08, 0.08, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    params: Dict[str, Tensor] = {"emb": u(vocab_size, e)}
    for direction in ("fwd", "bwd"):
        for gate in ("z", "r", "h"):
            params[f"{direction}.w{gate}"] = u(e, h)
            params[f"{direction}.u{gate}"] = u(h, h)
            params[f"{direction}.b{gate}"] = zeros(h)
        params[f"{direction}.head_w"] = u(h, vocab_size)
        params[f"{direction}.head_b"] = zeros(vocab_size)
    return params


def _gates(params: Dict[str, Tensor], direction: str) -> Tuple[Tensor, ...]:
    return tuple(
        params[f"{direction}.{name}"]
        for name in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")
    )


def _lm_batch(
    sequences: Sequence[Sequence[int]],
    reverse: bool,
    max_len: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build [inputs, targets, weights] arrays for next-piece prediction."""
    rows = []
    for ids in sequences:
        body = list(ids)[:max_len]
        if reverse:
            body = body[::-1]
        rows.append([BOS_ID] + body + [EOS_ID])
    b = len(rows)
    t = max(len(r) for r in rows) - 1
    inputs = np.full((b, t), PAD_ID, dtype=np.int64)
    targets = np.full((b, t), PAD_ID, dtype=np.int64)
    weights = np.zeros((b, t), dtype=np.float64)
    for i, row in enumerate(rows):
        n = len(row) - 1
        inputs[i, :n] = row[:-1]
        targets[i, :n] = row[1:]
        weights[i, :n] = 1.0
    return inputs, targets, weights


def _lm_loss(
    params: Dict[str, Tensor],
    direction: str,
    inputs: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    config: ContextualConfig,
) -> Tensor:
    b, t = inputs.shape
    emb = embedding(params["emb"], inputs)  # [B, T, E]
    gates = _gates(params, direction)
    h = constant(np.zeros((b, config.hidden_dim), dtype=np.float32))
    step_logits = []
    for step in range(t):
        x_t = timestep(emb, step)
        h_new = gru_cell(x_t, h, *gates)
        m = weights[:, step : step + 1].astype(np.float32)
        h = add(mul(constant(m), h_new), mul(constant(1.0 - m), h))
        step_logits.append(linear(h, params[f"{direction}.head_w"], params[f"{direction}.head_b"]))
    logits = concat(step_logits, axis=0) if len(step_logits) > 1 else step_logits[0]
    flat_targets = targets.T.reshape(-1)
    flat_weights = weights.T.reshape(-1)
    return cross_entropy(logits, flat_targets, flat_weights)


def _perplexity(
    params: Dict[str, Tensor],
    sequences: Sequence[Sequence[int]],
    config: ContextualConfig,
) -> float:
    nll = 0.0
    count = 0.0
    for start in range(0, len(sequences), config.batch_size):
        chunk = sequences[start : start + config.batch_size]
        for direction, reverse in (("fwd", False), ("bwd", True)):
            inputs, targets, weights = _lm_batch(chunk, reverse, config.max_len)
            loss = _lm_loss(params, direction, inputs, targets, weights, config)
            w = weights.sum()
            nll += float(loss.data) * w
            count += w
    return float(np.exp(nll / max(count, 1.0)))


def train_contextual(
    corpus: Sequence[Sequence[int]],
    vocab_size: int,
    config: Optional[ContextualConfig] = None,
) -> ContextualEncoder:
    """Train both directional language models with Adam.

    A deterministic held-out slice tracks perplexity per epoch
    (``epoch_perplexities``).
    """
    config = config or ContextualConfig()
    sequences = [list(s) for s in corpus if len(s) > 0]
    if not sequences:
        raise ValidationError("contextual training corpus is empty")

    if len(sequences) >= 5:
        holdout = sequences[:: config.holdout_every] or sequences[:1]
        held_set = set(map(id, holdout))
        train_seqs = [s for s in sequences if id(s) not in held_set]
    else:
        holdout = sequences[:1]
        train_seqs = sequences

    rng = np.random.default_rng(config.seed)
    params = _init_params(vocab_size, config, rng)
    ordered = [params[k] for k in sorted(params)]
    state = AdamState.for_params(ordered, lr=config.lr)

    perplexities: List[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(train_seqs))
        for start in range(0, len(train_seqs), config.batch_size):
            chunk = [train_seqs[i] for i in order[start : start + config.batch_size]]
            with tape():
                fwd_in, fwd_tgt, fwd_w = _lm_batch(chunk, False, config.max_len)
                bwd_in, bwd_tgt, bwd_w = _lm_batch(chunk, True, config.max_len)
                loss = scale(
                    add(
                        _lm_loss(params, "fwd", fwd_in, fwd_tgt, fwd_w, config),
                        _lm_loss(params, "bwd", bwd_in, bwd_tgt, bwd_w, config),
                    ),
                    0.5,
                )
                if not np.isfinite(loss.data):
                    raise ValidationError("contextual LM loss became non-finite")
                backward(loss)
            adam_step(ordered, state)
        perplexities.append(_perplexity(params, holdout, config))

    return ContextualEncoder(
        config=config,
        vocab_size=vocab_size,
        params=params,
        epoch_perplexities=perplexities,
    )


def sentence_vectors(
    enc: ContextualEncoder,
    id_lists: Sequence[Sequence[int]],
    batch_size: int = 64,
) -> np.ndarray:
    """Mean over real positions of [forward hidden ; backward hidden].

    The mean ignores padding, so appending pad tokens cannot change the
    result.
    """
    if any(len(ids) == 0 for ids in id_lists):
        raise ValidationError("cannot embed an empty token sequence")
    out = np.zeros((len(id_lists), enc.dim), dtype=np.float32)
    h_dim = enc.config.hidden_dim
    for start in range(0, len(id_lists), batch_size):
        chunk = [list(ids) for ids in id_lists[start : start + batch_size]]
        b = len(chunk)
        t = max(len(ids) for ids in chunk)
        for direction, col in (("fwd", 0), ("bwd", 1)):
            ids = np.zeros((b, t), dtype=np.int64)
            mask = np.zeros((b, t), dtype=np.float32)
            for i, row in enumerate(chunk):
                body = row[::-1] if direction == "bwd" else row
                ids[i, : len(body)] = body
                mask[i, : len(body)] = 1.0
            emb = embedding(enc.params["emb"], ids)
            gates = _gates(enc.params, direction)
            h = constant(np.zeros((b, h_dim), dtype=np.float32))
            total = np.zeros((b, h_dim), dtype=np.float64)
            for step in range(t):
                x_t = timestep(emb, step)
                h_new = gru_cell(x_t, h, *gates)
                m = mask[:, step : step + 1]
                h = add(mul(constant(m), h_new), mul(constant(1.0 - m), h))
                total += h.data.astype(np.float64) * m
            lengths = mask.sum(axis=1, keepdims=True)
            block = (total / lengths).astype(np.float32)
            out[start : start + b, col * h_dim : (col + 1) * h_dim] = block
    return out


def sentence_vector(enc: ContextualEncoder, ids: Sequence[int]) -> np.ndarray:
    """Single-sentence convenience wrapper around :func:`sentence_vectors`."""
    return sentence_vectors(enc, [ids])[0]


def _payload(enc: ContextualEncoder) -> Tuple[dict, List[Tuple[str, np.ndarray]]]:
    cfg = enc.config
    header = {
        "vocab_size": enc.vocab_size,
        "config": {
            "embed_dim": cfg.embed_dim,
            "hidden_dim": cfg.hidden_dim,
            "epochs": cfg.epochs,
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "max_len": cfg.max_len,
            "seed": cfg.seed,
            "holdout_every": cfg.holdout_every,
        },
        "epoch_perplexities": enc.epoch_perplexities,
    }
    arrays = [(name, enc.params[name].data) for name in sorted(enc.params)]
    return header, arrays


def contextual_bytes(enc: ContextualEncoder) -> bytes:
    """Canonical serialized form, used for artifact files and hashing."""
    header, arrays = _payload(enc)
    return binary_bytes(MAGIC, FORMAT_VERSION, header, arrays)


def save_contextual(enc: ContextualEncoder, path: str | Path) -> None:
    header, arrays = _payload(enc)
    write_binary(path, MAGIC, FORMAT_VERSION, header, arrays)


def load_contextual(path: str | Path) -> ContextualEncoder:
    header, arrays = read_binary(path, MAGIC, FORMAT_VERSION)
    params = {name: Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    return ContextualEncoder(
        config=ContextualConfig(**header["config"]),
        vocab_size=header["vocab_size"],
        params=params,
        epoch_perplexities=list(header.get("epoch_perplexities", [])),
    )
