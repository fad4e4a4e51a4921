"""The classification network: embedded subword sequence -> transformer
encoder -> GRU last hidden state -> concatenation with contextual and TF-IDF
sentence vectors -> feed-forward -> 5 logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ShapeError, ValidationError
from .numeric import (
    Tensor,
    add,
    concat,
    constant,
    dropout,
    embedding,
    layer_norm,
    linear,
    matmul,
    mul,
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

MASK_BIAS = -1e9
INIT_RANGE = 0.08


@dataclass
class ModelConfig:
    vocab_size: int
    hid_dim: int = 300
    n_heads: int = 6
    n_layers: int = 1
    pf_dim: int = 2048
    dropout: float = 0.1
    max_len: int = 128
    n_classes: int = 5
    tfidf_dim: int = 5000
    ctx_dim: int = 1024
    gru_hidden: int = 300
    positional_mode: str = "add"

    def validate(self) -> "ModelConfig":
        if self.hid_dim <= 0 or self.pf_dim <= 0 or self.gru_hidden <= 0:
            raise ValidationError("hid_dim, pf_dim and gru_hidden must be positive")
        if self.vocab_size <= 0 or self.max_len <= 0 or self.n_classes <= 0:
            raise ValidationError("vocab_size, max_len and n_classes must be positive")
        if self.n_layers < 0:
            raise ValidationError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.hid_dim % self.n_heads != 0:
            raise ValidationError(
                f"hid_dim {self.hid_dim} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0,1), got {self.dropout}")
        if self.positional_mode not in ("add", "concat"):
            raise ValidationError(f"positional_mode must be add|concat, got {self.positional_mode}")
        if self.tfidf_dim < 0 or self.ctx_dim < 0:
            raise ValidationError("tfidf_dim and ctx_dim must be >= 0")
        return self

    @property
    def fusion_dim(self) -> int:
        return self.gru_hidden + self.ctx_dim + self.tfidf_dim

    def to_dict(self) -> dict:
        return asdict(self)


class ModelParams:
    """Named trainable tensors, in a stable order."""

    def __init__(self, tensors: Dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def copy(self) -> "ModelParams":
        out = {}
        for name, t in self._tensors.items():
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            out[name] = c
        return ModelParams(out)


def init_params(
    config: ModelConfig,
    rng: np.random.Generator,
    token_init: Optional[np.ndarray] = None,
) -> ModelParams:
    """Uniform(-0.08, 0.08) init; layer-norm gains 1, biases 0.

    ``token_init`` (shape [vocab_size, hid_dim]) seeds the token embedding
    table, typically from a trained skip-gram table; it is fine-tuned.
    """
    config.validate()
    h, pf, g = config.hid_dim, config.pf_dim, config.gru_hidden

    def u(*shape):
        return Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    t: Dict[str, Tensor] = {}
    t["tok_emb"] = u(config.vocab_size, h)
    if token_init is not None:
        if token_init.shape != (config.vocab_size, h):
            raise ShapeError(
                f"token_init shape {token_init.shape} does not match "
                f"({config.vocab_size}, {h})"
            )
        t["tok_emb"] = Tensor(token_init.astype(np.float32), requires_grad=True)
    t["pos_emb"] = u(config.max_len, h)
    if config.positional_mode == "concat":
        t["pos_proj_w"] = u(2 * h, h)
        t["pos_proj_b"] = zeros(h)
    for i in range(config.n_layers):
        pre = f"enc{i}."
        for name in ("wq", "wk", "wv", "wo"):
            t[pre + name] = u(h, h)
        for name in ("bq", "bk", "bv", "bo"):
            t[pre + name] = zeros(h)
        t[pre + "ln1_g"] = ones(h)
        t[pre + "ln1_b"] = zeros(h)
        t[pre + "ffn_w1"] = u(h, pf)
        t[pre + "ffn_b1"] = zeros(pf)
        t[pre + "ffn_w2"] = u(pf, h)
        t[pre + "ffn_b2"] = zeros(h)
        t[pre + "ln2_g"] = ones(h)
        t[pre + "ln2_b"] = zeros(h)
    for gate in ("z", "r", "h"):
        t[f"gru.w{gate}"] = u(h, g)
        t[f"gru.u{gate}"] = u(g, g)
        t[f"gru.b{gate}"] = zeros(g)
    t["fuse.w"] = u(config.fusion_dim, config.n_classes)
    t["fuse.b"] = zeros(config.n_classes)
    return ModelParams(t)


@dataclass
class PaddedBatch:
    """One batch of encoded examples; mask is 1.0 at real tokens."""

    ids: np.ndarray  # [B, T] int64
    mask: np.ndarray  # [B, T] float32
    tfidf: np.ndarray  # [B, K] float32
    ctx: np.ndarray  # [B, C] float32
    labels: Optional[np.ndarray] = None  # [B] int64

    def __post_init__(self):
        if self.ids.shape != self.mask.shape:
            raise ShapeError(f"ids {self.ids.shape} vs mask {self.mask.shape}")
        if not np.all(self.mask.sum(axis=1) >= 1):
            raise ValidationError("every batch row needs at least one real token")

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def make_batch(
    id_lists: Sequence[Sequence[int]],
    tfidf: np.ndarray,
    ctx: np.ndarray,
    labels: Optional[np.ndarray] = None,
    pad_id: int = 0,
) -> PaddedBatch:
    """Pad variable-length id lists to the longest row of the batch."""
    if not id_lists:
        raise ValidationError("empty batch")
    b = len(id_lists)
    t = max(len(ids) for ids in id_lists)
    if t == 0:
        raise ValidationError("every batch row needs at least one token")
    ids = np.full((b, t), pad_id, dtype=np.int64)
    mask = np.zeros((b, t), dtype=np.float32)
    for i, row in enumerate(id_lists):
        ids[i, : len(row)] = list(row)
        mask[i, : len(row)] = 1.0
    return PaddedBatch(
        ids=ids,
        mask=mask,
        tfidf=np.asarray(tfidf, dtype=np.float32),
        ctx=np.asarray(ctx, dtype=np.float32),
        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """softmax(Q Kᵀ / sqrt(dk) + mask bias) V.

    ``mask`` holds 1 for attendable keys and 0 for masked ones, broadcastable
    to [..., Tq, Tk]; masked scores get a -1e9 bias before the softmax.
    """
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ShapeError("attention operands need at least 2 dims")
    dk = q.shape[-1]
    if dk == 0:
        raise ValidationError("dk must be positive")
    if k.shape[-1] != dk:
        raise ShapeError(f"q {q.shape} and k {k.shape} disagree on dk")
    if v.shape[-2] != k.shape[-2]:
        raise ShapeError(f"k {k.shape} and v {v.shape} disagree on key count")
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = scale(matmul(q, transpose(k, axes)), 1.0 / np.sqrt(dk))
    if mask is not None:
        bias = (1.0 - np.asarray(mask, dtype=np.float32)) * MASK_BIAS
        scores = add(scores, constant(bias))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def multi_head_attention(
    x: Tensor,
    mask: Optional[np.ndarray],
    params: Mapping[str, Tensor] | ModelParams,
    config: ModelConfig,
    layer: int = 0,
    return_weights: bool = False,
):
    """Project to Q/K/V, attend per head, concatenate, project out.

    ``mask`` is the [B, T] pad mask; keys at padded positions receive zero
    attention in every head.
    """
    b, t, h = x.shape
    if h % config.n_heads != 0:
        raise ValidationError(f"hid_dim {h} not divisible by n_heads {config.n_heads}")
    dk = h // config.n_heads
    pre = f"enc{layer}."
    q = linear(x, params[pre + "wq"], params[pre + "bq"])
    k = linear(x, params[pre + "wk"], params[pre + "bk"])
    v = linear(x, params[pre + "wv"], params[pre + "bv"])

    def split_heads(z):
        z = reshape(z, (b, t, config.n_heads, dk))
        return transpose(z, (0, 2, 1, 3))  # [B, nh, T, dk]

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    key_mask = None
    if mask is not None:
        key_mask = np.asarray(mask, dtype=np.float32)[:, None, None, :]  # [B,1,1,T]

    dk_scale = 1.0 / np.sqrt(dk)
    axes = (0, 1, 3, 2)
    scores = scale(matmul(qh, transpose(kh, axes)), dk_scale)
    if key_mask is not None:
        scores = add(scores, constant((1.0 - key_mask) * MASK_BIAS))
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, vh)  # [B, nh, T, dk]
    merged = reshape(transpose(ctx, (0, 2, 1, 3)), (b, t, h))
    out = linear(merged, params[pre + "wo"], params[pre + "bo"])
    if return_weights:
        return out, weights.data.copy()
    return out


def position_wise_ffn(
    x: Tensor,
    params: Mapping[str, Tensor] | ModelParams,
    config: ModelConfig,
    layer: int = 0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Per-position widening to pf_dim with ReLU and dropout, then back."""
    pre = f"enc{layer}."
    z = relu(linear(x, params[pre + "ffn_w1"], params[pre + "ffn_b1"]))
    z = dropout(z, config.dropout, training, rng)
    return linear(z, params[pre + "ffn_w2"], params[pre + "ffn_b2"])


def encode_sequence(
    batch: PaddedBatch,
    params: Mapping[str, Tensor] | ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Token + positional embedding, then the stack of encoder layers."""
    b, t = batch.ids.shape
    if t > config.max_len:
        raise ValidationError(f"sequence length {t} exceeds max_len {config.max_len}")
    tok = embedding(params["tok_emb"], batch.ids)  # [B, T, H]
    tok = scale(tok, float(np.sqrt(config.hid_dim)))
    pos = embedding(params["pos_emb"], np.arange(t))  # [T, H]
    if config.positional_mode == "add":
        x = add(tok, pos)
    else:
        tiled = add(pos, constant(np.zeros((b, t, config.hid_dim), dtype=np.float32)))
        x = linear(concat([tok, tiled], axis=-1), params["pos_proj_w"], params["pos_proj_b"])
    x = dropout(x, config.dropout, training, rng)
    for layer in range(config.n_layers):
        pre = f"enc{layer}."
        attended = multi_head_attention(x, batch.mask, params, config, layer)
        attended = dropout(attended, config.dropout, training, rng)
        x = layer_norm(add(x, attended), params[pre + "ln1_g"], params[pre + "ln1_b"])
        ff = position_wise_ffn(x, params, config, layer, training, rng)
        ff = dropout(ff, config.dropout, training, rng)
        x = layer_norm(add(x, ff), params[pre + "ln2_g"], params[pre + "ln2_b"])
    return x


def gru_cell(
    x: Tensor,
    h: Tensor,
    wz: Tensor,
    uz: Tensor,
    bz: Tensor,
    wr: Tensor,
    ur: Tensor,
    br: Tensor,
    wh: Tensor,
    uh: Tensor,
    bh: Tensor,
) -> Tensor:
    """One GRU step; the update gate carries the previous state:
    h <- (1 - z) * h_tilde + z * h.
    """
    z = sigmoid(add(linear(x, wz, bz), matmul(h, uz)))
    r = sigmoid(add(linear(x, wr, br), matmul(h, ur)))
    h_tilde = tanh(add(linear(x, wh, bh), matmul(mul(r, h), uh)))
    one = constant(np.ones(z.shape, dtype=np.float32))
    return add(mul(sub(one, z), h_tilde), mul(z, h))


def gru_forward(
    seq: Tensor,
    mask: Optional[np.ndarray],
    params: Mapping[str, Tensor] | ModelParams,
    h0: Optional[Tensor] = None,
) -> Tensor:
    """Run the GRU over [B, T, H]; padded steps leave the state unchanged.

    Returns the hidden state after the last real token of each row.
    """
    b, t, _ = seq.shape
    g = params["gru.uz"].shape[0]
    h = h0 if h0 is not None else constant(np.zeros((b, g), dtype=np.float32))
    gates = tuple(
        params[name]
        for name in (
            "gru.wz", "gru.uz", "gru.bz",
            "gru.wr", "gru.ur", "gru.br",
            "gru.wh", "gru.uh", "gru.bh",
        )
    )
    for step in range(t):
        x_t = timestep(seq, step)
        h_new = gru_cell(x_t, h, *gates)
        if mask is None:
            h = h_new
        else:
            m = np.asarray(mask, dtype=np.float32)[:, step : step + 1]  # [B,1]
            keep = constant(m)
            drop = constant(1.0 - m)
            h = add(mul(keep, h_new), mul(drop, h))
    return h


def fuse_and_classify(
    gru_h: Tensor,
    ctx: Tensor,
    tfidf: Tensor,
    params: Mapping[str, Tensor] | ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Concatenate the meta-embedding blocks, dropout, project to logits."""
    if gru_h.shape[-1] != config.gru_hidden:
        raise ShapeError(f"gru block {gru_h.shape} vs gru_hidden {config.gru_hidden}")
    parts = [gru_h]
    if config.ctx_dim:
        if ctx.shape[-1] != config.ctx_dim:
            raise ShapeError(f"contextual block {ctx.shape} vs ctx_dim {config.ctx_dim}")
        parts.append(ctx)
    if config.tfidf_dim:
        if tfidf.shape[-1] != config.tfidf_dim:
            raise ShapeError(f"tfidf block {tfidf.shape} vs tfidf_dim {config.tfidf_dim}")
        parts.append(tfidf)
    feat = parts[0] if len(parts) == 1 else concat(parts, axis=-1)
    feat = dropout(feat, config.dropout, training, rng)
    return linear(feat, params["fuse.w"], params["fuse.b"])


def model_forward(
    batch: PaddedBatch,
    params: Mapping[str, Tensor] | ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Full network; deterministic when ``training`` is false."""
    if training and config.dropout > 0 and rng is None:
        raise ValidationError("training forward pass needs an rng for dropout")
    encoded = encode_sequence(batch, params, config, training, rng)
    gru_h = gru_forward(encoded, batch.mask, params)
    ctx = constant(batch.ctx)
    tfidf = constant(batch.tfidf)
    return fuse_and_classify(gru_h, ctx, tfidf, params, config, training, rng)
