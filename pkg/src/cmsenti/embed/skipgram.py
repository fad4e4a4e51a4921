"""Skip-gram with negative sampling over subword pieces, fastText-style.

A piece's representation is its own vector plus the hashed bucket vectors
of its character n-grams, so arbitrary unseen pieces still get a vector.
Updates use the closed-form negative-sampling gradients; the learning rate
decays linearly to zero over the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import ValidationError
from .binio import read_binary, write_binary

MAGIC = b"CMSG"
FORMAT_VERSION = 1

NEG_TABLE_POWER = 0.75


def fnv1a_64(s: str) -> int:
    """64-bit FNV-1a over UTF-8 bytes; stable across runs and platforms."""
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def piece_ngrams(piece: str, min_n: int = 3, max_n: int = 6) -> List[str]:
    """Character n-grams of the boundary-padded piece ``<piece>``."""
    padded = f"<{piece}>"
    grams = []
    for n in range(min_n, max_n + 1):
        if n > len(padded):
            break
        grams.extend(padded[i : i + n] for i in range(len(padded) - n + 1))
    return grams


@dataclass
class SkipgramConfig:
    dim: int = 300
    lr: float = 0.05
    window: int = 5
    epochs: int = 20
    negatives: int = 5
    buckets: int = 200_000
    min_n: int = 3
    max_n: int = 6
    seed: int = 1


@dataclass
class SkipgramTable:
    pieces: List[str]
    vectors_in: np.ndarray  # [V, d]
    vectors_out: np.ndarray  # [V, d]
    ngram_buckets: np.ndarray  # [B, d]
    config: SkipgramConfig
    epoch_losses: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}

    @property
    def dim(self) -> int:
        return self.config.dim


def _bucket_ids(piece: str, config: SkipgramConfig) -> List[int]:
    return [
        fnv1a_64(g) % config.buckets
        for g in piece_ngrams(piece, config.min_n, config.max_n)
    ]


def word_vector(table: SkipgramTable, piece: str) -> np.ndarray:
    """Piece vector plus its n-gram bucket sum; total over arbitrary strings."""
    vec = np.zeros(table.dim, dtype=np.float32)
    idx = table.piece_to_id.get(piece)
    if idx is not None:
        vec += table.vectors_in[idx]
    for b in _bucket_ids(piece, table.config):
        vec += table.ngram_buckets[b]
    return vec


def train_skipgram(
    corpus: Sequence[Sequence[str]],
    config: Optional[SkipgramConfig] = None,
) -> SkipgramTable:
    """Train piece and n-gram vectors on tokenized sentences.

    Negatives are drawn from the unigram distribution raised to 0.75.
    Deterministic for a fixed config seed.
    """
    config = config or SkipgramConfig()
    sentences = [list(s) for s in corpus if len(s) > 0]
    if not sentences:
        raise ValidationError("skip-gram corpus is empty")
    if config.window < 1:
        raise ValidationError(f"window must be >= 1, got {config.window}")

    counts: Dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
    pieces = sorted(counts)
    piece_to_id = {p: i for i, p in enumerate(pieces)}
    v = len(pieces)
    d = config.dim

    rng = np.random.default_rng(config.seed)
    bound = 0.5 / d
    vectors_in = rng.uniform(-bound, bound, size=(v, d)).astype(np.float32)
    ngram_buckets = rng.uniform(-bound, bound, size=(config.buckets, d)).astype(np.float32)
    vectors_out = np.zeros((v, d), dtype=np.float32)

    freq = np.array([counts[p] for p in pieces], dtype=np.float64)
    neg_cdf = np.cumsum(freq**NEG_TABLE_POWER)
    neg_cdf /= neg_cdf[-1]

    id_sents = [[piece_to_id[t] for t in sent] for sent in sentences]
    gram_ids = [_bucket_ids(p, config) for p in pieces]

    pairs_per_epoch = 0
    for sent in id_sents:
        n = len(sent)
        for i in range(n):
            lo, hi = max(0, i - config.window), min(n, i + config.window + 1)
            pairs_per_epoch += (hi - lo) - 1
    total_pairs = max(1, pairs_per_epoch * config.epochs)

    epoch_losses: List[float] = []
    processed = 0
    for _ in range(config.epochs):
        loss_sum = 0.0
        n_pairs = 0
        for sent in id_sents:
            n = len(sent)
            for i in range(n):
                center = sent[i]
                grams = gram_ids[center]
                h = vectors_in[center].astype(np.float64)
                for b in grams:
                    h += ngram_buckets[b]
                lo, hi = max(0, i - config.window), min(n, i + config.window + 1)
                for j in range(lo, hi):
                    if j == i:
                        continue
                    lr = config.lr * max(0.0, 1.0 - processed / total_pairs)
                    processed += 1
                    target = sent[j]
                    negs = np.searchsorted(neg_cdf, rng.random(config.negatives))
                    gh = np.zeros(d, dtype=np.float64)
                    pair_loss = 0.0
                    for o, label in [(target, 1.0)] + [
                        (int(o), 0.0) for o in negs if int(o) != target
                    ]:
                        u = vectors_out[o].astype(np.float64)
                        score = h @ u
                        p = 1.0 / (1.0 + np.exp(-score)) if score >= 0 else np.exp(score) / (1.0 + np.exp(score))
                        pair_loss += -np.log(max(p if label else 1.0 - p, 1e-12))
                        grad = (p - label) * lr
                        gh += grad * u
                        vectors_out[o] = (u - grad * h).astype(np.float32)
                    vectors_in[center] = (vectors_in[center].astype(np.float64) - gh).astype(
                        np.float32
                    )
                    for b in grams:
                        ngram_buckets[b] = (ngram_buckets[b].astype(np.float64) - gh).astype(
                            np.float32
                        )
                    loss_sum += pair_loss
                    n_pairs += 1
        epoch_losses.append(loss_sum / max(1, n_pairs))

    return SkipgramTable(
        pieces=pieces,
        vectors_in=vectors_in,
        vectors_out=vectors_out,
        ngram_buckets=ngram_buckets,
        config=config,
        epoch_losses=epoch_losses,
    )


def save_skipgram(table: SkipgramTable, path: str | Path) -> None:
    cfg = table.config
    header = {
        "pieces": table.pieces,
        "config": {
            "dim": cfg.dim,
            "lr": cfg.lr,
            "window": cfg.window,
            "epochs": cfg.epochs,
            "negatives": cfg.negatives,
            "buckets": cfg.buckets,
            "min_n": cfg.min_n,
            "max_n": cfg.max_n,
            "seed": cfg.seed,
        },
        "epoch_losses": table.epoch_losses,
    }
    write_binary(
        path,
        MAGIC,
        FORMAT_VERSION,
        header,
        [
            ("vectors_in", table.vectors_in),
            ("vectors_out", table.vectors_out),
            ("ngram_buckets", table.ngram_buckets),
        ],
    )


def load_skipgram(path: str | Path) -> SkipgramTable:
    header, arrays = read_binary(path, MAGIC, FORMAT_VERSION)
    return SkipgramTable(
        pieces=header["pieces"],
        vectors_in=arrays["vectors_in"],
        vectors_out=arrays["vectors_out"],
        ngram_buckets=arrays["ngram_buckets"],
        config=SkipgramConfig(**header["config"]),
        epoch_losses=list(header.get("epoch_losses", [])),
    )
