"""Per-example feature assembly shared by training, evaluation and
prediction: subword ids, the TF-IDF vector and the contextual sentence
vector are precomputed as fixed inputs before any classifier work."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import subword
from .corpus import LabeledExample, LabelSchema
from .embed import contextual as ctx_mod
from .embed import tfidf as tfidf_mod
from .embed.skipgram import SkipgramTable
from .errors import ValidationError
from .checkpoint import component_hash
from .model import ModelConfig


@dataclass
class Components:
    """The fitted upstream artifacts one classifier run depends on."""

    vocab: subword.SubwordVocab
    skipgram: Optional[SkipgramTable] = None
    tfidf: Optional[tfidf_mod.TfIdfModel] = None
    contextual: Optional[ctx_mod.ContextualEncoder] = None


def vocab_bytes(vocab: subword.SubwordVocab) -> bytes:
    doc = {
        "version": subword.VOCAB_FORMAT_VERSION,
        "kind": vocab.kind,
        "marker": vocab.marker,
        "pieces": vocab.pieces,
    }
    if vocab.kind == "bpe":
        doc["merges"] = [list(m) for m in vocab.merges]
    else:
        doc["log_probs"] = [float(x) for x in vocab.log_probs]
    return json.dumps(doc, ensure_ascii=False, sort_keys=True).encode("utf-8")


def tfidf_bytes(model: tfidf_mod.TfIdfModel) -> bytes:
    doc = {"terms": model.terms, "idf": [float(x) for x in model.idf]}
    return json.dumps(doc, ensure_ascii=False, sort_keys=True).encode("utf-8")


def component_hashes(components: Components) -> Dict[str, str]:
    """Identity hashes of the inference-time components (canonical bytes)."""
    hashes = {"vocab": component_hash(vocab_bytes(components.vocab))}
    if components.tfidf is not None:
        hashes["tfidf"] = component_hash(tfidf_bytes(components.tfidf))
    if components.contextual is not None:
        hashes["contextual"] = component_hash(ctx_mod.contextual_bytes(components.contextual))
    return hashes


@dataclass
class FeatureSet:
    ids: List[Tuple[int, ...]]
    tfidf: np.ndarray  # [N, K] (K may be 0)
    ctx: np.ndarray  # [N, C] (C may be 0)
    labels: Optional[np.ndarray]  # [N] or None


def featurize(
    examples: Sequence[LabeledExample],
    components: Components,
    config: ModelConfig,
    schema: Optional[LabelSchema] = None,
) -> FeatureSet:
    """Encode texts and precompute the sentence-level feature blocks.

    Token sequences are truncated to ``config.max_len``. When ``schema`` is
    given, labels are mapped to class indices; otherwise labels are omitted
    (prediction path).
    """
    if not examples:
        raise ValidationError("no examples to featurize")
    id_lists: List[Tuple[int, ...]] = []
    for ex in examples:
        seq = subword.encode(components.vocab, ex.text)
        if seq.length == 0:
            raise ValidationError(f"text produced no tokens: {ex.text!r}")
        id_lists.append(seq.ids[: config.max_len])

    n = len(examples)
    if config.tfidf_dim:
        if components.tfidf is None:
            raise ValidationError("config enables the tfidf channel but no model was given")
        if components.tfidf.k != config.tfidf_dim:
            raise ValidationError(
                f"tfidf model has {components.tfidf.k} terms, config says {config.tfidf_dim}"
            )
        tfidf = np.stack(
            [tfidf_mod.sentence_tfidf(components.tfidf, ex.text.split()) for ex in examples]
        )
    else:
        tfidf = np.zeros((n, 0), dtype=np.float32)

    if config.ctx_dim:
        if components.contextual is None:
            raise ValidationError("config enables the contextual channel but no encoder was given")
        if components.contextual.dim != config.ctx_dim:
            raise ValidationError(
                f"contextual encoder emits {components.contextual.dim} dims, "
                f"config says {config.ctx_dim}"
            )
        ctx = ctx_mod.sentence_vectors(components.contextual, id_lists)
    else:
        ctx = np.zeros((n, 0), dtype=np.float32)

    labels = None
    if schema is not None:
        labels = np.array([schema.index(ex.label) for ex in examples], dtype=np.int64)
    return FeatureSet(ids=id_lists, tfidf=tfidf, ctx=ctx, labels=labels)
