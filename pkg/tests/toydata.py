"""Synthetic five-class corpora and tiny fitted components for tests.

Each class has its own vocabulary, so the data is separable by
construction; a shared-noise pool can be mixed in to make tasks less
trivial where a test wants that.
"""

import numpy as np

from cmsenti.corpus import LabeledExample, LabelSchema
from cmsenti.embed import (
    ContextualConfig,
    SkipgramConfig,
    fit_tfidf,
    train_contextual,
    train_skipgram,
)
from cmsenti.features import Components
from cmsenti.model import ModelConfig
from cmsenti.subword import encode, train_bpe, train_unigram

SCHEMA = LabelSchema.for_language("tamil")

CLASS_WORDS = {
    "positive": ["semma", "vera", "level", "super"],
    "negative": ["mokka", "waste", "bore", "flop"],
    "mixed_feelings": ["okok", "paravala", "soso", "medium"],
    "not_tamil": ["hindi", "telugu", "english", "dubbed"],
    "unknown_state": ["enna", "idhu", "yaru", "eppo"],
}
SHARED_WORDS = ["padam", "movie", "da", "scene", "song"]


def synthetic_corpus(n_per_class, seed, shared_fraction=0.3, min_len=3, max_len=6):
    rng = np.random.default_rng(seed)
    out = []
    for label in SCHEMA.labels:
        own = CLASS_WORDS[label]
        for _ in range(n_per_class):
            n = int(rng.integers(min_len, max_len + 1))
            words = []
            for _ in range(n):
                if rng.random() < shared_fraction:
                    words.append(SHARED_WORDS[rng.integers(0, len(SHARED_WORDS))])
                else:
                    words.append(own[rng.integers(0, len(own))])
            if not set(words) & set(own):
                words[0] = own[rng.integers(0, len(own))]
            out.append(LabeledExample(" ".join(words), label))
    perm = np.random.default_rng(seed + 1).permutation(len(out))
    return [out[i] for i in perm]


def fit_components(
    texts,
    hid_dim=16,
    tfidf_k=12,
    ctx_hidden=8,
    vocab_size=70,
    use_tfidf=True,
    use_contextual=True,
    seed=3,
    kind="bpe",
):
    if kind == "bpe":
        vocab = train_bpe(texts, vocab_size=vocab_size)
    else:
        vocab = train_unigram(texts, vocab_size=vocab_size)
    encoded = [encode(vocab, t) for t in texts]
    sentences = [[vocab.pieces[i] for i in seq.ids] for seq in encoded]
    skipgram = train_skipgram(
        sentences,
        SkipgramConfig(dim=hid_dim, buckets=256, epochs=3, window=3, negatives=3, seed=seed),
    )
    tfidf = fit_tfidf([t.split() for t in texts], tfidf_k) if use_tfidf else None
    contextual = None
    if use_contextual:
        contextual = train_contextual(
            [seq.ids for seq in encoded],
            len(vocab),
            ContextualConfig(
                embed_dim=8, hidden_dim=ctx_hidden, epochs=2, lr=0.01, batch_size=8, seed=seed
            ),
        )
    return Components(vocab=vocab, skipgram=skipgram, tfidf=tfidf, contextual=contextual)


def toy_model_config(components, hid_dim=16, **over):
    base = dict(
        vocab_size=len(components.vocab),
        hid_dim=hid_dim,
        n_heads=2,
        n_layers=1,
        pf_dim=32,
        dropout=0.1,
        max_len=24,
        n_classes=5,
        tfidf_dim=components.tfidf.k if components.tfidf else 0,
        ctx_dim=components.contextual.dim if components.contextual else 0,
        gru_hidden=hid_dim,
    )
    base.update(over)
    return ModelConfig(**base).validate()
