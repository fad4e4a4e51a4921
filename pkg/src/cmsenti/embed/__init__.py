"""The three meta-embedding inputs: skip-gram vectors, a contextual
sentence encoder, and TF-IDF sentence vectors."""

from .skipgram import (
    SkipgramConfig,
    SkipgramTable,
    fnv1a_64,
    load_skipgram,
    piece_ngrams,
    save_skipgram,
    train_skipgram,
    word_vector,
)
from .tfidf import TfIdfModel, fit_tfidf, load_tfidf, save_tfidf, sentence_tfidf
from .contextual import (
    ContextualConfig,
    ContextualEncoder,
    contextual_bytes,
    load_contextual,
    save_contextual,
    sentence_vector,
    sentence_vectors,
    train_contextual,
)

__all__ = [
    "SkipgramConfig",
    "SkipgramTable",
    "train_skipgram",
    "word_vector",
    "piece_ngrams",
    "fnv1a_64",
    "save_skipgram",
    "load_skipgram",
    "TfIdfModel",
    "fit_tfidf",
    "sentence_tfidf",
    "save_tfidf",
    "load_tfidf",
    "ContextualConfig",
    "ContextualEncoder",
    "train_contextual",
    "sentence_vector",
    "sentence_vectors",
    "contextual_bytes",
    "save_contextual",
    "load_contextual",
]
