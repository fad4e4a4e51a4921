"""TF-IDF sentence vectors over normalized whitespace tokens."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from ..errors import ValidationError

FORMAT_VERSION = 1


@dataclass
class TfIdfModel:
    terms: List[str]
    idf: np.ndarray  # [K]

    def __post_init__(self):
        self.term_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.terms)}
        self.idf = np.asarray(self.idf, dtype=np.float64)

    @property
    def k(self) -> int:
        return len(self.terms)


def fit_tfidf(corpus: Sequence[Sequence[str]], k: int) -> TfIdfModel:
    """Keep the top-``k`` terms by document frequency (ties lexicographic).

    idf(t) = ln((1 + N) / (1 + df(t))) + 1 with N the document count.
    """
    if not corpus:
        raise ValidationError("tf-idf corpus is empty")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    df: Dict[str, int] = {}
    for doc in corpus:
        for term in set(doc):
            df[term] = df.get(term, 0) + 1
    n_docs = len(corpus)
    ranked = sorted(df, key=lambda t: (-df[t], t))[:k]
    idf = np.array(
        [math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in ranked], dtype=np.float64
    )
    return TfIdfModel(terms=ranked, idf=idf)


def sentence_tfidf(model: TfIdfModel, tokens: Sequence[str]) -> np.ndarray:
    """Count-weighted idf vector, L2-normalized unless entirely zero."""
    vec = np.zeros(model.k, dtype=np.float64)
    for tok in tokens:
        idx = model.term_to_id.get(tok)
        if idx is not None:
            vec[idx] += model.idf[idx]
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec.astype(np.float32)


def save_tfidf(model: TfIdfModel, path: str | Path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "terms": model.terms,
        "idf": [float(x) for x in model.idf],
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


def load_tfidf(path: str | Path) -> TfIdfModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ValidationError(
            f"tf-idf format version {version} unsupported (reader supports {FORMAT_VERSION})"
        )
    return TfIdfModel(terms=doc["terms"], idf=np.array(doc["idf"], dtype=np.float64))
