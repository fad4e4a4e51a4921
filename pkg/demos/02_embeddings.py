"""The three meta-embedding inputs: skip-gram pieces, TF-IDF, and the
bidirectional contextual encoder.

Run with: python demos/02_embeddings.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from toycorpus import make_corpus

from cmsenti.embed import (
    ContextualConfig,
    SkipgramConfig,
    fit_tfidf,
    sentence_tfidf,
    sentence_vector,
    train_contextual,
    train_skipgram,
    word_vector,
)
from cmsenti.subword import encode, train_unigram

data = make_corpus(n_per_class=20, seed=5)
texts = [ex.text for ex in data]
vocab = train_unigram(texts, vocab_size=90)
encoded = [encode(vocab, t) for t in texts]

print("== Skip-gram with subword n-grams ==")
sentences = [[vocab.pieces[i] for i in seq.ids] for seq in encoded]
table = train_skipgram(
    sentences,
    SkipgramConfig(dim=24, buckets=2048, epochs=10, window=4, negatives=4, seed=1),
)
print(f"  {len(table.pieces)} pieces, d={table.dim}")
print(f"  loss: epoch 1 {table.epoch_losses[0]:.4f} -> epoch {len(table.epoch_losses)} "
      f"{table.epoch_losses[-1]:.4f}")


def cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))


probe = "▁semma"
if probe in table.piece_to_id:
    sims = sorted(
        ((cos(word_vector(table, probe), word_vector(table, p)), p)
         for p in table.pieces if p != probe),
        reverse=True,
    )
    print(f"  nearest to {probe!r}: {[p for _, p in sims[:4]]}")
print(f"  out-of-vocabulary piece still gets a vector: "
      f"|v('semmaaa')| = {np.linalg.norm(word_vector(table, 'semmaaa')):.3f}")

print("\n== TF-IDF ==")
tfidf = fit_tfidf([t.split() for t in texts], k=20)
common = [(term, round(float(w), 3)) for w, term in sorted(zip(tfidf.idf, tfidf.terms))[:3]]
print(f"  kept {tfidf.k} terms; lowest idf (most common): {common}")
vec = sentence_tfidf(tfidf, "semma padam da".split())
nonzero = {tfidf.terms[i]: round(float(v), 3) for i, v in enumerate(vec) if v != 0}
print(f"  'semma padam da' -> {nonzero} (L2 norm {np.linalg.norm(vec):.3f})")

print("\n== Contextual sentence encoder (bidirectional GRU LM) ==")
enc = train_contextual(
    [seq.ids for seq in encoded],
    vocab_size=len(vocab),
    config=ContextualConfig(embed_dim=16, hidden_dim=16, epochs=4, lr=0.01,
                            batch_size=16, seed=2),
)
print(f"  sentence vectors have dim {enc.dim} (2 x hidden)")
print("  held-out perplexity per epoch:",
      [round(p, 2) for p in enc.epoch_perplexities])
v1 = sentence_vector(enc, list(encoded[0].ids))
v2 = sentence_vector(enc, list(encoded[1].ids))
print(f"  example vectors: |v1|={np.linalg.norm(v1):.3f} |v2|={np.linalg.norm(v2):.3f} "
      f"cos={cos(v1, v2):.3f}")
