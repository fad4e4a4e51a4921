"""Train the full meta-embedding classifier on synthetic data, inspect the
metrics report, round-trip a checkpoint, and classify new texts.

Run with: python demos/04_train_and_evaluate.py  (about half a minute)
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from toycorpus import SCHEMA, make_corpus

from cmsenti.checkpoint import load_checkpoint, save_checkpoint
from cmsenti.cli import predict
from cmsenti.corpus import split
from cmsenti.embed import ContextualConfig, SkipgramConfig, fit_tfidf, train_contextual, train_skipgram
from cmsenti.features import Components
from cmsenti.model import ModelConfig
from cmsenti.subword import encode, train_unigram
from cmsenti.train import TrainConfig, evaluate, train

data = make_corpus(n_per_class=24, seed=13)
parts = split(data, dev_ratio=0.2, seed=1)
texts = [ex.text for ex in parts.train]
print(f"corpus: {len(parts.train)} train / {len(parts.dev)} dev over {len(SCHEMA.labels)} labels")

print("\n[1/4] fitting the upstream components ...")
vocab = train_unigram(texts, vocab_size=90)
encoded = [encode(vocab, t) for t in texts]
components = Components(
    vocab=vocab,
    skipgram=train_skipgram(
        [[vocab.pieces[i] for i in s.ids] for s in encoded],
        SkipgramConfig(dim=24, buckets=2048, epochs=6, window=4, negatives=3, seed=2),
    ),
    tfidf=fit_tfidf([t.split() for t in texts], k=24),
    contextual=train_contextual(
        [s.ids for s in encoded], len(vocab),
        ContextualConfig(embed_dim=12, hidden_dim=12, epochs=3, lr=0.01, batch_size=16, seed=2),
    ),
)

config = ModelConfig(
    vocab_size=len(vocab),
    hid_dim=24,
    n_heads=3,
    n_layers=1,
    pf_dim=48,
    dropout=0.1,
    max_len=24,
    tfidf_dim=components.tfidf.k,
    ctx_dim=components.contextual.dim,
    gru_hidden=24,
).validate()

print("[2/4] training the transformer + GRU classifier ...")
ckpt, history = train(
    parts.train, parts.dev, components, SCHEMA, config,
    TrainConfig(lr=0.004, batch_size=16, max_epochs=15, patience=6, seed=4),
)
for row in history:
    print(f"  epoch {row['epoch']:>2}: loss {row['train_loss']:.4f}  "
          f"dev acc {row['dev_accuracy']:.3f}  dev wF1 {row['dev_weighted_f1']:.3f}")

print("\n[3/4] dev-set report for the kept (best) checkpoint:")
report = evaluate(ckpt, parts.dev, components)
print(report.format_table())

print("\n[4/4] checkpoint round trip and prediction:")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    print(f"  saved and re-loaded {path.name} "
          f"({sum(t.size for t in loaded.params.tensors())} parameters)")
    for text in ["semma mass padam", "mokka waste bore", "hindi dubbed trailer"]:
        pred = predict(loaded, text, components)
        confidence = max(pred.probabilities)
        print(f"  {text!r:28} -> {pred.label:<16} p={confidence:.3f}")
