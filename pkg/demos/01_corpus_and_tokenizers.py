"""Corpus handling and the two subword tokenizers, end to end.

Run with: python demos/01_corpus_and_tokenizers.py
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from toycorpus import SCHEMA, make_corpus

from cmsenti.corpus import load_tsv, normalize_text, split, write_tsv
from cmsenti.subword import decode, encode, train_bpe, train_unigram

print("== Normalization ==")
for raw in ["  Enna   Da SUPER ", "Café scene", "செம்ம MASS"]:
    print(f"  {raw!r:35} -> {normalize_text(raw)!r}")

print("\n== TSV round trip and stratified split ==")
data = make_corpus(n_per_class=12, seed=3)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "comments.tsv"
    write_tsv(data, path)
    loaded = load_tsv(path, SCHEMA)
print(f"  wrote and re-read {len(loaded)} labeled examples")
parts = split(loaded, dev_ratio=0.2, seed=11)
print(f"  split -> {len(parts.train)} train / {len(parts.dev)} dev (stratified)")

texts = [ex.text for ex in loaded]

print("\n== BPE ==")
bpe = train_bpe(texts, vocab_size=80)
print(f"  learned {len(bpe.merges)} merges, {len(bpe.pieces)} pieces")
print(f"  first merges: {bpe.merges[:6]}")
sample = "semma mass padam da"
seq = encode(bpe, sample)
print(f"  encode({sample!r}) -> {[bpe.pieces[i] for i in seq.ids]}")
print(f"  decode(...)        -> {decode(bpe, seq)!r}")
assert decode(bpe, seq) == sample

print("\n== Unigram LM ==")
uni = train_unigram(texts, vocab_size=80)
print(f"  {len(uni.pieces)} pieces; five most probable multi-character pieces:")
ranked = sorted(
    ((p, s) for p, s in uni._scores.items() if len(p) > 1),
    key=lambda kv: -kv[1],
)
for piece, score in ranked[:5]:
    print(f"    {piece!r:12} log-prob {score:.3f}")
seq = encode(uni, sample)
print(f"  encode({sample!r}) -> {[uni.pieces[i] for i in seq.ids]}")
assert decode(uni, seq) == sample

print("\n== Unknown characters become the unk glyph ==")
seq = encode(uni, "semma Z")
print(f"  'semma Z' -> {decode(uni, seq)!r}")

print("\nAll round trips held.")
