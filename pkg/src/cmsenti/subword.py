"""Subword vocabularies: byte-pair-encoding merges and unigram-LM segmentation.

Sentences are treated as plain Unicode character sequences. Words are the
whitespace-delimited units; a word-boundary marker symbol starts every word
so that encoding is reversible (concatenate pieces, markers become spaces).
"""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError

MARKER = "▁"  # ▁ word-boundary marker, its own symbol before any merge
UNK_GLYPH = "⁇"  # ⁇ stands in for unencodable characters when decoding

SPECIAL_PIECES = ("<pad>", "<unk>", "<s>", "</s>")
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

VOCAB_FORMAT_VERSION = 1

# Unigram trainer defaults; overridable per call.
UNIGRAM_MAX_PIECE_LEN = 6
UNIGRAM_EM_ITERATIONS = 4
UNIGRAM_PRUNE_FRACTION = 0.2
UNIGRAM_SEED_MIN_FREQ = 2
UNK_SCORE_PENALTY = 10.0


@dataclass
class SubwordVocab:
    """A learned subword inventory; immutable once trained."""

    kind: str  # "bpe" | "unigram"
    pieces: List[str]
    merges: List[Tuple[str, str]] = field(default_factory=list)
    log_probs: Optional[np.ndarray] = None
    marker: str = MARKER

    def __post_init__(self):
        if self.kind not in ("bpe", "unigram"):
            raise ValidationError(f"unknown vocab kind {self.kind!r}")
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValidationError("duplicate pieces in vocabulary")
        if self.kind == "bpe":
            self.merge_ranks = {pair: r for r, pair in enumerate(self.merges)}
        else:
            if self.log_probs is None or len(self.log_probs) != len(self.pieces):
                raise ValidationError("unigram vocab needs one log_prob per piece")
            self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
            self._scores = {
                p: float(self.log_probs[i])
                for i, p in enumerate(self.pieces)
                if i >= len(SPECIAL_PIECES)
            }
            real = self.log_probs[len(SPECIAL_PIECES):]
            self._unk_score = (float(real.min()) if real.size else 0.0) - UNK_SCORE_PENALTY
            self._max_piece_len = max((len(p) for p in self._scores), default=1)

    def __len__(self):
        return len(self.pieces)


@dataclass(frozen=True)
class TokenSequence:
    ids: Tuple[int, ...]
    length: int

    def __post_init__(self):
        if self.length > len(self.ids):
            raise ValidationError("length exceeds id count")


def _word_counts(corpus: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for line in corpus:
        counts.update(line.split())
    return counts


def _base_inventory(words: Counter) -> tuple[List[str], int]:
    chars = sorted({ch for w in words for ch in w})
    pieces = list(SPECIAL_PIECES) + [MARKER] + chars
    return pieces, len(chars)


def _check_vocab_size(vocab_size: int, n_chars: int, minimum: int) -> None:
    if vocab_size <= n_chars:
        raise ValidationError(
            f"vocab_size {vocab_size} must exceed the {n_chars} distinct characters"
        )
    if vocab_size < minimum:
        raise ValidationError(
            f"vocab_size {vocab_size} below minimum {minimum} "
            f"(specials + marker + characters)"
        )


def train_bpe(corpus: Sequence[str], vocab_size: int, min_pair_freq: int = 2) -> SubwordVocab:
    """Learn greedy highest-frequency pair merges.

    The inventory starts from every character in the corpus (plus the
    boundary marker); merges are applied word-internally until ``vocab_size``
    pieces exist or no adjacent pair occurs at least ``min_pair_freq`` times.
    Ties break lexicographically on (left, right).
    """
    if not corpus or not any(line.split() for line in corpus):
        raise ValidationError("training corpus is empty")
    words = _word_counts(corpus)
    pieces, n_chars = _base_inventory(words)
    _check_vocab_size(vocab_size, n_chars, len(pieces))

    seqs: List[List[str]] = []
    freqs: List[int] = []
    for word, freq in words.items():
        seqs.append([MARKER] + list(word))
        freqs.append(freq)

    pair_counts: Dict[Tuple[str, str], int] = defaultdict(int)
    pair_words: Dict[Tuple[str, str], set] = defaultdict(set)
    for wi, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            pair_counts[pair] += freqs[wi]
            pair_words[pair].add(wi)

    heap = [(-c, pair) for pair, c in pair_counts.items()]
    heapq.heapify(heap)

    known = set(pieces)
    merges: List[Tuple[str, str]] = []
    while len(pieces) < vocab_size and heap:
        neg_count, pair = heapq.heappop(heap)
        count = -neg_count
        if pair_counts.get(pair, 0) != count:
            continue  # stale heap entry
        if count < min_pair_freq:
            break
        merged = pair[0] + pair[1]
        if merged in known:
            # colliding with a special token string; drop this pair entirely
            del pair_counts[pair]
            continue
        for wi in sorted(pair_words[pair]):
            seq = seqs[wi]
            freq = freqs[wi]
            before = Counter(zip(seq, seq[1:]))
            new_seq = _merge_once(seq, pair, merged)
            after = Counter(zip(new_seq, new_seq[1:]))
            seqs[wi] = new_seq
            for p, k in (before - after).items():
                pair_counts[p] -= k * freq
                if pair_counts[p] <= 0:
                    pair_counts.pop(p, None)
                else:
                    heapq.heappush(heap, (-pair_counts[p], p))
            for p, k in (after - before).items():
                pair_counts[p] += k * freq
                pair_words[p].add(wi)
                heapq.heappush(heap, (-pair_counts[p], p))
        pair_counts.pop(pair, None)
        pair_words.pop(pair, None)
        pieces.append(merged)
        known.add(merged)
        merges.append(pair)

    return SubwordVocab(kind="bpe", pieces=pieces, merges=merges)


def _merge_once(seq: List[str], pair: Tuple[str, str], merged: str) -> List[str]:
    out: List[str] = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def _bpe_segment(vocab: SubwordVocab, word: str) -> List[str]:
    syms = [MARKER] + list(word)
    ranks = vocab.merge_ranks
    while len(syms) > 1:
        best_rank = None
        best_idx = -1
        for i in range(len(syms) - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_idx = i
        if best_rank is None:
            break
        pair = (syms[best_idx], syms[best_idx + 1])
        syms = _merge_once(syms, pair, pair[0] + pair[1])
    return syms


# ---------------------------------------------------------------------------
# unigram language model
# ---------------------------------------------------------------------------


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a > b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def _lattice_forward(word: str, scores: Mapping[str, float], max_len: int) -> List[float]:
    n = len(word)
    alpha = [-math.inf] * (n + 1)
    alpha[0] = 0.0
    for j in range(1, n + 1):
        acc = -math.inf
        for i in range(max(0, j - max_len), j):
            piece = word[i:j]
            if piece in scores and alpha[i] > -math.inf:
                acc = _log_add(acc, alpha[i] + scores[piece])
        alpha[j] = acc
    return alpha


def _expected_counts(
    word_freqs: Mapping[str, int],
    scores: Mapping[str, float],
    max_len: int,
) -> Dict[str, float]:
    counts: Dict[str, float] = defaultdict(float)
    for word, freq in word_freqs.items():
        n = len(word)
        alpha = _lattice_forward(word, scores, max_len)
        if alpha[n] == -math.inf:
            continue  # cannot happen while all characters are in the vocabulary
        beta = [-math.inf] * (n + 1)
        beta[n] = 0.0
        for i in range(n - 1, -1, -1):
            acc = -math.inf
            for j in range(i + 1, min(n, i + max_len) + 1):
                piece = word[i:j]
                if piece in scores and beta[j] > -math.inf:
                    acc = _log_add(acc, scores[piece] + beta[j])
            beta[i] = acc
        z = alpha[n]
        for i in range(n):
            if alpha[i] == -math.inf:
                continue
            for j in range(i + 1, min(n, i + max_len) + 1):
                piece = word[i:j]
                if piece in scores and beta[j] > -math.inf:
                    counts[piece] += freq * math.exp(alpha[i] + scores[piece] + beta[j] - z)
    return counts


def _normalize(counts: Mapping[str, float]) -> Dict[str, float]:
    total = sum(counts.values())
    out: Dict[str, float] = {}
    for p, c in counts.items():
        ratio = c / total
        # pieces whose probability underflows to zero carry no mass and
        # would be pruned anyway; characters are floored and never hit this
        if ratio > 0.0:
            out[p] = math.log(ratio)
    return out


def train_unigram(
    corpus: Sequence[str],
    vocab_size: int,
    max_piece_len: int = UNIGRAM_MAX_PIECE_LEN,
    em_iterations: int = UNIGRAM_EM_ITERATIONS,
    prune_fraction: float = UNIGRAM_PRUNE_FRACTION,
    seed_min_freq: int = UNIGRAM_SEED_MIN_FREQ,
) -> SubwordVocab:
    """Learn a unigram segmentation model by EM plus iterative pruning.

    The seed inventory is every character plus every substring up to
    ``max_piece_len`` occurring at least ``seed_min_freq`` times. Each round
    runs ``em_iterations`` of forward-backward expected-count EM over the
    word lattices, then drops the lowest-expected-count multi-character
    pieces until ``vocab_size`` total pieces remain.
    """
    if not corpus or not any(line.split() for line in corpus):
        raise ValidationError("training corpus is empty")
    raw_words = _word_counts(corpus)
    n_chars = len({ch for w in raw_words for ch in w})
    _check_vocab_size(vocab_size, n_chars, len(SPECIAL_PIECES) + 1 + n_chars)

    marked: Dict[str, int] = {MARKER + w: f for w, f in raw_words.items()}
    target = vocab_size - len(SPECIAL_PIECES)

    seed_counts: Counter = Counter()
    char_set = set()
    for word, freq in marked.items():
        for i in range(len(word)):
            char_set.add(word[i])
            for j in range(i + 1, min(len(word), i + max_piece_len) + 1):
                seed_counts[word[i:j]] += freq
    counts: Dict[str, float] = {
        p: float(c)
        for p, c in seed_counts.items()
        if (len(p) == 1 or c >= seed_min_freq) and p not in SPECIAL_PIECES
    }
    scores = _normalize(counts)

    while True:
        for _ in range(em_iterations):
            expected = _expected_counts(marked, scores, max_piece_len)
            # single characters must survive with some mass to keep every
            # word segmentable
            for ch in char_set:
                expected[ch] = max(expected.get(ch, 0.0), 1e-10)
            scores = _normalize(expected)
        if len(scores) <= target:
            break
        n_keep = max(target, int(len(scores) * (1.0 - prune_fraction)))
        multi = sorted(
            (p for p in scores if len(p) > 1),
            key=lambda p: (expected.get(p, 0.0), p),
        )
        n_drop = min(len(scores) - n_keep, len(multi))
        if n_drop <= 0:
            break
        dropped = set(multi[:n_drop])
        scores = _normalize({p: math.exp(s) for p, s in scores.items() if p not in dropped})

    real = sorted(scores)
    pieces = list(SPECIAL_PIECES) + real
    min_score = min(scores.values()) if scores else 0.0
    log_probs = np.array(
        [min_score - UNK_SCORE_PENALTY] * len(SPECIAL_PIECES) + [scores[p] for p in real],
        dtype=np.float64,
    )
    return SubwordVocab(kind="unigram", pieces=pieces, log_probs=log_probs)


def viterbi_segment(
    text: str,
    scores: Mapping[str, float],
    max_piece_len: Optional[int] = None,
    unk_score: Optional[float] = None,
) -> Tuple[List[str], float]:
    """Maximum-score segmentation of ``text`` under per-piece log scores.

    When ``unk_score`` is given, any single character may be consumed at that
    score, so segmentation is total. Raises if no segmentation exists
    otherwise.
    """
    n = len(text)
    max_len = max_piece_len or (max((len(p) for p in scores), default=1))
    best = [-math.inf] * (n + 1)
    back: List[Optional[int]] = [None] * (n + 1)
    best[0] = 0.0
    for j in range(1, n + 1):
        for i in range(max(0, j - max_len), j):
            if best[i] == -math.inf:
                continue
            piece = text[i:j]
            s = scores.get(piece)
            if s is None and j - i == 1 and unk_score is not None:
                s = unk_score
            if s is None:
                continue
            cand = best[i] + s
            if cand > best[j]:
                best[j] = cand
                back[j] = i
    if best[n] == -math.inf:
        raise ValidationError(f"no segmentation exists for {text!r}")
    out: List[str] = []
    j = n
    while j > 0:
        i = back[j]
        out.append(text[i:j])
        j = i
    out.reverse()
    return out, best[n]


def _sample_segment(
    text: str,
    scores: Mapping[str, float],
    max_len: int,
    unk_score: float,
    rng: np.random.Generator,
) -> List[str]:
    """Sample one segmentation proportionally to its probability."""

    def score_of(i: int, j: int) -> Optional[float]:
        piece = text[i:j]
        s = scores.get(piece)
        if s is None and j - i == 1:
            s = unk_score
        return s

    n = len(text)
    alpha = [-math.inf] * (n + 1)
    alpha[0] = 0.0
    for j in range(1, n + 1):
        acc = -math.inf
        for i in range(max(0, j - max_len), j):
            s = score_of(i, j)
            if s is not None and alpha[i] > -math.inf:
                acc = _log_add(acc, alpha[i] + s)
        alpha[j] = acc

    out: List[str] = []
    j = n
    while j > 0:
        starts = []
        weights = []
        for i in range(max(0, j - max_len), j):
            s = score_of(i, j)
            if s is not None and alpha[i] > -math.inf:
                starts.append(i)
                weights.append(alpha[i] + s)
        w = np.exp(np.array(weights) - max(weights))
        w /= w.sum()
        i = starts[int(rng.choice(len(starts), p=w))]
        out.append(text[i:j])
        j = i
    out.reverse()
    return out


def encode(
    vocab: SubwordVocab,
    text: str,
    sample: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> TokenSequence:
    """Tokenize normalized text into piece ids; unseen characters become unk.

    ``sample=True`` draws a random segmentation from the unigram lattice
    (subword regularization); it is rejected for BPE vocabularies.
    """
    if sample and vocab.kind != "unigram":
        raise ValidationError("sampled segmentation is only defined for unigram vocabularies")
    if sample and rng is None:
        raise ValidationError("sample=True needs an rng")
    ids: List[int] = []
    for word in text.split():
        if vocab.kind == "bpe":
            syms = _bpe_segment(vocab, word)
        else:
            marked = MARKER + word
            if sample:
                syms = _sample_segment(
                    marked, vocab._scores, vocab._max_piece_len, vocab._unk_score, rng
                )
            else:
                syms, _ = viterbi_segment(
                    marked,
                    vocab._scores,
                    max_piece_len=vocab._max_piece_len,
                    unk_score=vocab._unk_score,
                )
        ids.extend(vocab.piece_to_id.get(s, UNK_ID) for s in syms)
    return TokenSequence(ids=tuple(ids), length=len(ids))


def decode(vocab: SubwordVocab, seq: TokenSequence) -> str:
    """Invert :func:`encode`; exact for unk-free sequences."""
    chunks: List[str] = []
    for i in seq.ids:
        if not 0 <= i < len(vocab.pieces):
            raise ValidationError(f"id {i} outside vocabulary of {len(vocab.pieces)} pieces")
        if i == UNK_ID:
            chunks.append(UNK_GLYPH)
        elif i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        else:
            chunks.append(vocab.pieces[i])
    return "".join(chunks).replace(MARKER, " ").strip()


def save_vocab(vocab: SubwordVocab, path: str | Path) -> None:
    doc = {
        "version": VOCAB_FORMAT_VERSION,
        "kind": vocab.kind,
        "marker": vocab.marker,
        "pieces": vocab.pieces,
    }
    if vocab.kind == "bpe":
        doc["merges"] = [list(m) for m in vocab.merges]
    else:
        doc["log_probs"] = [float(x) for x in vocab.log_probs]
    Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


def load_vocab(path: str | Path) -> SubwordVocab:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("version")
    if version != VOCAB_FORMAT_VERSION:
        raise ValidationError(
            f"vocabulary format version {version} unsupported "
            f"(reader supports {VOCAB_FORMAT_VERSION})"
        )
    if doc["kind"] == "bpe":
        return SubwordVocab(
            kind="bpe",
            pieces=doc["pieces"],
            merges=[tuple(m) for m in doc["merges"]],
            marker=doc["marker"],
        )
    return SubwordVocab(
        kind="unigram",
        pieces=doc["pieces"],
        log_probs=np.array(doc["log_probs"], dtype=np.float64),
        marker=doc["marker"],
    )
