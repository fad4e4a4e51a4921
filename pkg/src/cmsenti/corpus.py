"""Loading, normalizing and splitting labeled comment datasets.

The on-disk format is a UTF-8 TSV with one ``text<TAB>label`` pair per line
(LF or CRLF). Labels come from a five-way schema; the ``not_<language>``
label is resolved from a language tag so the same code serves e.g. Tamil
and Malayalam datasets.
"""

from __future__ import annotations

import random
import sys
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, List, Optional, Sequence

from .errors import ValidationError

# Fraction of structurally broken lines (no single tab) above which a file is
# considered corrupt rather than merely noisy.
MALFORMED_HARD_LIMIT = 0.10


@dataclass(frozen=True)
class LabelSchema:
    """The five sentiment labels, in the order that defines logit positions."""

    labels: tuple[str, ...]
    language_tag: str

    def __post_init__(self):
        if len(self.labels) != 5:
            raise ValidationError(f"schema needs exactly 5 labels, got {len(self.labels)}")
        if len(set(self.labels)) != 5:
            raise ValidationError(f"schema labels must be unique: {self.labels}")

    @classmethod
    def for_language(cls, language_tag: str) -> "LabelSchema":
        return cls(
            labels=(
                "positive",
                "negative",
                "mixed_feelings",
                f"not_{language_tag}",
                "unknown_state",
            ),
            language_tag=language_tag,
        )

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"label {label!r} not in schema {self.labels}") from None


@dataclass(frozen=True)
class LabeledExample:
    """One normalized comment and its sentiment label."""

    text: str
    label: str


@dataclass
class DatasetSplit:
    train: List[LabeledExample]
    dev: List[LabeledExample]
    seed: int


@lru_cache(maxsize=4096)
def _lower_if_latin(ch: str) -> str:
    if unicodedata.name(ch, "").startswith("LATIN"):
        return ch.lower()
    return ch


def normalize_text(raw: str) -> str:
    """Canonical text normalization: NFC, Latin lowercasing, whitespace collapse.

    Non-Latin scripts pass through untouched so that native-script and
    romanized parts of a code-mixed comment are treated uniformly. Total and
    idempotent.
    """
    text = unicodedata.normalize("NFC", raw)
    text = "".join(_lower_if_latin(ch) for ch in text)
    # lowercasing can decompose characters (e.g. dotted capital I), recompose
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.split())


def load_tsv(
    path: str | Path,
    schema: LabelSchema,
    report: Optional[IO[str]] = None,
) -> List[LabeledExample]:
    """Read ``text<TAB>label`` lines into normalized examples, in file order.

    Lines that are structurally broken, carry a label outside the schema, or
    normalize to empty text are skipped; each skip is reported to ``report``
    (stderr by default) as ``line <n>: <reason>``. If more than 10% of the
    non-empty lines are structurally broken the file is rejected outright.
    """
    if report is None:
        report = sys.stderr
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()

    examples: List[LabeledExample] = []
    skipped = 0
    structurally_bad = 0
    considered = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        considered += 1
        parts = line.split("\t")
        if len(parts) != 2:
            structurally_bad += 1
            skipped += 1
            print(f"line {lineno}: expected text<TAB>label, got {len(parts)} fields", file=report)
            continue
        raw_text, label = parts
        label = label.strip()
        if label not in schema.labels:
            skipped += 1
            print(f"line {lineno}: label {label!r} not in schema", file=report)
            continue
        text = normalize_text(raw_text)
        if not text:
            skipped += 1
            print(f"line {lineno}: text empty after normalization", file=report)
            continue
        examples.append(LabeledExample(text=text, label=label))

    if considered and structurally_bad / considered > MALFORMED_HARD_LIMIT:
        raise ValidationError(
            f"{path}: {structurally_bad}/{considered} malformed lines exceeds "
            f"{MALFORMED_HARD_LIMIT:.0%} limit"
        )
    if skipped:
        print(f"{path}: skipped {skipped} line(s)", file=report)
    return examples


def write_tsv(examples: Iterable[LabeledExample], path: str | Path) -> None:
    """Write examples in the canonical TSV format (fixture/export helper)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(f"{ex.text}\t{ex.label}\n")


def split(
    data: Sequence[LabeledExample],
    dev_ratio: float,
    seed: int,
) -> DatasetSplit:
    """Deterministic stratified train/dev split.

    Dev size is ``round(len(data) * dev_ratio)``, apportioned across labels by
    largest remainder so class proportions survive where counts permit.
    """
    n = len(data)
    if n < 2:
        raise ValidationError(f"need at least 2 examples to split, got {n}")
    if not 0.0 < dev_ratio < 1.0:
        raise ValidationError(f"dev_ratio must be in (0,1), got {dev_ratio}")
    n_dev = int(round(n * dev_ratio))
    if n_dev < 1 or n - n_dev < 1:
        raise ValidationError(
            f"dev_ratio {dev_ratio} over {n} examples leaves an empty side"
        )

    by_label: dict[str, list[int]] = {}
    for idx, ex in enumerate(data):
        by_label.setdefault(ex.label, []).append(idx)
    labels = sorted(by_label)

    # largest-remainder apportionment of the dev quota over classes
    quotas = {lab: len(by_label[lab]) * n_dev / n for lab in labels}
    counts = {lab: int(quotas[lab]) for lab in labels}
    leftover = n_dev - sum(counts.values())
    for lab in sorted(labels, key=lambda l: (-(quotas[l] - counts[l]), l)):
        if leftover <= 0:
            break
        if counts[lab] < len(by_label[lab]):
            counts[lab] += 1
            leftover -= 1
    # if some classes were too small to absorb their share, spill the rest
    if leftover > 0:
        for lab in labels:
            while leftover > 0 and counts[lab] < len(by_label[lab]):
                counts[lab] += 1
                leftover -= 1

    rng = random.Random(seed)
    dev_idx: set[int] = set()
    for lab in labels:
        members = list(by_label[lab])
        rng.shuffle(members)
        dev_idx.update(members[: counts[lab]])

    train = [data[i] for i in range(n) if i not in dev_idx]
    dev = [data[i] for i in range(n) if i in dev_idx]
    return DatasetSplit(train=train, dev=dev, seed=seed)
