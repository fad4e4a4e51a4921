"""Accuracy, weighted F1 and per-class report from a confusion matrix.

Confusion rows are true labels, columns are predictions. Precision and
recall with a zero denominator are defined as 0, so degenerate classes
never produce NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass
class MetricsReport:
    labels: tuple[str, ...]
    accuracy: float
    weighted_f1: float
    precision: np.ndarray  # [C]
    recall: np.ndarray  # [C]
    f1: np.ndarray  # [C]
    support: np.ndarray  # [C] int
    confusion: np.ndarray  # [C, C] int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                label: {
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "support": int(self.support[i]),
                }
                for i, label in enumerate(self.labels)
            },
            "confusion": self.confusion.tolist(),
        }

    def format_table(self) -> str:
        width = max(len(l) for l in self.labels) + 2
        lines = [
            f"{'label':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"
        ]
        for i, label in enumerate(self.labels):
            lines.append(
                f"{label:<{width}}{self.precision[i]:>10.4f}{self.recall[i]:>10.4f}"
                f"{self.f1[i]:>10.4f}{self.support[i]:>10d}"
            )
        lines.append("")
        lines.append(f"accuracy     {self.accuracy:.4f}")
        lines.append(f"weighted F1  {self.weighted_f1:.4f}")
        return "\n".join(lines)


def confusion_matrix(
    y_true: Sequence[int], y_pred: Sequence[int], n_classes: int
) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValidationError("cannot build a confusion matrix from no examples")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


def _validate_confusion(confusion: np.ndarray) -> np.ndarray:
    conf = np.asarray(confusion)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got {conf.shape}")
    if np.any(conf < 0):
        raise ValidationError("confusion entries must be nonnegative")
    if conf.sum() == 0:
        raise ValidationError("confusion matrix is all zeros")
    return conf.astype(np.int64)


def per_class_prf(confusion: np.ndarray):
    """Per-class (precision, recall, f1, support); 0 where undefined."""
    conf = _validate_confusion(confusion)
    tp = np.diag(conf).astype(np.float64)
    pred_totals = conf.sum(axis=0).astype(np.float64)
    support = conf.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return precision, recall, f1, support.astype(np.int64)


def accuracy_score(confusion: np.ndarray) -> float:
    conf = _validate_confusion(confusion)
    return float(np.diag(conf).sum() / conf.sum())


def weighted_f1(confusion: np.ndarray) -> float:
    """Support-weighted mean of per-class F1 scores."""
    conf = _validate_confusion(confusion)
    _, _, f1, support = per_class_prf(conf)
    return float((f1 * support).sum() / support.sum())


def compute_metrics(
    y_true: Sequence[int], y_pred: Sequence[int], labels: Sequence[str]
) -> MetricsReport:
    conf = confusion_matrix(y_true, y_pred, len(labels))
    precision, recall, f1, support = per_class_prf(conf)
    return MetricsReport(
        labels=tuple(labels),
        accuracy=accuracy_score(conf),
        weighted_f1=weighted_f1(conf),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=conf,
    )
