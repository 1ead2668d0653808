"""Macro-F1 and per-class diagnostics for multi-label predictions.

All ratios use the strict zero-denominator convention: a class with no
true positives and nothing predicted scores 0, which penalizes
never-predicted rare classes the way the competition metric does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError


def binarize(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Predict 1 where p >= threshold (ties at the threshold count as 1)."""
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError(f"threshold must be in (0, 1), got {threshold}")
    probs = np.asarray(probabilities)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ConfigurationError("probabilities must lie in [0, 1]")
    return (probs >= threshold).astype(np.int64)


def _check_pair(preds, targets):
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    if preds.shape != targets.shape or preds.ndim != 2 or preds.shape[1] < 1:
        raise DimensionError(
            f"predictions {preds.shape} and targets {targets.shape} must be "
            "matching [B, C] arrays")
    return preds.astype(bool), targets.astype(bool)


def confusion_counts(preds, targets) -> np.ndarray:
    """Per-class [tp, fp, fn, tn] counts, shape [C, 4]."""
    preds, targets = _check_pair(preds, targets)
    tp = (preds & targets).sum(axis=0)
    fp = (preds & ~targets).sum(axis=0)
    fn = (~preds & targets).sum(axis=0)
    tn = (~preds & ~targets).sum(axis=0)
    return np.stack([tp, fp, fn, tn], axis=1).astype(np.int64)


def macro_f1(preds, targets) -> float:
    """Unweighted mean over classes of F1 = 2*tp / (2*tp + fp + fn).

    The mean is accumulated class-by-class in index order so the result is
    bit-identical to a naive counting loop.
    """
    counts = confusion_counts(preds, targets)
    total = 0.0
    for tp, fp, fn, _tn in counts:
        denom = int(2 * tp + fp + fn)
        total += 2 * int(tp) / denom if denom else 0.0
    return total / counts.shape[0]


@dataclass
class ClassReport:
    class_id: int
    precision: float
    recall: float
    f1: float
    support: int


def per_class_report(preds, targets) -> list[ClassReport]:
    """Precision/recall/F1 per class (0 where the denominator is 0)."""
    counts = confusion_counts(preds, targets)
    report = []
    for c, (tp, fp, fn, _tn) in enumerate(counts):
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        report.append(ClassReport(c, float(precision), float(recall),
                                  float(f1), int(tp + fn)))
    return report


def format_report(report: list[ClassReport]) -> str:
    lines = ["class  precision  recall     f1         support"]
    for r in report:
        lines.append(f"{r.class_id:>5d}  {r.precision:<9.4f}  {r.recall:<9.4f}  "
                     f"{r.f1:<9.4f}  {r.support}")
    mean_f1 = float(np.mean([r.f1 for r in report])) if report else 0.0
    lines.append(f"macro F1: {mean_f1:.6f}")
    return "\n".join(lines)


METRICS_HEADER = "epoch,train_loss,val_loss,val_macro_f1,lr"


def format_metrics_row(epoch: int, train_loss, val_loss, val_macro_f1, lr) -> str:
    """One metrics.csv row; None fields are left empty, floats keep full repr."""

    def fmt(value):
        return "" if value is None else repr(float(value))

    return f"{epoch},{fmt(train_loss)},{fmt(val_loss)},{fmt(val_macro_f1)},{fmt(lr)}"
