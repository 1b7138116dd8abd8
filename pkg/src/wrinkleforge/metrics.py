"""Segmentation evaluation: confusion counts, JSI, precision/recall/F1, accuracy.

Zero-denominator conventions are pinned here so every caller agrees on edge
cases: precision, recall, F1, and JSI are 0 when their denominators vanish,
except that two empty masks score JSI = 1 and F1 = 1 (agreement on absence).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyDatasetError, ShapeMismatchError
from .image_io import BinaryMask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.tn + other.tn,
        )


@dataclass(frozen=True)
class EvalResult:
    jsi: float
    precision: float
    recall: float
    f1: float
    accuracy: float
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "jsi": self.jsi,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp,
                       "fn": self.counts.fn, "tn": self.counts.tn},
        }


def confusion(pred: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    """Exact pixel tallies of the prediction against the reference mask."""
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise ShapeMismatchError(
            f"pred {pred.height}x{pred.width} vs truth {truth.height}x{truth.width}"
        )
    p = pred.data.astype(bool)
    t = truth.data.astype(bool)
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))
    return ConfusionCounts(tp, fp, fn, tn)


def metrics_from_counts(c: ConfusionCounts) -> EvalResult:
    if c.total == 0:
        raise EmptyDatasetError("no pixels to evaluate")
    both_empty = c.tp == 0 and c.fp == 0 and c.fn == 0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    if both_empty:
        jsi, f1 = 1.0, 1.0
    else:
        jsi = c.tp / (c.tp + c.fp + c.fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    accuracy = (c.tp + c.tn) / c.total
    return EvalResult(jsi, precision, recall, f1, accuracy, c)


def evaluate(pred: BinaryMask, truth: BinaryMask) -> EvalResult:
    """All five metrics for a single prediction/reference pair."""
    return metrics_from_counts(confusion(pred, truth))


def evaluate_dataset(pairs: Iterable[tuple[BinaryMask, BinaryMask]]) -> EvalResult:
    """Micro-averaged metrics: confusion counts are summed over all pairs and
    the metrics computed once on the sums. Robust to wrinkle-free images."""
    total = ConfusionCounts(0, 0, 0, 0)
    n = 0
    for pred, truth in pairs:
        total = total + confusion(pred, truth)
        n += 1
    if n == 0:
        raise EmptyDatasetError("evaluate_dataset needs at least one pair")
    return metrics_from_counts(total)
