"""Hard-thresholded evaluation metrics on binary masks.

Degenerate-denominator conventions (documented and tested): a 0/0 ratio is
scored 1, so two empty masks agree perfectly, an empty prediction against a
nonempty truth keeps precision 1, and an empty truth against a nonempty
prediction keeps recall 1. Dataset-level numbers are means of per-image
metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionCounts",
    "binarize",
    "confusion",
    "dsc",
    "evaluate_masks",
    "iou",
    "mean_metrics",
    "precision",
    "recall",
]

METRIC_NAMES = ("dsc", "iou", "recall", "precision")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def binarize(pred: np.ndarray) -> np.ndarray:
    """Argmax over the two softmax channels; exact ties go to background."""
    pred = np.asarray(pred)
    if pred.shape[-1] != 2:
        raise ValueError(f"expected a trailing class axis of size 2, got {pred.shape}")
    return (pred[..., 0] > pred[..., 1]).astype(np.uint8)


def confusion(pred_mask: np.ndarray, true_mask: np.ndarray) -> ConfusionCounts:
    pred_mask = np.asarray(pred_mask)
    true_mask = np.asarray(true_mask)
    if pred_mask.shape != true_mask.shape:
        raise ValueError(
            f"mask shapes differ: {pred_mask.shape} vs {true_mask.shape}")
    p = pred_mask.astype(bool)
    t = true_mask.astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
        tn=int(np.sum(~p & ~t)),
    )


def dsc(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2 * c.tp / denom


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def recall(c: ConfusionCounts) -> float:
    denom = c.tp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    return 1.0 if denom == 0 else c.tp / denom


def evaluate_masks(pred_mask: np.ndarray, true_mask: np.ndarray) -> dict:
    """All four metrics for one image pair."""
    c = confusion(pred_mask, true_mask)
    return {"dsc": dsc(c), "iou": iou(c), "recall": recall(c), "precision": precision(c)}


def mean_metrics(per_image: list) -> dict:
    """Mean of per-image metrics in a fixed reduction order."""
    if not per_image:
        raise ValueError("cannot aggregate an empty metric list")
    return {name: float(np.mean([m[name] for m in per_image]))
            for name in METRIC_NAMES}
