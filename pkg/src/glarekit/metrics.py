"""Pixel confusion counts and per-image segmentation metrics.

Glare is the positive class.  Degenerate cases follow fixed
conventions: an empty prediction has precision 0; an image with no
ground-truth glare has recall 1 when the prediction is also empty (and
is then left out of recall averaging, since it carries no recall
information) and recall 0 otherwise.  F1 is 0 whenever tp = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRIC_NAMES = ("precision", "recall", "f1", "accuracy")

# CSV row labels, in emission order.
METRIC_ROWS = (
    ("Precision", "precision", "mean"),
    ("Std Precision", "precision", "std"),
    ("Recall", "recall", "mean"),
    ("Std Recall", "recall", "std"),
    ("F1", "f1", "mean"),
    ("Std F1", "f1", "std"),
    ("Accuracy", "accuracy", "mean"),
    ("Std Accuracy", "accuracy", "std"),
)


@dataclass(frozen=True)
class PixelConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_masks(cls, pred: np.ndarray, truth: np.ndarray) -> "PixelConfusion":
        pred = np.asarray(pred).astype(bool)
        truth = np.asarray(truth).astype(bool)
        if pred.shape != truth.shape:
            raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
        return cls(
            tp=int(np.sum(pred & truth)),
            fp=int(np.sum(pred & ~truth)),
            fn=int(np.sum(~pred & truth)),
            tn=int(np.sum(~pred & ~truth)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ImageMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    recall_in_mean: bool
    confusion: PixelConfusion


def image_metrics(confusion: PixelConfusion) -> ImageMetrics:
    c = confusion
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
        recall_in_mean = True
    elif c.fp == 0:  # empty ground truth, empty prediction
        recall = 1.0
        recall_in_mean = False
    else:
        recall = 0.0
        recall_in_mean = True
    denom = 2 * c.tp + c.fp + c.fn
    f1 = 2 * c.tp / denom if denom > 0 else 0.0
    accuracy = (c.tp + c.tn) / c.total
    return ImageMetrics(precision, recall, f1, accuracy, recall_in_mean, c)


def masks_metrics(pred: np.ndarray, truth: np.ndarray) -> ImageMetrics:
    return image_metrics(PixelConfusion.from_masks(pred, truth))


def pooled_pixel_f1(preds, truths) -> float:
    """F1 over the aggregate confusion of a whole set of mask pairs."""
    tp = fp = fn = 0
    for p, t in zip(preds, truths):
        c = PixelConfusion.from_masks(p, t)
        tp, fp, fn = tp + c.tp, fp + c.fp, fn + c.fn
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


@dataclass
class MetricSummary:
    """Mean and population std of each metric over per-image values."""

    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float
    accuracy_mean: float
    accuracy_std: float
    n_images: int = 0
    per_image: list[ImageMetrics] | None = None

    @classmethod
    def from_images(cls, images: list[ImageMetrics]) -> "MetricSummary":
        if not images:
            raise ValueError("cannot summarize an empty image list")

        def agg(values):
            # sorted before summing: pooled statistics are order-free even
            # at the bit level
            arr = np.sort(np.asarray(values, dtype=np.float64))
            return float(arr.mean()), float(arr.std())

        p_mean, p_std = agg([m.precision for m in images])
        recalls = [m.recall for m in images if m.recall_in_mean]
        if not recalls:  # every image was empty-vs-empty; fall back to the raw 1.0s
            recalls = [m.recall for m in images]
        r_mean, r_std = agg(recalls)
        f_mean, f_std = agg([m.f1 for m in images])
        a_mean, a_std = agg([m.accuracy for m in images])
        return cls(
            p_mean, p_std, r_mean, r_std, f_mean, f_std, a_mean, a_std,
            n_images=len(images), per_image=list(images),
        )

    def value(self, metric: str, stat: str) -> float:
        return getattr(self, f"{metric}_{stat}")

    def as_dict(self) -> dict:
        return {
            f"{metric}_{stat}": self.value(metric, stat)
            for metric in METRIC_NAMES
            for stat in ("mean", "std")
        }
