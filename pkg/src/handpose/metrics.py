"""Keypoint, box and classification metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detector import BoundingBox
from .errors import InvalidInputError, StructuralError


@dataclass(frozen=True)
class PckCurve:
    thresholds: tuple
    fractions: tuple

    def rows(self):
        return list(zip(self.thresholds, self.fractions))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_decisions(cls, predicted: Sequence[bool], actual: Sequence[bool]) -> "ConfusionCounts":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls(int((p & a).sum()), int((p & ~a).sum()), int((~p & ~a).sum()), int((~p & a).sum()))


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    gt = np.asarray(gt, dtype=float).reshape(-1, 2)
    if pred.shape != gt.shape:
        raise StructuralError(f"joint count mismatch: {len(pred)} predicted vs {len(gt)} ground truth")
    return pred, gt


def box_size(box: BoundingBox) -> int:
    """PCK normaliser: the longer side of the inclusive box."""
    return max(box.width, box.height)


def joint_errors(pred, gt) -> np.ndarray:
    pred, gt = _pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=1)


def pck(pred, gt, bbox: BoundingBox, thresholds: Sequence[float]) -> PckCurve:
    """Fraction of joints whose error divided by the box size is within each threshold."""
    d = joint_errors(pred, gt) / box_size(bbox)
    return PckCurve(tuple(float(t) for t in thresholds), tuple(float(np.mean(d <= t)) for t in thresholds))


def pck_dataset(preds, gts, bboxes, thresholds: Sequence[float]) -> PckCurve:
    """PCK pooled over every joint of every sample."""
    if not (len(preds) == len(gts) == len(bboxes)):
        raise StructuralError("preds, gts and bboxes must have the same length")
    if len(preds) == 0:
        raise InvalidInputError("no samples")
    d = np.concatenate([joint_errors(p, g) / box_size(b) for p, g, b in zip(preds, gts, bboxes)])
    return PckCurve(tuple(float(t) for t in thresholds), tuple(float(np.mean(d <= t)) for t in thresholds))


def mjpe(pred, gt) -> float:
    """Mean euclidean joint error in pixels."""
    return float(joint_errors(pred, gt).mean())


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    inter = max(iw, 0) * max(ih, 0)
    return inter / (a.area + b.area - inter)


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def classification_metrics(c: ConfusionCounts) -> dict:
    if c.total < 1:
        raise InvalidInputError("confusion counts are empty")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return {
        "accuracy": (c.tp + c.tn) / c.total,
        "precision": precision,
        "recall": recall,
        "f1": _ratio(2 * precision * recall, precision + recall),
    }


def roc_curve(scores_positive, scores_negative):
    """``(fpr, tpr)`` arrays from (0, 0) to (1, 1), one vertex per distinct score."""
    pos = np.asarray(scores_positive, dtype=float)
    neg = np.asarray(scores_negative, dtype=float)
    if len(pos) == 0 or len(neg) == 0:
        raise InvalidInputError("both classes need at least one score")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_sorted = np.sort(pos)
    neg_sorted = np.sort(neg)
    # count of scores >= threshold, for every threshold at once
    tp = len(pos) - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = len(neg) - np.searchsorted(neg_sorted, thresholds, side="left")
    tpr = np.concatenate([[0.0], tp / len(pos)])
    fpr = np.concatenate([[0.0], fp / len(neg)])
    return fpr, tpr


def roc_auc(scores_positive, scores_negative) -> float:
    """Trapezoidal area under the ROC curve (equals the Mann-Whitney U statistic)."""
    fpr, tpr = roc_curve(scores_positive, scores_negative)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
