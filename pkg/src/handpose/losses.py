"""Segmentation and heatmap regression losses with analytic gradients.

All losses are unnormalised sums over every element, gradients are taken with
respect to the prediction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError, StructuralError


@dataclass
class LossResult:
    value: float
    gradient: Union[np.ndarray, list]


@dataclass(frozen=True)
class CombinedLossConfig:
    lambda1: float = 0.4
    lambda2: float = 0.6

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or (self.lambda1 == 0 and self.lambda2 == 0):
            raise InvalidInputError("loss weights must be >= 0 and not both zero")


def scale_weights(resolutions: Sequence[int], full_resolution: int | None = None) -> list[float]:
    """Per-level weight ``resolution / full_resolution``: 1, 1/2, 1/4 for full, half and quarter scale."""
    full = max(resolutions) if full_resolution is None else full_resolution
    return [r / full for r in resolutions]


@dataclass(frozen=True)
class MultiScaleLossConfig:
    weights: tuple[float, ...] = field(default=(0.5, 0.25, 0.5, 1.0, 1.0))

    def __post_init__(self):
        if len(self.weights) < 1:
            raise InvalidInputError("at least one scale is required")
        if any(not w > 0 for w in self.weights):
            raise InvalidInputError(f"scale weights must be positive, got {self.weights}")


def _pair(x, xh):
    x = np.asarray(x, dtype=float)
    xh = np.asarray(xh, dtype=float)
    if x.shape != xh.shape:
        raise StructuralError(f"shape mismatch: target {x.shape} vs prediction {xh.shape}")
    return x, xh


def l1_loss(x, xh) -> LossResult:
    x, xh = _pair(x, xh)
    d = x - xh
    return LossResult(float(np.abs(d).sum()), -np.sign(d))


def soft_dice_loss(x, xh) -> LossResult:
    x, xh = _pair(x, xh)
    inter = float(np.vdot(xh, x))
    denom = float(np.vdot(xh, xh) + np.vdot(x, x))
    if denom == 0.0:
        return LossResult(0.0, np.zeros_like(xh))
    value = 1.0 - 2.0 * inter / denom
    grad = -(2.0 * x * denom - 4.0 * xh * inter) / (denom * denom)
    return LossResult(value, grad)


def combined_loss(x, xh, cfg: CombinedLossConfig = CombinedLossConfig()) -> LossResult:
    a = l1_loss(x, xh)
    b = soft_dice_loss(x, xh)
    return LossResult(cfg.lambda1 * a.value + cfg.lambda2 * b.value,
                      cfg.lambda1 * a.gradient + cfg.lambda2 * b.gradient)


def multi_scale_loss(targets: Sequence, preds: Sequence, cfg: MultiScaleLossConfig) -> LossResult:
    """Weighted sum of per-level squared errors; ``gradient`` is a list, one array per level."""
    if not (len(targets) == len(preds) == len(cfg.weights)):
        raise StructuralError(
            f"level count mismatch: {len(targets)} targets, {len(preds)} predictions, {len(cfg.weights)} weights")
    value = 0.0
    grads = []
    for i, (t, p, w) in enumerate(zip(targets, preds, cfg.weights)):
        try:
            t, p = _pair(t, p)
        except StructuralError as exc:
            raise StructuralError(f"level {i}: {exc}") from exc
        d = t - p
        value += w * float(np.vdot(d, d))
        grads.append(-2.0 * w * d)
    return LossResult(value, grads)
