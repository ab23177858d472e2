"""Gaussian heatmap encoding, argmax decoding and multi-scale fusion.

Conventions used throughout the package:

* a heatmap is a 2-D float array indexed ``[row, col]`` i.e. ``[v, u]``;
* a stack is a ``(K, H, W)`` array, channel ``k`` holding joint ``k``;
* a joint set is a ``(K, 2)`` float array of ``(x, y)`` = ``(col, row)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, StructuralError

DEFAULT_SIGMA = 2.0
DEFAULT_REFERENCE_RESOLUTION = 128


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float = DEFAULT_SIGMA
    reference_resolution: float = DEFAULT_REFERENCE_RESOLUTION

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if not self.reference_resolution > 0:
            raise InvalidInputError("reference_resolution must be positive")

    def sigma_at(self, resolution: float) -> float:
        """Blob width for a map of the given resolution."""
        return self.sigma * resolution / self.reference_resolution


@dataclass(frozen=True)
class PyramidLevel:
    stack: np.ndarray  # (K, H, W)
    weight: float

    @property
    def resolution(self) -> tuple[int, int]:
        return self.stack.shape[1], self.stack.shape[2]


@dataclass(frozen=True)
class ScalePyramid:
    levels: tuple[PyramidLevel, ...]

    @classmethod
    def from_stacks(cls, stacks: Sequence[np.ndarray], weights: Sequence[float]) -> "ScalePyramid":
        if len(stacks) != len(weights):
            raise StructuralError(f"{len(stacks)} stacks but {len(weights)} weights")
        return cls(tuple(PyramidLevel(np.asarray(s, dtype=float), float(w)) for s, w in zip(stacks, weights)))


def _check_dims(width, height):
    if int(width) < 1 or int(height) < 1:
        raise InvalidInputError(f"heatmap dimensions must be >= 1, got {width}x{height}")


def encode_joint(joint, width: int, height: int, spec: GaussianSpec, sigma: float | None = None) -> np.ndarray:
    """Render one joint as a unit-amplitude isotropic Gaussian on a ``height x width`` grid.

    ``sigma`` overrides ``spec.sigma`` when the caller already scaled it for
    the target resolution. Off-image joints keep their true position; only the
    visible part of the blob is rendered.
    """
    _check_dims(width, height)
    x, y = float(joint[0]), float(joint[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise InvalidInputError(f"non-finite joint coordinates ({x}, {y})")
    s = spec.sigma if sigma is None else float(sigma)
    du2 = (np.arange(width, dtype=float) - x) ** 2
    dv2 = (np.arange(height, dtype=float) - y) ** 2
    return np.exp(-(dv2[:, None] + du2[None, :]) / (2.0 * s * s))


def encode_joint_set(joints, width: int, height: int, spec: GaussianSpec, sigma: float | None = None) -> np.ndarray:
    joints = np.asarray(joints, dtype=float).reshape(-1, 2)
    stack = np.empty((len(joints), int(height), int(width)))
    for k, joint in enumerate(joints):
        try:
            stack[k] = encode_joint(joint, width, height, spec, sigma)
        except InvalidInputError as exc:
            raise InvalidInputError(f"channel {k}: {exc}") from exc
    return stack


def decode_argmax(heatmap: np.ndarray) -> tuple[int, int]:
    """Location ``(x, y)`` of the maximum; ties go to the first pixel in row-major order."""
    heatmap = np.asarray(heatmap)
    if heatmap.size == 0:
        raise InvalidInputError("cannot decode an empty heatmap")
    v, u = np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
    return int(u), int(v)


def decode_stack(stack: np.ndarray) -> np.ndarray:
    """Per-channel argmax of a ``(K, H, W)`` stack as a ``(K, 2)`` joint array."""
    stack = np.asarray(stack)
    k, h, w = stack.shape
    flat = np.argmax(stack.reshape(k, h * w), axis=1)
    return np.stack([flat % w, flat // w], axis=1).astype(float)


def _axis_weights(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        src = np.zeros(n_out)
    else:
        src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(src).astype(int), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(heatmap: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    """Corner-aligned bilinear resampling.

    Accepts a single map ``(H, W)`` or any array whose last two axes are
    spatial. Interpolation is written as ``a + w * (b - a)`` so that constant
    fields come back bit-exact.
    """
    _check_dims(new_width, new_height)
    heatmap = np.asarray(heatmap, dtype=float)
    h, w = heatmap.shape[-2:]
    if (h, w) == (new_height, new_width):
        return heatmap.copy()
    lo, hi, f = _axis_weights(h, new_height)
    a, b = heatmap[..., lo, :], heatmap[..., hi, :]
    rows = a + f[:, None] * (b - a)
    lo, hi, f = _axis_weights(w, new_width)
    a, b = rows[..., lo], rows[..., hi]
    return a + f * (b - a)


def fuse_stacks(stacks: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted average of per-level stacks after resizing them to the finest level."""
    if not stacks:
        raise StructuralError("pyramid has no levels")
    if len(weights) != len(stacks):
        raise StructuralError(f"{len(stacks)} levels but {len(weights)} weights")
    if any(not (np.isfinite(d) and d > 0) for d in weights):
        raise InvalidInputError(f"level weights must be positive and finite, got {list(weights)}")
    k = stacks[0].shape[-3]
    for i, s in enumerate(stacks):
        if s.shape[-3] != k:
            raise StructuralError(f"level {i} has {s.shape[-3]} channels, expected {k}")
    h, w = max((s.shape[-2:] for s in stacks), key=lambda hw: hw[0] * hw[1])
    total = 0.0
    acc = None
    for s, d in zip(stacks, weights):
        term = d * resize_bilinear(s, w, h)
        acc = term if acc is None else acc + term
        total += d
    return acc / total


def fuse_pyramid(pyramid: ScalePyramid) -> np.ndarray:
    """Decode a joint set from the weighted average of all pyramid levels."""
    fused = fuse_stacks([lvl.stack for lvl in pyramid.levels], [lvl.weight for lvl in pyramid.levels])
    return decode_stack(fused)


def level_coordinates(joints, src_resolution: tuple[int, int], dst_resolution: tuple[int, int]) -> np.ndarray:
    """Map ``(x, y)`` joints between grids under the corner-aligned convention of :func:`resize_bilinear`."""
    joints = np.asarray(joints, dtype=float)
    (sh, sw), (dh, dw) = src_resolution, dst_resolution
    sx = (dw - 1) / (sw - 1) if sw > 1 else 1.0
    sy = (dh - 1) / (sh - 1) if sh > 1 else 1.0
    return joints * np.array([sx, sy])
