"""Hand presence and box localisation from a predicted skeleton image.

Pipeline: threshold the skeleton, grow 4-connected regions from foreground
seeds, decide presence from the total foreground count and report the box of
the largest region.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .heatmap_codec import resize_bilinear

DEFAULT_FOREGROUND_THRESHOLD = 0.5
DEFAULT_PRESENCE_COUNT = 300


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel box."""
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InvalidInputError(f"invalid box {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def within(self, width: int, height: int) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max < width and self.y_max < height

    def contains(self, x, y) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class DetectorThresholds:
    foreground_threshold: float = DEFAULT_FOREGROUND_THRESHOLD
    presence_count: int = DEFAULT_PRESENCE_COUNT

    def __post_init__(self):
        if not 0.0 < self.foreground_threshold < 1.0:
            raise InvalidInputError("foreground_threshold must lie in (0, 1)")
        if self.presence_count < 1:
            raise InvalidInputError("presence_count must be >= 1")


@dataclass(frozen=True)
class DetectionDecision:
    hand_present: bool
    foreground_pixels: int
    bbox: Optional[BoundingBox] = None


def binarize(image: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(image) >= threshold


def region_grow(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components of a boolean mask.

    Each component is an ``(n, 2)`` int array of ``(row, col)`` pixels in
    discovery order. Components are ordered by their first pixel in
    row-major scan order.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    visited = np.zeros_like(mask)
    regions = []
    rows, cols = np.nonzero(mask)
    for r0, c0 in zip(rows.tolist(), cols.tolist()):
        if visited[r0, c0]:
            continue
        visited[r0, c0] = True
        queue = deque([(r0, c0)])
        pixels = []
        while queue:
            r, c = queue.popleft()
            pixels.append((r, c))
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not visited[rr, cc]:
                    visited[rr, cc] = True
                    queue.append((rr, cc))
        regions.append(np.array(pixels, dtype=int))
    return regions


def bbox_of_region(region) -> BoundingBox:
    """Tight box around ``(row, col)`` pixels."""
    region = np.asarray(region, dtype=int).reshape(-1, 2)
    if len(region) == 0:
        raise InvalidInputError("cannot box an empty region")
    r_min, c_min = region.min(axis=0)
    r_max, c_max = region.max(axis=0)
    return BoundingBox(int(c_min), int(r_min), int(c_max), int(r_max))


def decide_hand_presence(image: np.ndarray, thresholds: DetectorThresholds = DetectorThresholds()) -> DetectionDecision:
    mask = binarize(image, thresholds.foreground_threshold)
    count = int(mask.sum())
    if count == 0 or count < thresholds.presence_count:
        return DetectionDecision(False, count, None)
    regions = region_grow(mask)
    largest = max(regions, key=len)  # first wins on ties
    return DetectionDecision(True, count, bbox_of_region(largest))


@dataclass(frozen=True)
class CropTransform:
    """Affine map from source-image pixels to crop pixels: ``p' = (p - origin) * scale``."""
    origin_x: float
    origin_y: float
    scale_x: float
    scale_y: float

    def apply(self, joints) -> np.ndarray:
        joints = np.asarray(joints, dtype=float)
        return (joints - [self.origin_x, self.origin_y]) * [self.scale_x, self.scale_y]

    def invert(self, joints) -> np.ndarray:
        joints = np.asarray(joints, dtype=float)
        return joints / [self.scale_x, self.scale_y] + [self.origin_x, self.origin_y]


def expand_box(box: BoundingBox, width: int, height: int, margin: float) -> BoundingBox:
    if margin < 0:
        raise InvalidInputError("margin must be >= 0")
    m = margin * max(box.width, box.height)
    x0 = max(0, int(np.floor(box.x_min - m)))
    y0 = max(0, int(np.floor(box.y_min - m)))
    x1 = min(width - 1, int(np.ceil(box.x_max + m)))
    y1 = min(height - 1, int(np.ceil(box.y_max + m)))
    if x0 > x1 or y0 > y1:
        raise InvalidInputError(f"box {box.as_tuple()} does not intersect the {width}x{height} image")
    return BoundingBox(x0, y0, x1, y1)


def crop_and_resize(image: np.ndarray, box: BoundingBox, out: int, margin: float = 0.0):
    """Crop ``image`` (``(H, W)`` or ``(H, W, C)``) around ``box`` and resample to ``out x out``.

    Returns the crop and the :class:`CropTransform` that maps joint
    coordinates into it. Resampling is corner-aligned bilinear.
    """
    if out < 1:
        raise InvalidInputError("output size must be >= 1")
    image = np.asarray(image, dtype=float)
    h, w = image.shape[:2]
    crop_box = expand_box(box, w, h, margin)
    patch = image[crop_box.y_min:crop_box.y_max + 1, crop_box.x_min:crop_box.x_max + 1]
    if patch.ndim == 3:
        resized = np.moveaxis(resize_bilinear(np.moveaxis(patch, -1, 0), out, out), 0, -1)
    else:
        resized = resize_bilinear(patch, out, out)
    sx = (out - 1) / (crop_box.x_max - crop_box.x_min) if crop_box.x_max > crop_box.x_min else 1.0
    sy = (out - 1) / (crop_box.y_max - crop_box.y_min) if crop_box.y_max > crop_box.y_min else 1.0
    return resized, CropTransform(float(crop_box.x_min), float(crop_box.y_min), sx, sy)
