"""Skeleton mask rendering from joint annotations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .heatmap_codec import GaussianSpec, encode_joint

FINGERS = ("thumb", "index", "middle", "ring", "pinky")


@dataclass(frozen=True)
class HandTopology:
    palm_index: int | None
    fingers: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...] = field(default=())
    name: str = ""

    @property
    def joint_count(self) -> int:
        n = sum(len(f) for f in self.fingers)
        return n + (self.palm_index is not None)


@dataclass(frozen=True)
class RasterSpec:
    line_thickness: int = 3
    blob_sigma: float = 2.0

    def __post_init__(self):
        if int(self.line_thickness) != self.line_thickness or self.line_thickness < 1:
            raise InvalidInputError(f"line_thickness must be an integer >= 1, got {self.line_thickness}")
        if not self.blob_sigma > 0:
            raise InvalidInputError(f"blob_sigma must be positive, got {self.blob_sigma}")


def default_hand_topology(joint_count: int) -> HandTopology:
    """Standard hand graph.

    21 joints: index 0 is the wrist, followed by four joints per finger
    (root to tip) in thumb..pinky order; the wrist connects to every finger
    root. 20 joints: no wrist, finger roots are chained in finger order.
    """
    if joint_count == 21:
        palm, first = 0, 1
    elif joint_count == 20:
        palm, first = None, 0
    else:
        raise InvalidInputError(f"unsupported joint count {joint_count}; expected 20 or 21")
    fingers = tuple(tuple(range(first + 4 * f, first + 4 * f + 4)) for f in range(5))
    edges = [(chain[i], chain[i + 1]) for chain in fingers for i in range(3)]
    roots = [chain[0] for chain in fingers]
    if palm is not None:
        edges += [(palm, r) for r in roots]
    else:
        edges += list(zip(roots[:-1], roots[1:]))
    return HandTopology(palm, fingers, tuple(edges), name=f"hand{joint_count}")


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixels ``(x, y)`` on the segment, endpoints included."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    pts = []
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _round(v: float) -> int:
    return int(np.floor(v + 0.5))


def draw_lines(joints, edges, width: int, height: int, thickness: int) -> np.ndarray:
    """Binary canvas of all edges, each dilated by a ``thickness`` square."""
    lo, hi = -((thickness - 1) // 2), thickness // 2
    pad = max(-lo, hi)
    canvas = np.zeros((height + 2 * pad, width + 2 * pad), dtype=bool)
    for a, b in edges:
        pa, pb = joints[a], joints[b]
        if pa[0] == pb[0] and pa[1] == pb[1]:
            continue
        pts = np.array(bresenham(_round(pa[0]), _round(pa[1]), _round(pb[0]), _round(pb[1])))
        # drop pixels so far outside that even the dilated footprint misses the image
        keep = (pts[:, 0] >= -pad) & (pts[:, 0] < width + pad) & (pts[:, 1] >= -pad) & (pts[:, 1] < height + pad)
        pts = pts[keep]
        canvas[pts[:, 1] + pad, pts[:, 0] + pad] = True
    if thickness > 1:
        dilated = np.zeros_like(canvas)
        hh, ww = canvas.shape
        for oy in range(lo, hi + 1):
            for ox in range(lo, hi + 1):
                src = canvas[max(0, -oy):hh - max(0, oy), max(0, -ox):ww - max(0, ox)]
                dilated[max(0, oy):hh - max(0, -oy), max(0, ox):ww - max(0, -ox)] |= src
        canvas = dilated
    return canvas[pad:pad + height, pad:pad + width]


def rasterize_skeleton(joints, topology: HandTopology, width: int, height: int,
                       spec: RasterSpec = RasterSpec()) -> np.ndarray:
    """Skeleton image in [0, 1]: max of binary bone lines and unit Gaussian joint blobs."""
    joints = np.asarray(joints, dtype=float).reshape(-1, 2)
    if len(joints) != topology.joint_count:
        raise InvalidInputError(f"{len(joints)} joints do not match topology with {topology.joint_count}")
    if not np.all(np.isfinite(joints)):
        raise InvalidInputError("non-finite joint coordinates")
    img = draw_lines(joints, topology.edges, width, height, int(spec.line_thickness)).astype(float)
    gs = GaussianSpec(spec.blob_sigma)
    for j in joints:
        np.maximum(img, encode_joint(j, width, height, gs), out=img)
    return np.clip(img, 0.0, 1.0)
