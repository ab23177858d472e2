"""Synthetic hand images with exact ground truth.

Poses come from a canonical hand template (wrist at the origin, fingers
pointing up, unit = wrist-to-middle-fingertip length) perturbed by bounded
per-joint jitter and a random similarity transform. Images are the rendered
skeleton composited in a skin colour over a smooth textured background, with
optional skin-coloured distractor blobs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import binarize, bbox_of_region, region_grow, BoundingBox
from .heatmap_codec import resize_bilinear
from .skeleton import HandTopology, RasterSpec, default_hand_topology, rasterize_skeleton

# (root angle from +y in degrees, root distance, three segment lengths)
_FINGER_LAYOUT = (
    (-55.0, 0.22, (0.16, 0.13, 0.11)),  # thumb
    (-18.0, 0.42, (0.17, 0.11, 0.09)),
    (0.0, 0.44, (0.19, 0.12, 0.10)),
    (16.0, 0.42, (0.17, 0.11, 0.09)),
    (32.0, 0.37, (0.13, 0.09, 0.08)),
)
_FINGER_SPREAD = (-40.0, -12.0, 0.0, 10.0, 22.0)


def canonical_hand(joint_count: int = 21) -> np.ndarray:
    """Template joints ``(K, 2)`` in hand units, y pointing down the image (fingers at negative y)."""
    pts = [(0.0, 0.0)]
    for (root_deg, root_dist, segs), spread in zip(_FINGER_LAYOUT, _FINGER_SPREAD):
        a = np.deg2rad(root_deg)
        p = np.array([np.sin(a), -np.cos(a)]) * root_dist
        pts.append(tuple(p))
        d = np.deg2rad(spread)
        direction = np.array([np.sin(d), -np.cos(d)])
        for s in segs:
            p = p + direction * s
            pts.append(tuple(p))
    pts = np.array(pts)
    if joint_count == 20:
        return pts[1:]
    if joint_count != 21:
        raise ValueError(f"unsupported joint count {joint_count}")
    return pts


@dataclass(frozen=True)
class SynthOptions:
    resolution: int = 64
    joint_count: int = 21
    hand_scale: tuple = (0.45, 0.8)  # template unit as a fraction of the image side
    jitter: float = 0.03  # per-joint, in hand units
    rotation_deg: float = 35.0
    background_noise: float = 0.25
    distractors: int = 2
    absent_fraction: float = 0.0
    raster: RasterSpec | None = None  # defaults to raster_for_resolution

    def raster_spec(self) -> RasterSpec:
        return self.raster if self.raster is not None else raster_for_resolution(self.resolution)


def raster_for_resolution(resolution: int) -> RasterSpec:
    """Thickness 3 / sigma 2 at 128 px, scaled to ``resolution``.

    Thickness never drops below 2: one-pixel Bresenham lines are only
    8-connected and would fall apart under 4-connected region growing.
    """
    return RasterSpec(line_thickness=max(2, int(round(3 * resolution / 128))), blob_sigma=2.0 * resolution / 128)


def sample_pose(rng: np.random.Generator, opts: SynthOptions) -> np.ndarray:
    tmpl = canonical_hand(opts.joint_count)
    tmpl = tmpl + rng.uniform(-opts.jitter, opts.jitter, size=tmpl.shape)
    r = opts.resolution
    scale = rng.uniform(*opts.hand_scale) * r
    theta = np.deg2rad(rng.uniform(-opts.rotation_deg, opts.rotation_deg))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    pts = tmpl @ rot.T * scale
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    margin = 2.0
    # translate so the whole hand (plus a small border) lies inside the image
    room = (r - 1 - margin) - (hi - lo) - margin
    room = np.maximum(room, 0.0)
    offset = margin - lo + rng.uniform(0.0, 1.0, size=2) * room
    return pts + offset


def smooth_noise(rng: np.random.Generator, resolution: int, cells: int, channels: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(channels, cells, cells))
    return np.moveaxis(resize_bilinear(coarse, resolution, resolution), 0, -1)


def render_image(rng: np.random.Generator, skeleton, opts: SynthOptions) -> np.ndarray:
    """8-bit RGB image ``(H, W, 3)`` for a skeleton raster (``None`` for an empty scene)."""
    r = opts.resolution
    bg = 0.35 + 0.4 * smooth_noise(rng, r, 5, 3)
    bg = bg + opts.background_noise * (smooth_noise(rng, r, max(2, r // 4), 3) - 0.5)
    skin = np.array([0.85, 0.62, 0.5]) + rng.uniform(-0.08, 0.08, size=3)
    img = bg
    yy, xx = np.mgrid[0:r, 0:r]
    for _ in range(opts.distractors):
        cx, cy = rng.uniform(0, r, size=2)
        s = rng.uniform(0.03, 0.09) * r
        alpha = 0.8 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
        img = img * (1 - alpha[..., None]) + skin * alpha[..., None]
    if skeleton is not None:
        alpha = np.asarray(skeleton)[..., None]
        img = img * (1 - alpha) + skin * alpha
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def skeleton_bbox(skeleton, threshold: float = 0.5) -> BoundingBox:
    """Box of the largest foreground component of a rendered skeleton."""
    regions = region_grow(binarize(skeleton, threshold))
    return bbox_of_region(max(regions, key=len))


@dataclass
class SynthSample:
    image: np.ndarray
    joints: np.ndarray | None
    skeleton: np.ndarray
    bbox: BoundingBox | None

    @property
    def hand_present(self) -> bool:
        return self.joints is not None


def generate_samples(n: int, seed: int, opts: SynthOptions = SynthOptions(),
                     topology: HandTopology | None = None) -> list[SynthSample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    topo = topology or default_hand_topology(opts.joint_count)
    spec = opts.raster_spec()
    r = opts.resolution
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        present = rng.uniform() >= opts.absent_fraction
        if present:
            joints = sample_pose(rng, opts)
            skel = rasterize_skeleton(joints, topo, r, r, spec)
            samples.append(SynthSample(render_image(rng, skel, opts), joints, skel, skeleton_bbox(skel)))
        else:
            samples.append(SynthSample(render_image(rng, None, opts), None, np.zeros((r, r)), None))
    return samples
