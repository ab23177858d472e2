"""Dataset generation, the detect -> crop -> regress pipeline and evaluation drivers."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .detector import (BoundingBox, DetectionDecision, DetectorThresholds, crop_and_resize,
                       decide_hand_presence)
from .errors import ConfigError, EvalError
from .heatmap_codec import GaussianSpec
from .io.manifest import AnnotationRecord, DatasetManifest, assign_splits
from .io.netpbm import read_image, write_image
from .metrics import ConfusionCounts, PckCurve, classification_metrics, iou, mjpe, pck_dataset, roc_auc
from .micronet.network import NetworkConfig, NetworkParams, build_network, fused_joints, forward, prepare_input
from .micronet.train import PoseDataset, TrainConfig, make_dataset, train
from .skeleton import RasterSpec, default_hand_topology, rasterize_skeleton
from .synth import SynthOptions, generate_samples

log = logging.getLogger(__name__)

VARIANTS = {
    "multi+skeleton": dict(use_skeleton=True, multi_scale=True),
    "multi": dict(use_skeleton=False, multi_scale=True),
    "single-scale": dict(use_skeleton=False, multi_scale=False),
}
DEFAULT_PCK_THRESHOLDS = tuple(np.round(np.arange(0.0, 0.201, 0.01), 2))
CROP_MARGIN = 0.15


def variant_config(variant: str, joint_count: int, input_resolution: int = 32, base_channels: int = 8) -> NetworkConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    return NetworkConfig(joint_count=joint_count, input_resolution=input_resolution,
                         base_channels=base_channels, **VARIANTS[variant])


# ---------------------------------------------------------------- data

def generate_synthetic_dataset(n: int, seed: int, opts: SynthOptions = SynthOptions(), out_dir=None):
    """Synthetic manifest plus images; images are written as PPM when ``out_dir`` is given."""
    samples = generate_samples(n, seed, opts)
    splits = assign_splits(n, np.random.default_rng([seed, 1 << 20]))
    raster = opts.raster_spec()
    records = []
    for i, (s, split) in enumerate(zip(samples, splits)):
        name = f"images/{i:06d}.ppm"
        if out_dir is not None:
            write_image(s.image, os.path.join(out_dir, name))
        records.append(AnnotationRecord(
            image_path=name,
            resolution=(opts.resolution, opts.resolution),
            hand_present=s.hand_present,
            joints2d=None if s.joints is None else tuple(tuple(float(c) for c in p) for p in s.joints),
            bbox=None if s.bbox is None else s.bbox.as_tuple(),
            split=split,
        ))
    meta = {"seed": seed, "line_thickness": raster.line_thickness, "blob_sigma": raster.blob_sigma}
    manifest = DatasetManifest(opts.joint_count, f"hand{opts.joint_count}", records, meta)
    return manifest, samples


def manifest_raster(manifest: DatasetManifest) -> RasterSpec:
    m = manifest.meta
    return RasterSpec(int(m.get("line_thickness", 3)), float(m.get("blob_sigma", 2.0)))


def oracle_skeleton(manifest: DatasetManifest, rec: AnnotationRecord) -> np.ndarray:
    w, h = rec.resolution
    if not rec.hand_present:
        return np.zeros((h, w))
    topo = default_hand_topology(manifest.joint_count)
    return rasterize_skeleton(np.array(rec.joints2d), topo, w, h, manifest_raster(manifest))


@dataclass
class NoiseSpec:
    """Corruption applied to oracle skeletons to mimic an imperfect segmenter."""
    pixel_sigma: float = 0.12
    spurious_mean: float = 2.5
    spurious_sigma: tuple = (0.02, 0.055)  # fraction of the image side

    def apply(self, skeleton: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        h, w = skeleton.shape
        out = skeleton + rng.normal(0.0, self.pixel_sigma, size=skeleton.shape)
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(rng.poisson(self.spurious_mean)):
            cx, cy = rng.uniform(0, w), rng.uniform(0, h)
            s = rng.uniform(*self.spurious_sigma) * max(h, w)
            out = np.maximum(out, np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s)))
        return np.clip(out, 0.0, 1.0)


class ImageSource:
    """Reads record images from disk, or serves them from in-memory samples."""

    def __init__(self, root=None, images=None):
        self.root = root
        self.images = images

    def get(self, index: int, rec: AnnotationRecord) -> np.ndarray:
        if self.images is not None:
            return self.images[index]
        return read_image(os.path.join(self.root, rec.image_path))


@dataclass
class PoseSamples:
    inputs: np.ndarray  # (N, C_in, r, r)
    joints: np.ndarray  # (N, K, 2) crop coordinates
    box_sizes: np.ndarray  # PCK normaliser in crop pixels
    indices: list = field(default_factory=list)


def crop_record(image, skeleton, box: BoundingBox, resolution: int):
    img_crop, tf = crop_and_resize(image, box, resolution, CROP_MARGIN)
    skel_crop, _ = crop_and_resize(skeleton, box, resolution, CROP_MARGIN)
    return img_crop, np.clip(skel_crop, 0.0, 1.0), tf


def pose_samples(manifest: DatasetManifest, source: ImageSource, cfg: NetworkConfig, split: str | None,
                 noise: NoiseSpec | None = None, seed: int = 0) -> PoseSamples:
    """Ground-truth-box crops of hand-present records, ready for the network."""
    xs, js, sizes, idx = [], [], [], []
    for i, rec in enumerate(manifest.records):
        if not rec.hand_present or (split is not None and rec.split != split):
            continue
        if rec.bbox is None:
            raise EvalError(f"record {i} has no ground-truth box")
        skel = oracle_skeleton(manifest, rec)
        if noise is not None:
            skel = noise.apply(skel, np.random.default_rng([seed, i]))
        box = BoundingBox(*rec.bbox)
        img, sk, tf = crop_record(source.get(i, rec), skel, box, cfg.input_resolution)
        xs.append(prepare_input(img, sk, cfg.use_skeleton))
        js.append(tf.apply(np.array(rec.joints2d)))
        sizes.append(max(box.width * tf.scale_x, box.height * tf.scale_y))
        idx.append(i)
    if not xs:
        raise EvalError(f"no hand-present records in split {split!r}")
    return PoseSamples(np.stack(xs), np.stack(js), np.array(sizes), idx)


# ---------------------------------------------------------------- pose

def default_gaussian() -> GaussianSpec:
    return GaussianSpec()


def train_pose(manifest: DatasetManifest, source: ImageSource, cfg: NetworkConfig,
               train_cfg: TrainConfig = TrainConfig(), gaussian: GaussianSpec | None = None,
               params: NetworkParams | None = None, split: str | None = "train"):
    gaussian = gaussian or default_gaussian()
    samples = pose_samples(manifest, source, cfg, split)
    ds = make_dataset(samples.inputs, samples.joints, cfg, gaussian)
    if params is None:
        params = build_network(cfg, train_cfg.seed)
    return train(params, ds, train_cfg)


def predict_batch(params: NetworkParams, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    preds = []
    for start in range(0, len(inputs), batch_size):
        outputs, _ = forward(params, inputs[start:start + batch_size])
        preds += [fused_joints(params, outputs, i) for i in range(len(outputs[0]))]
    return np.stack(preds)


@dataclass
class PoseReport:
    mjpe: float
    pck: PckCurve
    predictions: np.ndarray
    ground_truth: np.ndarray


def run_pose_eval(manifest: DatasetManifest, source: ImageSource, params: NetworkParams, variant: str | None = None,
                  split: str | None = "test", thresholds=DEFAULT_PCK_THRESHOLDS) -> PoseReport:
    cfg = params.config
    if variant is not None and variant != cfg.variant:
        raise ConfigError(f"parameters were trained as {cfg.variant!r}, not {variant!r}")
    if manifest.joint_count != cfg.joint_count:
        raise ConfigError(f"manifest has {manifest.joint_count} joints, network {cfg.joint_count}")
    samples = pose_samples(manifest, source, cfg, split)
    preds = predict_batch(params, samples.inputs)
    errs = [mjpe(p, g) for p, g in zip(preds, samples.joints)]
    boxes = [BoundingBox(0, 0, int(round(s)) - 1, int(round(s)) - 1) for s in samples.box_sizes]
    curve = pck_dataset(list(preds), list(samples.joints), boxes, thresholds)
    return PoseReport(float(np.mean(errs)), curve, preds, samples.joints)


# ---------------------------------------------------------------- detection

@dataclass
class DetectReport:
    decisions: list
    mean_iou: float
    classification: dict
    auc: float
    sweep: list  # (presence_count, auc)


def detection_skeletons(manifest: DatasetManifest, noise: NoiseSpec | None, seed: int):
    for i, rec in enumerate(manifest.records):
        skel = oracle_skeleton(manifest, rec)
        if noise is not None:
            skel = noise.apply(skel, np.random.default_rng([seed, i]))
        yield skel


def decision_auc(decisions, actual) -> float:
    """ROC area of hard Hand/NoHand decisions (single operating point)."""
    scores = np.array([float(d.hand_present) for d in decisions])
    actual = np.asarray(actual, dtype=bool)
    return roc_auc(scores[actual], scores[~actual])


def run_detect(manifest: DatasetManifest, thresholds: DetectorThresholds = DetectorThresholds(),
               noise: NoiseSpec | None = None, seed: int = 0, sweep_counts=None, skeletons=None) -> DetectReport:
    """Detect hands on oracle (optionally corrupted) skeletons and score against ground truth."""
    if not manifest.records:
        raise EvalError("manifest has no records")
    actual = [r.hand_present for r in manifest.records]
    for i, rec in enumerate(manifest.records):
        if rec.hand_present and rec.bbox is None:
            raise EvalError(f"record {i} lacks a ground-truth box")
    skels = list(skeletons) if skeletons is not None else list(detection_skeletons(manifest, noise, seed))
    decisions = [decide_hand_presence(s, thresholds) for s in skels]
    ious = [iou(d.bbox, BoundingBox(*r.bbox)) if d.bbox is not None else 0.0
            for d, r in zip(decisions, manifest.records) if r.hand_present]
    counts = ConfusionCounts.from_decisions([d.hand_present for d in decisions], actual)
    has_both = any(actual) and not all(actual)
    auc = decision_auc(decisions, actual) if has_both else float("nan")
    sweep = []
    if sweep_counts is not None and has_both:
        fg = np.array([d.foreground_pixels for d in decisions])
        for c in sweep_counts:
            ds = [DetectionDecision(bool(f >= c), int(f)) for f in fg]
            sweep.append((int(c), decision_auc(ds, actual)))
    return DetectReport(decisions, float(np.mean(ious)) if ious else float("nan"),
                        classification_metrics(counts), auc, sweep)


# ---------------------------------------------------------------- end to end

def detect_and_predict(params: NetworkParams, image, skeleton, thresholds: DetectorThresholds = DetectorThresholds()):
    """Full two-stage inference: returns ``(decision, joints in image pixels or None)``."""
    decision = decide_hand_presence(skeleton, thresholds)
    if not decision.hand_present:
        return decision, None
    img, sk, tf = crop_record(image, skeleton, decision.bbox, params.config.input_resolution)
    x = prepare_input(img, sk, params.config.use_skeleton)
    outputs, _ = forward(params, x[None])
    return decision, tf.invert(fused_joints(params, outputs))
