"""Command line entry point: ``handpose <subcommand> [--flags]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import calib
from .detector import DetectorThresholds
from .errors import ConfigError, HandPoseError
from .heatmap_codec import GaussianSpec, decode_stack, encode_joint_set
from .io.manifest import load_manifest, save_manifest
from .io.netpbm import to_uint8, write_image
from .micronet.checkpoint import load_params, save_params
from .micronet.network import build_network
from .micronet.train import TrainConfig
from .pipeline import (DEFAULT_PCK_THRESHOLDS, VARIANTS, ImageSource, NoiseSpec, generate_synthetic_dataset,
                       oracle_skeleton, run_detect, run_pose_eval, train_pose, variant_config)
from .report import pck_svg, write_csv, write_text
from .skeleton import RasterSpec, default_hand_topology, rasterize_skeleton
from .synth import SynthOptions

log = logging.getLogger("handpose")


def _setup_logging():
    level = os.environ.get("HANDPOSE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_gen_synth(a):
    opts = SynthOptions(resolution=a.resolution, joint_count=a.joints, distractors=a.distractors,
                        absent_fraction=a.absent_fraction)
    manifest, _ = generate_synthetic_dataset(a.n, a.seed, opts, out_dir=a.out)
    save_manifest(manifest, os.path.join(a.out, "manifest.jsonl"))
    log.info("wrote %d records to %s", a.n, a.out)


def cmd_rasterize(a):
    manifest = load_manifest(a.manifest)
    for i, rec in enumerate(manifest.records):
        skel = oracle_skeleton(manifest, rec)
        write_image(to_uint8(skel), os.path.join(a.out, f"{i:06d}.pgm"))


def cmd_encode(a):
    joints = calib.read_points(a.joints, 2)
    stack = encode_joint_set(joints, a.width, a.height, GaussianSpec(a.sigma, a.reference),
                             sigma=GaussianSpec(a.sigma, a.reference).sigma_at(max(a.width, a.height)))
    with open(a.out, "wb") as fh:
        np.save(fh, stack)


def cmd_decode(a):
    stack = np.load(a.heatmaps)
    if stack.ndim != 3:
        raise ConfigError(f"heatmap file must hold a (K, H, W) array, got shape {stack.shape}")
    joints = decode_stack(stack)
    write_text(a.out, "".join(f"{int(x)} {int(y)}\n" for x, y in joints))


def cmd_detect(a):
    manifest = load_manifest(a.manifest)
    thresholds = DetectorThresholds(a.threshold, a.presence_count)
    noise = NoiseSpec() if a.skeleton_noise else None
    counts = list(range(a.sweep_min, a.sweep_max + 1, a.sweep_step))
    rep = run_detect(manifest, thresholds, noise, a.seed, sweep_counts=counts)
    rows = []
    for i, d in enumerate(rep.decisions):
        box = d.bbox.as_tuple() if d.bbox else ("", "", "", "")
        rows.append((i, int(d.hand_present), d.foreground_pixels, *box))
    write_csv(os.path.join(a.out, "decisions.csv"),
              ("index", "hand_present", "foreground_pixels", "x_min", "y_min", "x_max", "y_max"), rows)
    summary = [("mean_iou", _fmt(rep.mean_iou)), ("auc", _fmt(rep.auc))]
    summary += [(k, _fmt(v)) for k, v in rep.classification.items()]
    write_csv(os.path.join(a.out, "report.csv"), ("metric", "value"), summary)
    write_csv(os.path.join(a.out, "sweep.csv"), ("presence_count", "auc"), [(c, _fmt(v)) for c, v in rep.sweep])


def _image_source(manifest_path):
    return ImageSource(root=os.path.dirname(os.path.abspath(manifest_path)))


def cmd_train(a):
    manifest = load_manifest(a.manifest)
    if a.params:
        params = load_params(a.params)
        if params.config.variant != a.variant and a.variant_given:
            raise ConfigError(f"checkpoint is {params.config.variant!r} but --variant is {a.variant!r}")
    else:
        cfg = variant_config(a.variant, manifest.joint_count, a.input_res, a.base_channels)
        params = build_network(cfg, a.seed)
    if a.epochs > 0:
        tcfg = TrainConfig(epochs=a.epochs, batch_size=a.batch_size, lr=a.lr, seed=a.seed)
        params, trace = train_pose(manifest, _image_source(a.manifest), params.config, tcfg, params=params)
        write_csv(a.out + ".loss.csv", ("epoch", "loss"), [(i, _fmt(v)) for i, v in enumerate(trace)])
    save_params(params, a.out)


def cmd_eval(a):
    manifest = load_manifest(a.manifest)
    params = load_params(a.params)
    rep = run_pose_eval(manifest, _image_source(a.manifest), params, a.variant, split=a.split or None,
                        thresholds=DEFAULT_PCK_THRESHOLDS)
    write_csv(os.path.join(a.out, "pck.csv"), ("threshold", "fraction"),
              [(_fmt(t), _fmt(f)) for t, f in rep.pck.rows()])
    write_text(os.path.join(a.out, "pck.svg"), pck_svg(rep.pck.thresholds, rep.pck.fractions))
    write_csv(os.path.join(a.out, "summary.csv"), ("metric", "value"),
              [("mjpe", _fmt(rep.mjpe)), ("samples", len(rep.predictions)), ("variant", params.config.variant)])


def cmd_calibrate(a):
    corr = calib.read_correspondences(a.correspondences)
    intr = calib.read_intrinsics(a.intrinsics)
    extr = calib.solve_pnp(corr, intr)
    write_text(a.out, calib.format_extrinsics(extr))
    log.info("reprojection RMS %.3g px", calib.reprojection_rms(corr[:, :3], corr[:, 3:], intr, extr))


def cmd_project(a):
    pts = calib.read_points(a.points, 3)
    intr = calib.read_intrinsics(a.intrinsics)
    extr = calib.read_extrinsics(a.extrinsics) if a.extrinsics else calib.Extrinsics.identity()
    uv = calib.project_joint_set(pts, intr, extr)
    write_text(a.out, "".join(f"{u:.17g} {v:.17g}\n" for u, v in uv))


def _read_stream(path):
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            try:
                ts = float(parts[0])
            except ValueError as exc:
                raise calib.FormatError(f"bad timestamp {parts[0]!r}", line=lineno) from exc
            samples.append(calib.TimedSample(ts, parts[1] if len(parts) > 1 else str(len(samples))))
    return samples


def cmd_sync(a):
    pairs = calib.synchronize_streams(_read_stream(a.a), _read_stream(a.b), a.tolerance)
    write_csv(a.out, ("a_timestamp", "a_id", "b_timestamp", "b_id"),
              [(_fmt(x.timestamp), x.payload_id, _fmt(y.timestamp), y.payload_id) for x, y in pairs])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="handpose", allow_abbrev=False,
                                description="Skeleton-aware multi-scale hand pose toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, allow_abbrev=False)
        sp.set_defaults(func=fn)
        return sp

    s = add("gen-synth", cmd_gen_synth, "generate a synthetic dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--joints", type=int, choices=(20, 21), default=21)
    s.add_argument("--distractors", type=int, default=2)
    s.add_argument("--absent-fraction", type=float, default=0.0)

    s = add("rasterize", cmd_rasterize, "render ground-truth skeleton images as PGM")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)

    s = add("encode", cmd_encode, "encode joints (x y per line) as a heatmap stack (.npy)")
    s.add_argument("--joints", required=True)
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--height", type=int, required=True)
    s.add_argument("--sigma", type=float, default=2.0)
    s.add_argument("--reference", type=float, default=128.0)
    s.add_argument("--out", required=True)

    s = add("decode", cmd_decode, "argmax-decode a heatmap stack (.npy) to joints")
    s.add_argument("--heatmaps", required=True)
    s.add_argument("--out", required=True)

    s = add("detect", cmd_detect, "hand detection on oracle skeletons with IOU/AUC report")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--presence-count", type=int, default=300)
    s.add_argument("--skeleton-noise", action="store_true", help="corrupt oracle skeletons")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sweep-min", type=int, default=50)
    s.add_argument("--sweep-max", type=int, default=1000)
    s.add_argument("--sweep-step", type=int, default=50)

    s = add("train", cmd_train, "train the heatmap regressor")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--params", help="checkpoint to continue from")
    s.add_argument("--variant", choices=sorted(VARIANTS), default=None)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--lr", type=float, default=TrainConfig.lr)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--input-res", type=int, default=32)
    s.add_argument("--base-channels", type=int, default=8)

    s = add("eval", cmd_eval, "evaluate MJPE and PCK of a checkpoint")
    s.add_argument("--manifest", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--variant", choices=sorted(VARIANTS), default=None)
    s.add_argument("--split", default="test", help="split to evaluate ('' for all records)")

    s = add("calibrate", cmd_calibrate, "solve PnP from 'X Y Z u v' correspondences")
    s.add_argument("--correspondences", required=True)
    s.add_argument("--intrinsics", required=True)
    s.add_argument("--out", required=True)

    s = add("project", cmd_project, "project 3-D points (X Y Z per line) to pixels")
    s.add_argument("--points", required=True)
    s.add_argument("--intrinsics", required=True)
    s.add_argument("--extrinsics")
    s.add_argument("--out", required=True)

    s = add("sync", cmd_sync, "pair two timestamped streams")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--tolerance", type=float, required=True)
    s.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "train":
        args.variant_given = args.variant is not None
        args.variant = args.variant or "multi+skeleton"
    try:
        args.func(args)
    except HandPoseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
