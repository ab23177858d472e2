"""Mini-batch training of the heatmap regressor."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InvalidInputError, StructuralError
from ..heatmap_codec import GaussianSpec, encode_joint_set, level_coordinates
from ..losses import MultiScaleLossConfig, multi_scale_loss
from .network import NetworkParams, backward, forward
from .optim import OptimizerState, adam_step

log = logging.getLogger(__name__)


@dataclass
class PoseDataset:
    """Network-ready samples.

    ``inputs``: ``(N, C_in, r, r)``; ``targets``: one ``(N, K, h, w)`` array per head.
    """
    inputs: np.ndarray
    targets: list
    joints: np.ndarray  # (N, K, 2) at input resolution

    def __len__(self):
        return len(self.inputs)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.002
    lr_decay: float = 0.9
    decay_every: int = 8
    seed: int = 0


def head_targets(joints, cfg, gaussian: GaussianSpec) -> list:
    """Target stacks for every head of ``cfg`` from ``(K, 2)`` joints at input resolution."""
    r = cfg.input_resolution
    out = []
    for res in cfg.head_resolutions:
        j = level_coordinates(joints, (r, r), (res, res))
        out.append(encode_joint_set(j, res, res, gaussian, sigma=gaussian.sigma_at(res)))
    return out


def make_dataset(inputs, joints, cfg, gaussian: GaussianSpec) -> PoseDataset:
    inputs = np.asarray(inputs, dtype=float)
    joints = np.asarray(joints, dtype=float)
    if len(inputs) != len(joints):
        raise StructuralError(f"{len(inputs)} inputs but {len(joints)} joint sets")
    per_sample = [head_targets(j, cfg, gaussian) for j in joints]
    targets = [np.stack([s[h] for s in per_sample]) for h in range(len(cfg.head_resolutions))]
    return PoseDataset(inputs, targets, joints)


def loss_config(cfg) -> MultiScaleLossConfig:
    return MultiScaleLossConfig(tuple(cfg.head_weights[h] for h in cfg.active_heads))


def batch_loss(params: NetworkParams, x, targets: Sequence[np.ndarray]):
    """Per-sample mean multi-scale loss over the active heads, with gradients for all five heads."""
    cfg = params.config
    outputs, cache = forward(params, x)
    heads = cfg.active_heads
    res = multi_scale_loss([targets[h] for h in heads], [outputs[h] for h in heads], loss_config(cfg))
    n = len(x)
    grads = [None] * len(outputs)
    for h, g in zip(heads, res.gradient):
        grads[h] = g / n
    return res.value / n, grads, cache


def train(params: NetworkParams, dataset: PoseDataset, config: TrainConfig = TrainConfig(),
          state: OptimizerState | None = None):
    """Train in place on a copy of ``params``; returns ``(params, per-epoch mean loss trace)``.

    Shuffling uses ``config.seed`` so identical calls give identical traces.
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    params = params.copy()
    if state is None:
        state = OptimizerState(initial_lr=config.lr, decay=config.lr_decay, decay_every=config.decay_every)
    rng = np.random.default_rng(config.seed)
    trace = []
    n = len(dataset)
    for epoch in range(config.epochs):
        state.epoch = epoch
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads, cache = batch_loss(params, dataset.inputs[idx], [t[idx] for t in dataset.targets])
            adam_step(params.arrays, backward(params, cache, grads), state)
            total += value * len(idx)
        trace.append(total / n)
        log.debug("epoch %d lr %.3g loss %.6g", epoch, state.lr, trace[-1])
    return params, trace


def evaluate_loss(params: NetworkParams, dataset: PoseDataset, batch_size: int = 32) -> float:
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        sl = slice(start, start + batch_size)
        value, _, _ = batch_loss(params, dataset.inputs[sl], [t[sl] for t in dataset.targets])
        total += value * len(dataset.inputs[sl])
    return total / len(dataset)
