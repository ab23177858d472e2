from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import StructuralError, TrainingError


@dataclass
class OptimizerState:
    """Adam moments plus a step-decay learning-rate schedule.

    The rate is ``initial_lr * decay ** (epoch // decay_every)``.
    """
    initial_lr: float = 0.01
    decay: float = 0.9
    decay_every: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    epoch: int = 0
    m: dict = field(default_factory=OrderedDict)
    v: dict = field(default_factory=OrderedDict)

    @property
    def lr(self) -> float:
        return self.initial_lr * self.decay ** (self.epoch // self.decay_every)


def adam_step(arrays: dict, grads: dict, state: OptimizerState) -> None:
    """In-place Adam update of ``arrays``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} at step {state.step + 1}", step=state.step + 1)
        if g.shape != arrays[name].shape:
            raise StructuralError(f"gradient shape {g.shape} does not match parameter {name} {arrays[name].shape}")
    state.step += 1
    t = state.step
    lr = state.lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
