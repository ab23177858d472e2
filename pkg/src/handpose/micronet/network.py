"""Encoder-decoder heatmap regressor with five sigmoid heads.

Graph (``b`` = base channels, ``r`` = input resolution)::

    stem   conv3x3                  C_in -> b    r
    down1  residual, stride 2       b  -> 2b     r/2   head 0
    down2  residual, stride 2       2b -> 4b     r/4   head 1
    up1    residual, transposed x2  4b -> 2b     r/2   head 2   (+ down1)
    up2    residual, transposed x2  2b -> b      r     head 3   (+ stem)
    final  transposed conv3x3       b  -> b      r     head 4

Every head is a 1x1 convolution to ``K`` channels followed by a sigmoid.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError, InvalidStateError, StructuralError
from ..heatmap_codec import fuse_stacks, decode_stack
from ..losses import scale_weights
from .layers import (conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward,
                     leaky_relu, leaky_relu_backward, sigmoid)

HEAD_NAMES = ("down1", "down2", "up1", "up2", "final")
FULL_RES_HEAD = 4


@dataclass(frozen=True)
class NetworkConfig:
    joint_count: int = 21
    input_resolution: int = 32
    base_channels: int = 8
    use_skeleton: bool = True
    multi_scale: bool = True
    image_channels: int = 3
    unet_skips: bool = True

    def __post_init__(self):
        if self.joint_count < 1:
            raise InvalidInputError(f"joint_count must be >= 1, got {self.joint_count}")
        if self.input_resolution < 4 or self.input_resolution % 4:
            raise InvalidInputError(f"input_resolution must be a positive multiple of 4, got {self.input_resolution}")
        if self.base_channels < 1:
            raise InvalidInputError("base_channels must be >= 1")

    @property
    def input_channels(self) -> int:
        return self.image_channels + int(self.use_skeleton)

    @property
    def head_resolutions(self) -> tuple[int, ...]:
        r = self.input_resolution
        return (r // 2, r // 4, r // 2, r, r)

    @property
    def head_weights(self) -> tuple[float, ...]:
        return tuple(scale_weights(self.head_resolutions, self.input_resolution))

    @property
    def active_heads(self) -> tuple[int, ...]:
        """Heads that are supervised during training and fused at test time."""
        return tuple(range(5)) if self.multi_scale else (FULL_RES_HEAD,)

    @property
    def variant(self) -> str:
        if not self.multi_scale:
            return "single-scale"
        return "multi+skeleton" if self.use_skeleton else "multi"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class NetworkParams:
    config: NetworkConfig
    arrays: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, OrderedDict((k, v.copy()) for k, v in self.arrays.items()))

    def __getitem__(self, name):
        return self.arrays[name]

    def shapes(self) -> dict:
        return {k: tuple(v.shape) for k, v in self.arrays.items()}


def _layer_specs(cfg: NetworkConfig):
    """``name -> (kind, weight shape)``; transposed weights are ``(C_in, C_out, k, k)``."""
    b, cin, kj = cfg.base_channels, cfg.input_channels, cfg.joint_count
    specs = OrderedDict()
    specs["stem"] = ("conv", (b, cin, 3, 3))
    for name, ci, co in (("down1", b, 2 * b), ("down2", 2 * b, 4 * b)):
        specs[f"{name}.conv1"] = ("conv", (co, ci, 3, 3))
        specs[f"{name}.conv2"] = ("conv", (co, co, 3, 3))
        specs[f"{name}.skip"] = ("conv", (co, ci, 1, 1))
    for name, ci, co in (("up1", 4 * b, 2 * b), ("up2", 2 * b, b)):
        specs[f"{name}.conv1"] = ("tconv", (ci, co, 4, 4))
        specs[f"{name}.conv2"] = ("conv", (co, co, 3, 3))
        specs[f"{name}.skip"] = ("tconv", (ci, co, 2, 2))
    specs["final"] = ("tconv", (b, b, 3, 3))
    for name, c in zip(HEAD_NAMES, (2 * b, 4 * b, 2 * b, b, b)):
        specs[f"head.{name}"] = ("head", (kj, c, 1, 1))
    return specs


def expected_shapes(cfg: NetworkConfig) -> dict:
    shapes = {}
    for name, (kind, wshape) in _layer_specs(cfg).items():
        shapes[f"{name}.w"] = wshape
        shapes[f"{name}.b"] = (wshape[1] if kind == "tconv" else wshape[0],)
    return shapes


def head_prior_bias(resolution: int) -> float:
    """Logit of one-peak-per-map occupancy, ``logit(1 / resolution**2)``."""
    pi = 1.0 / (resolution * resolution)
    return float(np.log(pi / (1.0 - pi)))


def build_network(cfg: NetworkConfig, seed: int = 0, head_bias: str = "prior") -> NetworkParams:
    """Deterministic parameters.

    Trunk weights are He-uniform, trunk biases zero, head weights zero. Head
    biases start at :func:`head_prior_bias` (``head_bias="prior"``) or at zero
    (``head_bias="zero"``, every output exactly 0.5).
    """
    if head_bias not in ("prior", "zero"):
        raise InvalidInputError(f"unknown head_bias mode {head_bias!r}")
    rng = np.random.default_rng(seed)
    arrays = OrderedDict()
    head_res = dict(zip(HEAD_NAMES, cfg.head_resolutions))
    for name, (kind, wshape) in _layer_specs(cfg).items():
        if kind == "head":
            w = np.zeros(wshape)
            arrays[f"{name}.w"] = w
            bias = head_prior_bias(head_res[name.split(".")[1]]) if head_bias == "prior" else 0.0
            arrays[f"{name}.b"] = np.full(wshape[0], bias)
            continue
        elif kind == "conv":
            fan_in = wshape[1] * wshape[2] * wshape[3]
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=wshape)
            nb = wshape[0]
        else:
            stride = 1 if name == "final" else 2
            fan_in = wshape[0] * wshape[2] * wshape[3] / stride ** 2
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=wshape)
            nb = wshape[1]
        arrays[f"{name}.w"] = w
        arrays[f"{name}.b"] = np.zeros(nb)
    return NetworkParams(cfg, arrays)


def _down_block(p, name, x):
    z1, c1 = conv2d(x, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"], stride=2, pad=1)
    a1 = leaky_relu(z1)
    z2, c2 = conv2d(a1, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"], stride=1, pad=1)
    zs, cs = conv2d(x, p[f"{name}.skip.w"], p[f"{name}.skip.b"], stride=2, pad=0)
    s = z2 + zs
    return leaky_relu(s), (c1, z1, c2, cs, s)


def _down_block_backward(name, dy, cache, grads):
    c1, z1, c2, cs, s = cache
    ds = leaky_relu_backward(dy, s)
    da1, grads[f"{name}.conv2.w"], grads[f"{name}.conv2.b"] = conv2d_backward(ds, c2)
    dxs, grads[f"{name}.skip.w"], grads[f"{name}.skip.b"] = conv2d_backward(ds, cs)
    dx, grads[f"{name}.conv1.w"], grads[f"{name}.conv1.b"] = conv2d_backward(leaky_relu_backward(da1, z1), c1)
    return dx + dxs


def _up_block(p, name, x):
    z1, c1 = conv_transpose2d(x, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"], stride=2, pad=1)
    a1 = leaky_relu(z1)
    z2, c2 = conv2d(a1, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"], stride=1, pad=1)
    zs, cs = conv_transpose2d(x, p[f"{name}.skip.w"], p[f"{name}.skip.b"], stride=2, pad=0)
    s = z2 + zs
    return leaky_relu(s), (c1, z1, c2, cs, s)


def _up_block_backward(name, dy, cache, grads):
    c1, z1, c2, cs, s = cache
    ds = leaky_relu_backward(dy, s)
    da1, grads[f"{name}.conv2.w"], grads[f"{name}.conv2.b"] = conv2d_backward(ds, c2)
    dxs, grads[f"{name}.skip.w"], grads[f"{name}.skip.b"] = conv_transpose2d_backward(ds, cs)
    dx, grads[f"{name}.conv1.w"], grads[f"{name}.conv1.b"] = conv_transpose2d_backward(leaky_relu_backward(da1, z1), c1)
    return dx + dxs


class ForwardCache:
    def __init__(self, entries: dict, outputs: list):
        self.entries = entries
        self.outputs = outputs


def forward(params: NetworkParams, x: np.ndarray):
    """Run the network on an ``(N, C_in, r, r)`` batch.

    Returns the five head outputs (each ``(N, K, h, w)`` in (0, 1)) and the
    cache needed by :func:`backward`.
    """
    cfg = params.config
    x = np.asarray(x, dtype=float)
    r = cfg.input_resolution
    if x.ndim != 4 or x.shape[1:] != (cfg.input_channels, r, r):
        raise StructuralError(f"expected input (N, {cfg.input_channels}, {r}, {r}), got {x.shape}")
    p = params.arrays
    z0, c_stem = conv2d(x, p["stem.w"], p["stem.b"], stride=1, pad=1)
    f0 = leaky_relu(z0)
    f1, c_d1 = _down_block(p, "down1", f0)
    f2, c_d2 = _down_block(p, "down2", f1)
    f3, c_u1 = _up_block(p, "up1", f2)
    if cfg.unet_skips:
        f3 = f3 + f1
    f4, c_u2 = _up_block(p, "up2", f3)
    if cfg.unet_skips:
        f4 = f4 + f0
    z5, c_fin = conv_transpose2d(f4, p["final.w"], p["final.b"], stride=1, pad=1)
    f5 = leaky_relu(z5)

    outputs, head_caches = [], []
    for name, feat in zip(HEAD_NAMES, (f1, f2, f3, f4, f5)):
        logits, ch = conv2d(feat, p[f"head.{name}.w"], p[f"head.{name}.b"])
        out = sigmoid(logits)
        outputs.append(out)
        head_caches.append((ch, out))
    entries = dict(stem=(c_stem, z0), d1=c_d1, d2=c_d2, u1=c_u1, u2=c_u2, final=(c_fin, z5), heads=head_caches)
    return outputs, ForwardCache(entries, outputs)


def backward(params: NetworkParams, cache: ForwardCache | None, output_grads) -> "OrderedDict[str, np.ndarray]":
    """Parameter gradients given d(loss)/d(head output) for each of the five heads.

    ``None`` entries in ``output_grads`` mean the head is unsupervised.
    """
    if cache is None or not isinstance(cache, ForwardCache):
        raise InvalidStateError("backward called without a forward cache")
    if len(output_grads) != len(HEAD_NAMES):
        raise StructuralError(f"expected {len(HEAD_NAMES)} output gradients, got {len(output_grads)}")
    cfg = params.config
    e = cache.entries
    grads: dict = {}
    dfeat = []
    for name, g, (ch, out) in zip(HEAD_NAMES, output_grads, e["heads"]):
        if g is None:
            g = np.zeros_like(out)
        if g.shape != out.shape:
            raise StructuralError(f"gradient for head {name} has shape {g.shape}, expected {out.shape}")
        dlogit = g * out * (1.0 - out)
        df, grads[f"head.{name}.w"], grads[f"head.{name}.b"] = conv2d_backward(dlogit, ch)
        dfeat.append(df)
    d1, d2, d3, d4, d5 = dfeat

    c_fin, z5 = e["final"]
    dz5 = leaky_relu_backward(d5, z5)
    df4, grads["final.w"], grads["final.b"] = conv_transpose2d_backward(dz5, c_fin)
    d4 = d4 + df4
    df3 = _up_block_backward("up2", d4, e["u2"], grads)
    d3 = d3 + df3
    df2 = _up_block_backward("up1", d3, e["u1"], grads)
    d2 = d2 + df2
    df1 = _down_block_backward("down2", d2, e["d2"], grads)
    d1 = d1 + df1
    if cfg.unet_skips:
        d1 = d1 + d3
    df0 = _down_block_backward("down1", d1, e["d1"], grads)
    if cfg.unet_skips:
        df0 = df0 + d4
    c_stem, z0 = e["stem"]
    _, grads["stem.w"], grads["stem.b"] = conv2d_backward(leaky_relu_backward(df0, z0), c_stem)
    return OrderedDict((k, grads[k]) for k in params.arrays)


def prepare_input(image, skeleton=None, use_skeleton: bool = True) -> np.ndarray:
    """``(H, W, C)`` image in [0, 255] (plus optional skeleton in [0, 1]) -> ``(C_in, H, W)``.

    Image channels are scaled to [0, 1] and each has its own mean subtracted.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    img = img / 255.0
    img = img - img.mean(axis=(0, 1), keepdims=True)
    chans = [np.moveaxis(img, -1, 0)]
    if use_skeleton:
        if skeleton is None:
            raise InvalidInputError("this network is conditioned on a skeleton image but none was given")
        skel = np.asarray(skeleton, dtype=float)
        if skel.shape != img.shape[:2]:
            raise StructuralError(f"skeleton shape {skel.shape} does not match image {img.shape[:2]}")
        chans.append(skel[None])
    return np.concatenate(chans, axis=0)


def fused_joints(params: NetworkParams, outputs, index: int = 0) -> np.ndarray:
    cfg = params.config
    heads = cfg.active_heads
    return decode_stack(fuse_stacks([outputs[h][index] for h in heads], [cfg.head_weights[h] for h in heads]))


def predict_joints(params: NetworkParams, image, skeleton=None) -> np.ndarray:
    """Joint set ``(K, 2)`` for one image at the network's input resolution."""
    cfg = params.config
    x = prepare_input(image, skeleton, cfg.use_skeleton)
    outputs, _ = forward(params, x[None])
    return fused_joints(params, outputs)
