"""Versioned binary checkpoints.

Layout: the magic line ``HANDPOSE-NET\\n``, a big-endian uint32 header
length, a UTF-8 JSON header (format version, network config and the ordered
``name -> shape`` manifest), then every array as little-endian float64 in
header order. No timestamps, so identical parameters give identical bytes.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict

import numpy as np

from ..errors import FormatError, InvalidInputError
from .network import NetworkConfig, NetworkParams, expected_shapes

MAGIC = b"HANDPOSE-NET\n"
VERSION = 1


def dumps_params(params: NetworkParams, extra: dict | None = None) -> bytes:
    header = {
        "version": VERSION,
        "config": params.config.to_dict(),
        "arrays": [[name, list(a.shape)] for name, a in params.arrays.items()],
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays.values())
    return MAGIC + struct.pack(">I", len(hb)) + hb + body


def loads_params(data: bytes) -> NetworkParams:
    if not data.startswith(MAGIC):
        raise FormatError("not a handpose checkpoint (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise FormatError("truncated checkpoint header")
    (hlen,) = struct.unpack(">I", data[off:off + 4])
    off += 4
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    off += hlen
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')}")
    try:
        cfg = NetworkConfig(**header["config"])
        entries = [(str(n), tuple(int(d) for d in shp)) for n, shp in header["arrays"]]
    except (TypeError, KeyError, ValueError, InvalidInputError) as exc:
        raise FormatError(f"bad network config in checkpoint: {exc}") from exc
    want = expected_shapes(cfg)
    names = [n for n, _ in entries]
    if names != list(want):
        raise FormatError("checkpoint parameter names do not match the network layout")
    arrays = OrderedDict()
    for name, shape in entries:
        if shape != tuple(want[name]):
            raise FormatError(f"{name}: checkpoint shape {shape} does not match config shape {want[name]}")
        n = int(np.prod(shape)) * 8
        if off + n > len(data):
            raise FormatError(f"truncated checkpoint while reading {name}")
        arrays[name] = np.frombuffer(data[off:off + n], dtype="<f8").reshape(shape).astype(float)
        off += n
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes in checkpoint")
    return NetworkParams(cfg, arrays)


def save_params(params: NetworkParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_params(params))


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        return loads_params(fh.read())
