"""Binary PGM (P5) and PPM (P6) with 8-bit samples."""
from __future__ import annotations

import os

import numpy as np

from ..errors import FormatError

_MAGIC = {b"P5": 1, b"P6": 3}
_WS = b" \t\n\r\x0b\x0c"


def _tokens(data: bytes, count: int):
    """First ``count`` header tokens plus the offset just after the last one."""
    toks, i, n = [], 0, len(data)
    while len(toks) < count:
        while i < n and (data[i] in _WS or data[i] == ord("#")):
            if data[i] == ord("#"):
                while i < n and data[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        start = i
        while i < n and data[i] not in _WS and data[i] != ord("#"):
            i += 1
        if start == i:
            raise FormatError("truncated header")
        toks.append(data[start:i])
    return toks, i


def decode_netpbm(data: bytes) -> np.ndarray:
    """Parse P5/P6 bytes into ``(H, W)`` or ``(H, W, 3)`` uint8."""
    if data[:2] not in _MAGIC:
        raise FormatError(f"bad magic {data[:2]!r}; expected P5 or P6")
    channels = _MAGIC[data[:2]]
    (_, w, h, maxval), off = _tokens(data, 4)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"non-numeric header field: {exc}") from exc
    if width < 1 or height < 1:
        raise FormatError(f"bad size {width}x{height}")
    if maxval != 255:
        raise FormatError(f"only 8-bit images (maxval 255) are supported, got {maxval}")
    if off >= len(data) or data[off] not in _WS:
        raise FormatError("missing whitespace after header")
    pixels = data[off + 1:]
    expected = width * height * channels
    if len(pixels) != expected:
        raise FormatError(f"expected {expected} sample bytes, found {len(pixels)}")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, channels)
    return arr[:, :, 0].copy() if channels == 1 else arr.copy()


def encode_netpbm(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise FormatError(f"image must be uint8, got {img.dtype}")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    return magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_image(image: np.ndarray, path) -> None:
    data = encode_netpbm(image)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to 8-bit samples."""
    return np.clip(np.round(np.asarray(values, dtype=float) * 255.0), 0, 255).astype(np.uint8)
