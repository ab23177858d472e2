"""Convolution primitives with hand-written backward passes (NCHW, float64)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.01


def im2col(xp: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    """Patches of a padded input as a ``(C*k*k, N*Ho*Wo)`` matrix."""
    n, c, h, w = xp.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)
    return cols, ho, wo


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patches back into an array of ``shape``."""
    n, c, h, w = shape
    out = np.zeros(shape)
    cols = cols.reshape(c, k, k, n, ho, wo).transpose(3, 0, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[:, :, i, j]
    return out


def conv2d(x, w, b, stride=1, pad=0):
    """``w``: ``(C_out, C_in, k, k)``."""
    c_out, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols, ho, wo = im2col(xp, k, stride)
    y = w.reshape(c_out, -1) @ cols + b[:, None]
    y = y.reshape(c_out, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(y), (cols, xp.shape, w, stride, pad, ho, wo)


def conv2d_backward(dy, cache):
    cols, xp_shape, w, stride, pad, ho, wo = cache
    c_out, _, k, _ = w.shape
    dy2 = dy.transpose(1, 0, 2, 3).reshape(c_out, -1)
    dw = (dy2 @ cols.T).reshape(w.shape)
    db = dy2.sum(axis=1)
    dxp = col2im(w.reshape(c_out, -1).T @ dy2, xp_shape, k, stride, ho, wo)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp, dw, db


def conv_transpose2d(x, w, b, stride=1, pad=0):
    """``w``: ``(C_in, C_out, k, k)``; output side ``(H - 1) * stride - 2 * pad + k``."""
    c_in, c_out, k, _ = w.shape
    n, _, h, wd = x.shape
    x2 = x.transpose(1, 0, 2, 3).reshape(c_in, -1)
    cols = w.reshape(c_in, -1).T @ x2
    full_shape = (n, c_out, (h - 1) * stride + k, (wd - 1) * stride + k)
    y = col2im(cols, full_shape, k, stride, h, wd)
    if pad:
        y = y[:, :, pad:-pad, pad:-pad]
    y = y + b[None, :, None, None]
    return np.ascontiguousarray(y), (x2, x.shape, w, stride, pad)


def conv_transpose2d_backward(dy, cache):
    x2, x_shape, w, stride, pad = cache
    c_in, c_out, k, _ = w.shape
    db = dy.sum(axis=(0, 2, 3))
    dyp = np.pad(dy, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else dy
    dcols, _, _ = im2col(dyp, k, stride)
    dw = (x2 @ dcols.T).reshape(w.shape)
    dx = (w.reshape(c_in, -1) @ dcols).reshape(c_in, x_shape[0], x_shape[2], x_shape[3]).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx), dw, db


def leaky_relu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_backward(dy, x):
    return np.where(x > 0, dy, LEAKY_SLOPE * dy)


def sigmoid(z):
    # +-36 keeps the output strictly inside (0, 1) in float64
    return 1.0 / (1.0 + np.exp(-np.clip(z, -36.0, 36.0)))
