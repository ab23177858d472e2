"""Pinhole projection, PnP extrinsic calibration and sensor stream synchronisation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import (BehindCameraError, DegenerateInputError, FormatError, InvalidInputError,
                     NonConvergenceError)

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Extrinsics:
    """Rigid transform from sensor frame to camera frame: ``X_cam = R @ X + t``."""
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise InvalidInputError("R is not a proper rotation matrix")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.R.ravel(), self.t])


@dataclass(frozen=True)
class Correspondence:
    p3d: tuple
    p2d: tuple


@dataclass(frozen=True)
class TimedSample:
    timestamp: float
    payload_id: Hashable = None


def rodrigues(w) -> np.ndarray:
    """Rotation matrix for an axis-angle vector."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    k = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-12:
        return np.eye(3) + k
    k /= theta
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def nearest_rotation(m) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _camera_points(points, extr: Extrinsics) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 3) @ extr.R.T + extr.t


def project_points(points, intr: Intrinsics, extr: Extrinsics) -> np.ndarray:
    """Project ``(N, 3)`` sensor-frame points to ``(N, 2)`` pixels."""
    pc = _camera_points(points, extr)
    bad = np.nonzero(pc[:, 2] <= 0)[0]
    if len(bad):
        raise BehindCameraError(f"point {bad[0]} is behind the camera (z={pc[bad[0], 2]:.6g})", index=int(bad[0]))
    return np.stack([intr.fx * pc[:, 0] / pc[:, 2] + intr.cx, intr.fy * pc[:, 1] / pc[:, 2] + intr.cy], axis=1)


def project_point(p3d, intr: Intrinsics, extr: Extrinsics) -> tuple[float, float]:
    u, v = project_points([p3d], intr, extr)[0]
    return float(u), float(v)


def project_joint_set(joints3d, intr: Intrinsics, extr: Extrinsics) -> np.ndarray:
    """2-D annotations for 3-D joints; the error names the first joint behind the camera."""
    try:
        return project_points(joints3d, intr, extr)
    except BehindCameraError as exc:
        raise BehindCameraError(f"joint {exc.index} projects from behind the camera", index=exc.index) from exc


def _similarity_normalizer(pts: np.ndarray) -> np.ndarray:
    """Homogeneous transform that centres points and scales their mean distance to sqrt(dim)."""
    dim = pts.shape[1]
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(dim) / d if d > 0 else 1.0
    T = np.eye(dim + 1)
    T[:dim, :dim] *= s
    T[:dim, dim] = -s * c
    return T


def dlt_pose(p3d: np.ndarray, xn: np.ndarray) -> Extrinsics:
    """Linear pose from 3-D points and normalised image coordinates ``K^-1 [u v 1]``."""
    n = len(p3d)
    T3 = _similarity_normalizer(p3d)
    T2 = _similarity_normalizer(xn)
    X = (T3 @ np.c_[p3d, np.ones(n)].T).T
    x = (T2 @ np.c_[xn, np.ones(n)].T).T
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = X
    A[0::2, 8:12] = -x[:, [0]] * X
    A[1::2, 4:8] = X
    A[1::2, 8:12] = -x[:, [1]] * X
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-8 * s[0]:
        raise DegenerateInputError("degenerate point configuration: DLT system is rank deficient")
    P = np.linalg.inv(T2) @ vt[-1].reshape(3, 4) @ T3
    M = P[:, :3]
    if np.linalg.det(M) < 0:
        P = -P
        M = -M
    scale = np.linalg.svd(M, compute_uv=False).mean()
    return Extrinsics(nearest_rotation(M), P[:, 3] / scale)


def _residuals(p3d, uv, intr, R, t):
    pc = p3d @ R.T + t
    z = pc[:, 2]
    proj = np.stack([intr.fx * pc[:, 0] / z + intr.cx, intr.fy * pc[:, 1] / z + intr.cy], axis=1)
    return (proj - uv).ravel(), pc


def _jacobian(p3d, intr, R, pc):
    """d(residual)/d(omega, dt) for the update ``R <- exp(omega) R``, ``t <- t + dt``."""
    n = len(p3d)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = intr.fx / z
    dproj[:, 0, 2] = -intr.fx * x / z ** 2
    dproj[:, 1, 1] = intr.fy / z
    dproj[:, 1, 2] = -intr.fy * y / z ** 2
    rp = p3d @ R.T
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1], skew[:, 0, 2] = -rp[:, 2], rp[:, 1]
    skew[:, 1, 0], skew[:, 1, 2] = rp[:, 2], -rp[:, 0]
    skew[:, 2, 0], skew[:, 2, 1] = -rp[:, 1], rp[:, 0]
    dpc = np.concatenate([-skew, np.broadcast_to(np.eye(3), (n, 3, 3))], axis=2)  # (n, 3, 6)
    return np.einsum("nij,njk->nik", dproj, dpc).reshape(2 * n, 6)


def refine_pose(p3d, uv, intr: Intrinsics, init: Extrinsics, max_iter: int = 100, tol: float = 1e-12):
    """Gauss-Newton on squared reprojection error with step-halving.

    Returns ``(extrinsics, cost history)``. The cost never increases between
    accepted iterates.
    """
    R, t = init.R.copy(), init.t.copy()
    r, pc = _residuals(p3d, uv, intr, R, t)
    cost = float(r @ r)
    history = [cost]
    for it in range(max_iter):
        J = _jacobian(p3d, intr, R, pc)
        delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        step = 1.0
        accepted = False
        while step > 1e-10:
            Rn = rodrigues(step * delta[:3]) @ R
            tn = t + step * delta[3:]
            rn, pcn = _residuals(p3d, uv, intr, Rn, tn)
            cn = float(rn @ rn)
            if np.all(pcn[:, 2] > 0) and np.isfinite(cn) and cn <= cost:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        decrease = cost - cn
        R, t, r, pc, cost = nearest_rotation(Rn), tn, rn, pcn, cn
        history.append(cost)
        if decrease < tol:
            break
    else:
        log.debug("Gauss-Newton stopped at max_iter=%d with cost %.3g", max_iter, cost)
    if not np.isfinite(cost):
        raise NonConvergenceError("PnP refinement diverged", last_iterate=Extrinsics(R, t))
    return Extrinsics(R, t), history


def solve_pnp(correspondences, intr: Intrinsics) -> Extrinsics:
    """Extrinsics from at least six 3-D/2-D correspondences (DLT then Gauss-Newton).

    ``correspondences`` is a sequence of :class:`Correspondence` or an
    ``(N, 5)`` array of ``X Y Z u v`` rows.
    """
    p3d, uv = _split_correspondences(correspondences)
    if len(p3d) < 6:
        raise InvalidInputError(f"PnP needs at least 6 correspondences, got {len(p3d)}")
    xn = np.stack([(uv[:, 0] - intr.cx) / intr.fx, (uv[:, 1] - intr.cy) / intr.fy], axis=1)
    init = dlt_pose(p3d, xn)
    extr, _ = refine_pose(p3d, uv, intr, init)
    return extr


def _split_correspondences(correspondences):
    if isinstance(correspondences, np.ndarray):
        arr = np.asarray(correspondences, dtype=float).reshape(-1, 5)
        return arr[:, :3], arr[:, 3:]
    p3d = np.array([c.p3d for c in correspondences], dtype=float).reshape(-1, 3)
    uv = np.array([c.p2d for c in correspondences], dtype=float).reshape(-1, 2)
    return p3d, uv


def reprojection_rms(p3d, uv, intr: Intrinsics, extr: Extrinsics) -> float:
    d = project_points(p3d, intr, extr) - np.asarray(uv, dtype=float)
    return float(np.sqrt((d ** 2).sum(axis=1).mean()))


def synchronize_streams(a: Sequence[TimedSample], b: Sequence[TimedSample], tolerance: float):
    """Greedy nearest-timestamp pairing of two sorted streams.

    Walks ``a`` in order and pairs each sample with the closest unused
    sample of ``b`` that lies after the previous match, so pairs never
    cross. Pairs further apart than ``tolerance`` are dropped.
    """
    for name, stream in (("a", a), ("b", b)):
        ts = [s.timestamp for s in stream]
        if any(t1 < t0 for t0, t1 in zip(ts, ts[1:])):
            raise InvalidInputError(f"stream {name} is not sorted by timestamp")
    pairs = []
    j = 0
    for sa in a:
        # b samples too early for this a are too early for every later a as well
        while j < len(b) and b[j].timestamp < sa.timestamp - tolerance:
            j += 1
        if j == len(b):
            break
        k = j
        while k + 1 < len(b) and abs(b[k + 1].timestamp - sa.timestamp) < abs(b[k].timestamp - sa.timestamp):
            k += 1
        if abs(b[k].timestamp - sa.timestamp) <= tolerance:
            pairs.append((sa, b[k]))
            j = k + 1
    return pairs


def read_correspondences(path) -> np.ndarray:
    return _read_rows(path, 5, "correspondence")


def read_intrinsics(path) -> Intrinsics:
    rows = _read_rows(path, 4, "intrinsics")
    if len(rows) != 1:
        raise FormatError(f"intrinsics file must hold exactly one 'fx fy cx cy' line, found {len(rows)}")
    return Intrinsics(*map(float, rows[0]))


def read_extrinsics(path) -> Extrinsics:
    with open(path, encoding="utf-8") as fh:
        vals = fh.read().split()
    if len(vals) != 12:
        raise FormatError(f"extrinsics file must hold 12 numbers, found {len(vals)}")
    try:
        v = np.array([float(x) for x in vals])
    except ValueError as exc:
        raise FormatError(f"bad number in extrinsics file: {exc}") from exc
    return Extrinsics(nearest_rotation(v[:9].reshape(3, 3)), v[9:])


def format_extrinsics(extr: Extrinsics) -> str:
    R, t = extr.R, extr.t
    lines = [" ".join(f"{x:.17g}" for x in row) for row in R]
    lines.append(" ".join(f"{x:.17g}" for x in t))
    return "\n".join(lines) + "\n"


def read_points(path, dim: int) -> np.ndarray:
    return _read_rows(path, dim, "point")


def _read_rows(path, ncols: int, what: str) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != ncols:
                raise FormatError(f"{what} line needs {ncols} numbers, got {len(parts)}", line=lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(str(exc), line=lineno) from exc
    return np.array(rows, dtype=float).reshape(-1, ncols)
