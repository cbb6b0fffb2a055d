"""Projective-geometry primitives for calibrated pinhole cameras.

Conventions:
    A camera maps a world point ``x`` to camera coordinates ``R @ x + T`` and
    to pixels through ``K``. Pixel points are plain length-2 arrays and 3D
    points plain length-3 arrays; homogeneous lines are length-3 arrays
    ``[a, b, c]`` describing ``a*x + b*y + c = 0``.

    ``fundamental_matrix(a, b)`` maps a pixel in view ``b`` to its epipolar
    line in view ``a``, so exact projections satisfy ``xa^T F xb = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from cdog.errors import BehindCamera, DegenerateConfiguration, DegenerateLine, DegenerateRig

ORTHO_TOL = 1e-9
CENTER_TOL = 1e-9
LINE_TOL = 1e-12
DEPTH_TOL = 1e-9
SINGULAR_GAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Intrinsics and world-to-camera extrinsics for one view.

    Attributes:
        view_id: Index of the view within its rig.
        K: 3x3 upper-triangular intrinsic matrix in pixels.
        R: 3x3 rotation, world to camera.
        T: Translation, world to camera, shape (3,).
    """

    view_id: int
    K: np.ndarray
    R: np.ndarray
    T: np.ndarray
    _P: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=float).reshape(3, 3)
        R = np.array(self.R, dtype=float).reshape(3, 3)
        T = np.array(self.T, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError(f"view {self.view_id}: R is not a proper rotation")
        if np.abs(np.tril(K, -1)).max() > 0 or np.any(np.diag(K) <= 0):
            raise ValueError(f"view {self.view_id}: K must be upper triangular with positive diagonal")
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(T))):
            raise ValueError(f"view {self.view_id}: non-finite camera parameters")
        for name, arr in (("K", K), ("R", R), ("T", T)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        P = K @ np.hstack([R, T[:, None]])
        P.setflags(write=False)
        object.__setattr__(self, "_P", P)

    @property
    def P(self) -> np.ndarray:
        """3x4 projection matrix ``K [R | T]``."""
        return self._P

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.T

    def same_as(self, other: CameraPose) -> bool:
        return (
            self.view_id == other.view_id
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.T, other.T)
        )


def skew(v: Sequence[float]) -> np.ndarray:
    """Cross-product matrix ``[v]_x`` so that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def relative_pose(a: CameraPose, b: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Pose of frame ``b`` relative to frame ``a``: ``x_b = R_rel x_a + T_rel``."""
    R_rel = b.R @ a.R.T
    T_rel = b.T - R_rel @ a.T
    return R_rel, T_rel


def fundamental_matrix(a: CameraPose, b: CameraPose) -> np.ndarray:
    """Fundamental matrix taking a pixel in view ``b`` to a line in view ``a``.

    The result has unit Frobenius norm. ``fundamental_matrix(b, a)`` equals its
    transpose up to sign.

    Raises:
        DegenerateRig: if the two camera centers coincide.
    """
    if np.linalg.norm(a.center - b.center) <= CENTER_TOL:
        raise DegenerateRig(f"views {a.view_id} and {b.view_id} share a camera center")
    R_rel, T_rel = relative_pose(a, b)
    # x_a^T R_rel^T [T_rel]_x x_b = 0 for camera-frame rays of one world point.
    E = R_rel.T @ skew(T_rel)
    F = np.linalg.inv(a.K).T @ E @ np.linalg.inv(b.K)
    return F / np.linalg.norm(F)


def homogeneous(xy: np.ndarray) -> np.ndarray:
    """Append a unit coordinate along the last axis."""
    xy = np.asarray(xy, dtype=float)
    return np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)


def epipolar_line(F: np.ndarray, p: Sequence[float]) -> np.ndarray:
    """Epipolar line ``F @ [x, y, 1]``.

    Raises:
        DegenerateLine: if ``p`` maps to the line at infinity (it is the epipole).
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    line = np.asarray(F, dtype=float) @ homogeneous(p)
    if abs(line[0]) < LINE_TOL and abs(line[1]) < LINE_TOL:
        raise DegenerateLine(f"point {p.tolist()} is the epipole")
    return line


def epipolar_distance(line: Sequence[float], p: Sequence[float]) -> float:
    """Unsigned pixel distance from ``p`` to ``line``."""
    a, b, c = np.asarray(line, dtype=float)
    norm = np.hypot(a, b)
    if norm == 0.0:
        raise DegenerateLine("line has a = b = 0")
    x, y = np.asarray(p, dtype=float)
    return float(abs(a * x + b * y + c) / norm)


def epipolar_distance_matrix(F: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distances from every ``dst`` pixel to the line of every ``src`` pixel.

    ``F`` must map ``src`` points to lines in the ``dst`` image. Rows index
    ``src``, columns ``dst``. Rows whose line is degenerate are ``inf``.
    """
    lines = homogeneous(src) @ np.asarray(F).T
    norms = np.hypot(lines[:, 0], lines[:, 1])
    num = np.abs(lines @ homogeneous(dst).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / norms[:, None]
    d[norms < LINE_TOL] = np.inf
    return d


def signed_epipolar_residuals(F: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Signed distance of ``dst[k]`` to the line of ``src[k]`` (paired rows)."""
    lines = homogeneous(src) @ np.asarray(F).T
    return np.einsum("ij,ij->i", lines, homogeneous(dst)) / np.hypot(lines[:, 0], lines[:, 1])


def project(cam: CameraPose, r: Sequence[float]) -> np.ndarray:
    """Pixel coordinates of world point ``r``.

    Raises:
        BehindCamera: if the point's depth is not positive.
    """
    r = np.asarray(r, dtype=float)
    xc = cam.R @ r + cam.T
    if xc[2] <= DEPTH_TOL:
        raise BehindCamera(f"point {r.tolist()} has depth {xc[2]:.3g} in view {cam.view_id}")
    uvw = cam.K @ xc
    return uvw[:2] / uvw[2]


def project_many(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Project points without depth checks.

    Args:
        P: Projection matrices, shape (..., 3, 4).
        X: World points broadcastable against ``P``, shape (..., 3).

    Returns:
        Pixel coordinates, shape (..., 2).
    """
    uvw = np.einsum("...ij,...j->...i", P[..., :3], X) + P[..., 3]
    return uvw[..., :2] / uvw[..., 2:3]


def _dlt_rows(P: np.ndarray, xy: np.ndarray) -> np.ndarray:
    # x * P3 - P1 and y * P3 - P2, normalised per row for conditioning.
    rows = np.concatenate(
        [xy[..., 0:1, None] * P[..., 2:3, :] - P[..., 0:1, :],
         xy[..., 1:2, None] * P[..., 2:3, :] - P[..., 1:2, :]],
        axis=-2,
    )
    return rows / np.linalg.norm(rows, axis=-1, keepdims=True)


def triangulate_batch(P: np.ndarray, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous DLT for a batch of point tracks.

    Args:
        P: Projection matrices, shape (B, V, 3, 4).
        xy: Observed pixels, shape (B, V, 2).

    Returns:
        ``(points, ok)``: world points of shape (B, 3) and a boolean mask that
        is False where the solution is rank deficient or at infinity.
    """
    B, V = xy.shape[:2]
    A = _dlt_rows(P, xy).reshape(B, 2 * V, 4)
    _, s, vt = np.linalg.svd(A)
    Xh = vt[:, -1, :]
    gap = (s[:, -2] - s[:, -1]) / s[:, 0]
    w = Xh[:, 3]
    ok = (gap >= SINGULAR_GAP_TOL) & (np.abs(w) > 1e-15)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = Xh[:, :3] / w[:, None]
    return X, ok


def triangulate(cams: Sequence[CameraPose], pts: Sequence[Sequence[float]]) -> np.ndarray:
    """Least-squares 3D point from two or more calibrated observations.

    Raises:
        DegenerateConfiguration: for fewer than two views, repeated views, or
            (near-)parallel rays.
    """
    if len(cams) != len(pts):
        raise ValueError("cameras and points must align")
    if len(cams) < 2:
        raise DegenerateConfiguration("need at least two views")
    if len({c.view_id for c in cams}) != len(cams):
        raise DegenerateConfiguration("views must be distinct")
    P = np.stack([c.P for c in cams])[None]
    xy = np.asarray(pts, dtype=float).reshape(1, len(cams), 2)
    X, ok = triangulate_batch(P, xy)
    if not ok[0]:
        raise DegenerateConfiguration("rays are parallel or the solution is at infinity")
    return X[0]


def back_projection_error(cams: Sequence[CameraPose], pts: Sequence[Sequence[float]], r_hat: Sequence[float]) -> float:
    """Mean squared pixel distance between observations and reprojections of ``r_hat``."""
    if len(cams) == 0 or len(cams) != len(pts):
        raise ValueError("cameras and points must be aligned and nonempty")
    errs = [float(np.sum((project(c, r_hat) - np.asarray(p, dtype=float)) ** 2)) for c, p in zip(cams, pts)]
    return float(np.mean(errs))


def back_projection_rms(cams: Sequence[CameraPose], pts: Sequence[Sequence[float]], r_hat: Sequence[float]) -> float:
    """Root of :func:`back_projection_error`, in pixels."""
    return float(np.sqrt(back_projection_error(cams, pts, r_hat)))
