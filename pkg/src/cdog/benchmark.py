"""Deterministic synthetic multi-view benchmark.

Every scene is a pure function of its parameters: random 3D points are drawn
uniformly inside a box, projected into every camera of a ring rig, perturbed
by independent per-axis Gaussian pixel noise and shuffled per view.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from cdog.errors import BehindCamera
from cdog.geometry import CameraPose, project_many
from cdog.rng import Xoshiro256pp, derive_seed
from cdog.scene import Scene

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = ((-100.0, 100.0), (-100.0, 100.0), (-100.0, 100.0))


def default_point_counts() -> list[int]:
    return list(range(1, 21)) + list(range(25, 131, 5))


def default_sigmas() -> list[float]:
    return [0.25 * k for k in range(21)]


@dataclass(frozen=True)
class RigSpec:
    """Ring of inward-looking cameras.

    Camera ``k`` sits at azimuth ``2*pi*k/n`` on a circle of ``radius`` around
    ``look_at``, raised by ``elevation`` radians plus a seeded jitter drawn
    uniformly from ``[-elevation_jitter, elevation_jitter]``.
    """

    n_cameras: int = 10
    radius: float = 500.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    focal_px: float = 800.0
    principal_point: tuple[float, float] = (640.0, 360.0)
    image_size: tuple[int, int] = (1280, 720)
    elevation: float = 0.3
    elevation_jitter: float = 0.1

    def __post_init__(self):
        if self.n_cameras < 2:
            raise ValueError("a rig needs at least two cameras")
        if self.focal_px <= 0 or self.radius <= 0:
            raise ValueError("focal length and radius must be positive")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> RigSpec:
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("look_at", "principal_point", "image_size"):
            if k in known:
                known[k] = tuple(known[k])
        return cls(**known)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Sweep over instance counts, noise levels and batches."""

    point_counts: tuple[int, ...] = field(default_factory=lambda: tuple(default_point_counts()))
    sigmas: tuple[float, ...] = field(default_factory=lambda: tuple(default_sigmas()))
    batches: int = 5
    seed: int = 0
    keep_views: int | None = None
    bounds: tuple[tuple[float, float], ...] = DEFAULT_BOUNDS
    min_separation_px: float = 0.0

    def __post_init__(self):
        if any(c < 1 for c in self.point_counts):
            raise ValueError("point counts must be >= 1")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be >= 0")
        if self.batches < 1:
            raise ValueError("batches must be >= 1")

    def scene_seed(self, count: int, batch: int, sigma: float) -> int:
        return derive_seed(self.seed, count, batch, float(sigma))

    def total_points_per_sigma(self) -> int:
        return self.batches * sum(self.point_counts)


def _look_at_rotation(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - center
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    # Rows are the camera axes: x right, y down, z forward.
    return np.vstack([right, down, forward])


def make_rig(spec: RigSpec | None = None, seed: int = 0) -> list[CameraPose]:
    """Cameras evenly spaced on a circle, all aimed at ``spec.look_at``."""
    spec = spec or RigSpec()
    rng = Xoshiro256pp(derive_seed("rig", seed))
    target = np.asarray(spec.look_at, dtype=float)
    K = np.array(
        [[spec.focal_px, 0.0, spec.principal_point[0]],
         [0.0, spec.focal_px, spec.principal_point[1]],
         [0.0, 0.0, 1.0]]
    )
    cams = []
    for k in range(spec.n_cameras):
        azimuth = 2.0 * math.pi * k / spec.n_cameras
        elev = spec.elevation + rng.uniform(-spec.elevation_jitter, spec.elevation_jitter)
        offset = spec.radius * np.array(
            [math.cos(azimuth) * math.cos(elev), math.sin(azimuth) * math.cos(elev), math.sin(elev)]
        )
        center = target + offset
        R = _look_at_rotation(center, target)
        # Re-orthonormalise to machine precision.
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        cams.append(CameraPose(view_id=k, K=K, R=R, T=-R @ center))
    return cams


def _box_corners(bounds) -> np.ndarray:
    (x0, x1), (y0, y1), (z0, z1) = bounds
    return np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)], dtype=float)


def generate_scene(
    n_points: int,
    cameras: list[CameraPose],
    bounds=DEFAULT_BOUNDS,
    sigma: float = 0.0,
    seed: int = 0,
    min_separation_px: float = 0.0,
    max_tries: int = 10_000,
) -> Scene:
    """Sample ``n_points`` instances and observe them in every camera.

    Draw order: three uniforms per point (x, y, z), then for each view in
    order one Gaussian pair per point, then one shuffle per view.

    Args:
        min_separation_px: When positive, reject candidate points whose exact
            projection lands within this distance of an accepted point's in
            any view, which keeps instances off each other's viewing rays.

    Raises:
        BehindCamera: if any corner of ``bounds`` has non-positive depth.
    """
    if n_points < 1 or sigma < 0:
        raise ValueError("need n_points >= 1 and sigma >= 0")
    P = np.stack([c.P for c in cameras])
    corners = _box_corners(bounds)
    for c in cameras:
        depth = corners @ c.R[2] + c.T[2]
        if np.any(depth <= 0):
            raise BehindCamera(f"bounding box crosses the image plane of view {c.view_id}")

    rng = Xoshiro256pp(seed)
    pts: list[np.ndarray] = []
    proj: list[np.ndarray] = []
    tries = 0
    while len(pts) < n_points:
        cand = np.array([rng.uniform(lo, hi) for lo, hi in bounds])
        uv = project_many(P, cand[None, :])
        tries += 1
        if min_separation_px > 0 and proj:
            nearest = np.linalg.norm(np.stack(proj) - uv[None], axis=-1).min()
            if nearest < min_separation_px:
                if tries > max_tries:
                    raise RuntimeError("could not place points with the requested separation")
                continue
        pts.append(cand)
        proj.append(uv)
    gt = np.stack(pts)
    exact = np.stack(proj, axis=1)  # (views, points, 2)

    observations, labels = {}, {}
    for v, cam in enumerate(cameras):
        noisy = exact[v].copy()
        if sigma > 0:
            for i in range(n_points):
                noisy[i, 0] += rng.gauss(sigma)
                noisy[i, 1] += rng.gauss(sigma)
        order = rng.sample(list(range(n_points)), n_points)
        observations[cam.view_id] = noisy[order]
        labels[cam.view_id] = np.array(order, dtype=np.int64)
    return Scene(cameras=list(cameras), observations=observations, gt_points=gt,
                 gt_labels=labels, sigma=float(sigma), seed=seed)


def drop_views(scene: Scene, keep: int, seed: int) -> Scene:
    """Keep a uniformly chosen subset of ``keep`` views; view ids are preserved."""
    views = scene.views
    if not 2 <= keep <= len(views):
        raise ValueError(f"keep must be in [2, {len(views)}]")
    chosen = sorted(Xoshiro256pp(derive_seed("views", seed)).sample(views, keep))
    return Scene(
        cameras=[scene.camera(m) for m in chosen],
        observations={m: scene.observations[m] for m in chosen},
        gt_points=scene.gt_points,
        gt_labels={m: scene.gt_labels[m] for m in chosen} if scene.gt_labels is not None else None,
        sigma=scene.sigma,
        seed=scene.seed,
    )


def scene_filename(count: int, batch: int, sigma: float) -> str:
    return f"sigma_{sigma:.2f}/n{count:03d}_b{batch}.json"


def generate_benchmark(spec: BenchmarkSpec, rig: RigSpec | None, out_dir: str | Path) -> dict:
    """Write every scene of the sweep plus ``manifest.json`` under ``out_dir``.

    Returns the manifest dictionary.
    """
    from cdog import io

    rig = rig or RigSpec()
    out = Path(out_dir)
    cameras = make_rig(rig, seed=spec.seed)
    entries = []
    for sigma in spec.sigmas:
        for count in spec.point_counts:
            for batch in range(spec.batches):
                seed = spec.scene_seed(count, batch, sigma)
                scene = generate_scene(count, cameras, spec.bounds, sigma, seed,
                                       min_separation_px=spec.min_separation_px)
                if spec.keep_views is not None:
                    scene = drop_views(scene, spec.keep_views, seed)
                rel = scene_filename(count, batch, sigma)
                io.write_scene(out / rel, scene)
                entries.append({"file": rel, "count": count, "batch": batch,
                                "sigma": float(sigma), "seed": seed})
        log.info("sigma %.2f: %d scenes written", sigma, len(spec.point_counts) * spec.batches)
    manifest = {
        "format_version": io.FORMAT_VERSION,
        "root": ".",
        "rig": rig.to_dict(),
        "seed": spec.seed,
        "batches": spec.batches,
        "point_counts": list(spec.point_counts),
        "sigmas": [float(s) for s in spec.sigmas],
        "keep_views": spec.keep_views,
        "scenes": entries,
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest
