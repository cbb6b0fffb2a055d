"""End-to-end association: graph init, pruning, refinement, reconstruction."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from cdog.errors import DegenerateConfiguration, GeometryError
from cdog.geometry import epipolar_distance_matrix, signed_epipolar_residuals
from cdog.graph import (
    DEFAULT_TAU_MIN,
    AssociationGroup,
    connected_components,
    init_graph,
    pairwise_fundamentals,
    prune_weak_edges,
    threshold_from_sigma,
)
from cdog.refine import (
    DEFAULT_IQR_ALPHA,
    DEFAULT_MIN_OUTLIER_BPE,
    group_bpe,
    remove_error_groups,
    remove_outliers,
    split_view_conflicts,
)
from cdog.scene import NodeId, Scene

log = logging.getLogger(__name__)

MAD_TO_STD = 1.4826
MIN_SIGMA_SAMPLES = 10


@dataclass(frozen=True)
class CdogConfig:
    """Association parameters.

    ``sigma=None`` takes the scene's recorded noise level when present and
    estimates it from the observations otherwise.
    """

    sigma: float | None = None
    tau_alpha: float = 2.0
    tau_min: float = DEFAULT_TAU_MIN
    delta: float = 0.5
    iqr_alpha: float = DEFAULT_IQR_ALPHA
    iqr_enabled: bool = True
    min_outlier_bpe: float = DEFAULT_MIN_OUTLIER_BPE
    gap_gamma: float = 10.0
    gap_beta: float = 2.0
    gap_epsilon: float = 1e-6
    gap_enabled: bool = True

    def __post_init__(self):
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("tau_alpha", "tau_min", "iqr_alpha", "gap_gamma", "gap_beta", "gap_epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ReconstructedPoint:
    group_id: int
    xyz: np.ndarray
    bpe: float


@dataclass
class AssociationResult:
    """Final groups, leftover observations and per-stage wall-clock times.

    Attributes:
        groups: Groups of 2 to M observations, one per view, numbered from 0.
        outliers: Observations assigned to no group, sorted.
        points3d: Reconstructed points, filled by :func:`reconstruct`.
        stage_timings: Milliseconds per stage plus ``total``.
        tau: Epipolar gate the run used, when applicable.
        method: Name of the associator that produced the result.
    """

    groups: list[AssociationGroup]
    outliers: list[NodeId]
    points3d: list[ReconstructedPoint] | None = None
    stage_timings: dict[str, float] = field(default_factory=dict)
    tau: float | None = None
    method: str = "cdog"

    def assignment(self) -> dict[NodeId, int]:
        return {n: g.group_id for g in self.groups for n in g.members}

    def grouping(self) -> set[frozenset[NodeId]]:
        """Order-free view of the groups, for comparisons."""
        return {frozenset(g.members) for g in self.groups}


def finalize(pieces, all_nodes) -> tuple[list[AssociationGroup], list[NodeId]]:
    """Renumber valid pieces and send everything else to the outlier list.

    A valid piece has at least two members, all from distinct views.
    """
    valid = []
    for p in pieces:
        p = sorted(p)
        views = [n.view for n in p]
        if len(p) >= 2 and len(set(views)) == len(views):
            valid.append(tuple(p))
    valid.sort(key=lambda p: p[0])
    groups = [AssociationGroup(k, p) for k, p in enumerate(valid)]
    grouped = {n for p in valid for n in p}
    outliers = sorted(n for n in all_nodes if n not in grouped)
    return groups, outliers


def _pair_residuals(scene: Scene, F) -> np.ndarray:
    """Signed residuals of reciprocal best pairs, with each pair's runner-up gap.

    Returns an array of shape (n, 2): residual, and the smaller of the two
    second-best distances (``inf`` when a view has a single observation).
    """
    out = []
    views = scene.views
    for a in views:
        for b in views:
            if b <= a:
                continue
            xa, xb = scene.observations[a], scene.observations[b]
            if len(xa) == 0 or len(xb) == 0:
                continue
            d_ab = epipolar_distance_matrix(F[(b, a)], xa, xb)
            d_ba = epipolar_distance_matrix(F[(a, b)], xb, xa)
            fwd = np.argmin(d_ab, axis=1)
            back = np.argmin(d_ba, axis=1)
            mutual = np.flatnonzero(back[fwd] == np.arange(len(xa)))
            if len(mutual) == 0:
                continue
            second_a = np.sort(d_ab, axis=1)[:, 1] if len(xb) > 1 else np.full(len(xa), np.inf)
            second_b = np.sort(d_ba, axis=1)[:, 1] if len(xa) > 1 else np.full(len(xb), np.inf)
            r = signed_epipolar_residuals(F[(b, a)], xa[mutual], xb[fwd[mutual]])
            out.append(np.stack([r, np.minimum(second_a[mutual], second_b[fwd[mutual]])], axis=1))
    if not out:
        return np.zeros((0, 2))
    res = np.concatenate(out)
    return res[np.isfinite(res[:, 0])]


def _mad_sigma(r: np.ndarray) -> float:
    return MAD_TO_STD * float(np.median(np.abs(r - np.median(r)))) / math.sqrt(2.0)


def pilot_sigma(scene: Scene, fundamentals=None, separation: float = 4.0, max_iter: int = 10) -> float:
    """Pixel-noise estimate from unambiguous reciprocal epipolar pairs.

    Starts from the scaled MAD of all reciprocal best pairs, then repeatedly
    keeps only pairs whose runner-up candidates lie more than
    ``separation * sigma`` away, since in crowded views the nearest line
    often belongs to another point and biases the estimate low.
    """
    if len(scene.views) < 2:
        return 0.0
    F = fundamentals if fundamentals is not None else pairwise_fundamentals(scene)
    res = _pair_residuals(scene, F)
    if len(res) == 0:
        return 0.0
    sigma = _mad_sigma(res[:, 0])
    for _ in range(max_iter):
        keep = res[:, 1] > separation * max(sigma, 1e-12)
        if keep.sum() < MIN_SIGMA_SAMPLES:
            break
        new = _mad_sigma(res[keep, 0])
        if abs(new - sigma) <= 1e-9 * max(sigma, 1.0):
            sigma = new
            break
        sigma = new
    return sigma


def estimate_sigma(scene: Scene, fundamentals=None, min_group_size: int = 4) -> float:
    """Robust pixel-noise estimate for scenes without a recorded sigma.

    A pilot value from unambiguous epipolar pairs (:func:`pilot_sigma`) sets a
    generous gate of 1.5 times itself; groups of at least ``min_group_size``
    views formed under that gate are triangulated, and each yields the
    estimate ``sum of squared residuals / median(chi2(2M - 3))``. The result
    is the square root of the median over groups. Falls back to the pilot
    when fewer than three groups qualify, and returns 0 when no reciprocal
    pair exists.
    """
    F = fundamentals if fundamentals is not None else (pairwise_fundamentals(scene) if len(scene.views) > 1 else {})
    pilot = pilot_sigma(scene, F)
    if pilot <= 0.0:
        return 0.0
    bare = Scene(scene.cameras, scene.observations)
    cfg = CdogConfig(sigma=1.5 * pilot, iqr_enabled=False, gap_enabled=False)
    result = associate(bare, cfg)
    ratios = []
    for g in result.groups:
        m = len(g)
        if m < min_group_size:
            continue
        _, bpe = group_bpe(g.members, scene)
        if math.isfinite(bpe):
            ratios.append(m * bpe / chi2.median(2 * m - 3))
    if len(ratios) < 3:
        return pilot
    return math.sqrt(float(np.median(ratios)))


def resolve_sigma(scene: Scene, cfg: CdogConfig, fundamentals=None) -> float:
    if cfg.sigma is not None:
        return cfg.sigma
    if scene.sigma is not None:
        return scene.sigma
    return estimate_sigma(scene, fundamentals)


def associate(scene: Scene, cfg: CdogConfig | None = None) -> AssociationResult:
    """Group the scene's observations into per-3D-point sets.

    Stages: epipolar graph initialisation, weak-edge pruning, components,
    view-conflict splitting, iterative IQR outlier removal, error-group
    removal, final constraint enforcement. Geometric failures inside a group
    turn its members into outliers rather than aborting the scene.
    """
    cfg = cfg or CdogConfig()
    if len(scene.views) < 2:
        raise ValueError("association needs at least two views")
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    F = pairwise_fundamentals(scene)
    sigma = resolve_sigma(scene, cfg, F)
    tau = threshold_from_sigma(sigma, cfg.tau_alpha, cfg.tau_min)
    graph = init_graph(scene, tau, F)
    t1 = time.perf_counter()
    timings["init"] = (t1 - t0) * 1e3

    pruned = prune_weak_edges(graph, cfg.delta)
    components = connected_components(pruned)
    pieces: list[list[NodeId]] = []
    for comp in components:
        if comp.outlier:
            continue
        pieces.extend(split_view_conflicts(comp, pruned, scene, F, tau))
    t2 = time.perf_counter()
    timings["prune"] = (t2 - t1) * 1e3

    refined: list[AssociationGroup] = []
    for k, piece in enumerate(pieces):
        group = AssociationGroup(k, tuple(piece))
        if cfg.iqr_enabled and len(piece) >= 3:
            try:
                group, _ = remove_outliers(group, scene, cfg.iqr_alpha, cfg.min_outlier_bpe)
            except GeometryError as exc:
                log.debug("group %d skipped: %s", k, exc)
                continue
        if len(group) >= 2:
            refined.append(group)
    t3 = time.perf_counter()
    timings["iqr"] = (t3 - t2) * 1e3

    kept, _ = remove_error_groups(
        refined, scene, tau, cfg.gap_gamma, cfg.gap_beta, cfg.gap_epsilon, enabled=cfg.gap_enabled
    )
    groups, outliers = finalize([g.members for g in kept], scene.nodes())
    t4 = time.perf_counter()
    timings["gap"] = (t4 - t3) * 1e3
    timings["total"] = (t4 - t0) * 1e3
    return AssociationResult(groups=groups, outliers=outliers, stage_timings=timings, tau=tau, method="cdog")


def reconstruct(result: AssociationResult, scene: Scene) -> list[ReconstructedPoint]:
    """Triangulate every group over all its members.

    Degenerate groups are logged and left out. The list is also stored on
    ``result.points3d``.
    """
    points = []
    for g in result.groups:
        X, bpe = group_bpe(g.members, scene)
        if X is None:
            log.warning("group %d: %s", g.group_id, DegenerateConfiguration.__name__)
            continue
        points.append(ReconstructedPoint(g.group_id, X, bpe))
    result.points3d = points
    return points
