"""Group refinement: back-projection scoring, IQR filtering, gap filtering.

Per-node scores come from exhaustive pair triangulation: every pair of
members from different views is triangulated and reprojected into each
member lying in a third view. A squared reprojection error is attributed to
both pair members and to the member it was measured at, and each node's
score is the mean of its attributed errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from cdog.errors import SkipGroup
from cdog.geometry import epipolar_distance_matrix, project_many, triangulate_batch
from cdog.graph import AssociationGraph, AssociationGroup
from cdog.scene import NodeId, Scene

log = logging.getLogger(__name__)

DEFAULT_IQR_ALPHA = 2.0
# Scores at or below this (squared pixels) are never outliers; keeps
# round-off from being read as spread on noise-free groups.
DEFAULT_MIN_OUTLIER_BPE = 1e-6


@dataclass(frozen=True)
class NodeBpeScore:
    node: NodeId
    mean_bpe: float


@dataclass(frozen=True)
class IqrBounds:
    q1: float
    q3: float
    iqr: float
    lb: float
    ub: float


def _pair_errors(P: np.ndarray, xy: np.ndarray, views: np.ndarray):
    """Squared reprojection errors for every cross-view pair and held-out member.

    Returns ``(pairs, err, valid)`` with ``err[p, k]`` the error at member ``k``
    of the point triangulated from pair ``p``.
    """
    n = len(views)
    ii, jj = np.triu_indices(n, k=1)
    cross = views[ii] != views[jj]
    ii, jj = ii[cross], jj[cross]
    pairs = np.stack([ii, jj], axis=1)
    if len(pairs) == 0:
        return pairs, np.zeros((0, n)), np.zeros((0, n), dtype=bool)
    X, ok = triangulate_batch(P[pairs], xy[pairs])
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        reproj = project_many(P[None, :, :, :], X[:, None, :])
        err = np.sum((reproj - xy[None]) ** 2, axis=-1)
    valid = (views[None, :] != views[ii][:, None]) & (views[None, :] != views[jj][:, None]) & ok[:, None]
    valid &= np.isfinite(err)
    return pairs, np.where(valid, err, 0.0), valid


def node_mean_bpe(group: AssociationGroup | Sequence[NodeId], scene: Scene) -> list[NodeBpeScore]:
    """Mean attributed back-projection error of every member.

    Raises:
        SkipGroup: if the group has fewer than three members, or no member
            can be scored against a third view.
    """
    members = list(group.members if isinstance(group, AssociationGroup) else group)
    if len(members) < 3:
        raise SkipGroup(f"group of size {len(members)} has no held-out view")
    P, xy = scene.stack(members)
    views = np.array([n.view for n in members])
    pairs, err, valid = _pair_errors(P, xy, views)
    n = len(members)
    num = np.zeros(n)
    den = np.zeros(n)
    row_sum = err.sum(axis=1)
    row_cnt = valid.sum(axis=1)
    for col in (0, 1):
        np.add.at(num, pairs[:, col], row_sum)
        np.add.at(den, pairs[:, col], row_cnt)
    num += err.sum(axis=0)
    den += valid.sum(axis=0)
    if np.any(den == 0):
        raise SkipGroup("some members are never scored against a third view")
    return [NodeBpeScore(node, float(s)) for node, s in zip(members, num / den)]


def _quantile(sorted_x: np.ndarray, p: float) -> float:
    # x[lo] + frac * (x[hi] - x[lo]); spelled out because numpy's lerp
    # rounds differently in the last bit for frac >= 0.5.
    h = (len(sorted_x) - 1) * p
    lo = int(math.floor(h))
    hi = min(lo + 1, len(sorted_x) - 1)
    return float(sorted_x[lo] + (h - lo) * (sorted_x[hi] - sorted_x[lo]))


def iqr_bounds(scores: Sequence[float], alpha: float = DEFAULT_IQR_ALPHA) -> IqrBounds:
    """Quartile fence over the scores padded with one zero; lower fence is 0.

    Quartiles use linear interpolation between closest ranks (inclusive).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("need at least one score")
    if np.any(scores < 0):
        raise ValueError("scores must be nonnegative")
    padded = np.sort(np.append(scores, 0.0))
    q1, q3 = _quantile(padded, 0.25), _quantile(padded, 0.75)
    iqr = q3 - q1
    return IqrBounds(q1=float(q1), q3=float(q3), iqr=float(iqr), lb=0.0, ub=float(q3 + alpha * iqr))


def _pair_bpe(scene: Scene, a: NodeId, b: NodeId) -> float:
    P, xy = scene.stack([a, b])
    X, ok = triangulate_batch(P[None], xy[None])
    if not ok[0]:
        return math.inf
    return float(np.mean(np.sum((project_many(P, X[0][None]) - xy) ** 2, axis=-1)))


def resolve_duplicates(group: AssociationGroup, scene: Scene) -> tuple[AssociationGroup, list[NodeId]]:
    """Keep one member per view: the one with the lowest mean two-view BPE.

    A member's score is the mean reprojection error of two-view
    triangulations with every member from another view.
    """
    by_view: dict[int, list[NodeId]] = {}
    for n in group.members:
        by_view.setdefault(n.view, []).append(n)
    if all(len(v) == 1 for v in by_view.values()):
        return group, []
    kept, removed = [], []
    for view in sorted(by_view):
        cands = by_view[view]
        if len(cands) == 1:
            kept.append(cands[0])
            continue
        others = [n for n in group.members if n.view != view]
        scores = [np.mean([_pair_bpe(scene, c, o) for o in others]) if others else math.inf for c in cands]
        best = int(np.argmin(scores))
        kept.append(cands[best])
        removed.extend(c for k, c in enumerate(cands) if k != best)
    return AssociationGroup(group.group_id, tuple(sorted(kept))), sorted(removed)


def remove_outliers(
    group: AssociationGroup,
    scene: Scene,
    alpha: float = DEFAULT_IQR_ALPHA,
    min_outlier_bpe: float = DEFAULT_MIN_OUTLIER_BPE,
    max_iter: int | None = None,
) -> tuple[AssociationGroup, list[NodeId]]:
    """Iterate scoring and IQR filtering until no member is flagged.

    Members scoring above the upper fence (and above ``min_outlier_bpe``) are
    dropped each round. Groups below three members are returned as is.

    Returns:
        The cleaned group and the removed members in removal order.
    """
    group, removed = resolve_duplicates(group, scene)
    members = list(group.members)
    limit = max_iter if max_iter is not None else len(members)
    for _ in range(limit):
        if len(members) < 3:
            break
        try:
            scores = node_mean_bpe(members, scene)
        except SkipGroup:
            break
        bounds = iqr_bounds([s.mean_bpe for s in scores], alpha)
        flagged = [s.node for s in scores if s.mean_bpe > bounds.ub and s.mean_bpe > min_outlier_bpe]
        if not flagged:
            break
        removed.extend(flagged)
        members = [n for n in members if n not in set(flagged)]
    return AssociationGroup(group.group_id, tuple(members)), removed


def group_bpe(members: Sequence[NodeId], scene: Scene) -> tuple[np.ndarray | None, float]:
    """Triangulate over all members; returns the point and its mean squared error.

    The point is ``None`` (and the error infinite) when the rays are degenerate.
    """
    members = list(members)
    if len(members) < 2:
        return None, math.inf
    P, xy = scene.stack(members)
    X, ok = triangulate_batch(P[None], xy[None])
    if not ok[0]:
        return None, math.inf
    err = np.sum((project_many(P, X[0][None]) - xy) ** 2, axis=-1)
    return X[0], float(np.mean(err))


def gap_cut_index(
    bpes: Sequence[float],
    tau: float,
    gamma: float = 10.0,
    beta: float = 2.0,
    epsilon: float = 1e-6,
) -> int | None:
    """First index of a sudden jump in an ascending BPE list, or ``None``.

    Index ``i >= 1`` is a jump when ``b[i] - b[i-1]`` exceeds ``gamma`` times
    the median of the earlier steps (floored at ``epsilon``) and ``b[i]``
    itself exceeds ``beta * tau**2``.
    """
    b = list(bpes)
    steps: list[float] = []
    for i in range(1, len(b)):
        step = b[i] - b[i - 1]
        base = max(float(np.median(steps)) if steps else 0.0, epsilon)
        if step > gamma * base and b[i] > beta * tau * tau:
            return i
        steps.append(step)
    return None


def remove_error_groups(
    groups: Sequence[AssociationGroup],
    scene: Scene,
    tau: float,
    gamma: float = 10.0,
    beta: float = 2.0,
    epsilon: float = 1e-6,
    enabled: bool = True,
) -> tuple[list[AssociationGroup], list[AssociationGroup]]:
    """Discard every group from the first sudden jump in sorted group BPE."""
    if not enabled or len(groups) < 2:
        return list(groups), []
    scored = sorted(((group_bpe(g.members, scene)[1], g.group_id, g) for g in groups), key=lambda t: t[:2])
    cut = gap_cut_index([s[0] for s in scored], tau, gamma, beta, epsilon)
    if cut is None:
        return list(groups), []
    kept_ids = {s[1] for s in scored[:cut]}
    kept = [g for g in groups if g.group_id in kept_ids]
    discarded = [s[2] for s in scored[cut:]]
    log.debug("gap filter discarded %d of %d groups", len(discarded), len(groups))
    return kept, discarded


def symmetric_distance(scene: Scene, fundamentals, u: NodeId, v: NodeId) -> float:
    """Mean of the two directed epipolar distances between ``u`` and ``v``."""
    xu = scene.xy(u)[None]
    xv = scene.xy(v)[None]
    d_uv = epipolar_distance_matrix(fundamentals[(v.view, u.view)], xu, xv)[0, 0]
    d_vu = epipolar_distance_matrix(fundamentals[(u.view, v.view)], xv, xu)[0, 0]
    return 0.5 * (float(d_uv) + float(d_vu))


def split_view_conflicts(
    group: AssociationGroup,
    graph: AssociationGraph,
    scene: Scene,
    fundamentals,
    tau: float,
) -> list[list[NodeId]]:
    """Break a component holding several observations of one view into
    view-consistent pieces, using only the component's retained edges.

    Two-view components are solved exactly as a minimum-cost partial
    matching in which leaving a node unmatched costs ``tau / 2``. Larger
    components are merged greedily along edges in ascending symmetric
    distance, skipping any merge that would repeat a view.
    """
    members = list(group.members)
    if not group.has_view_conflict():
        return [members]
    inside = set(members)
    pairs = sorted({(min(u, v), max(u, v)) for (u, v) in graph.edges if u in inside and v in inside})
    weights = {p: symmetric_distance(scene, fundamentals, *p) for p in pairs}
    views = sorted(set(group.views))
    if len(views) == 2:
        left = [n for n in members if n.view == views[0]]
        right = [n for n in members if n.view == views[1]]
        return _two_view_matching(left, right, weights, tau)
    return _constrained_merge(members, weights)


def _two_view_matching(left, right, weights, tau) -> list[list[NodeId]]:
    nl, nr = len(left), len(right)
    big = 1e9
    cost = np.full((nl + nr, nr + nl), big)
    cost[nl:, nr:] = 0.0
    for a in range(nl):
        cost[a, nr + a] = tau / 2
    for b in range(nr):
        cost[nl + b, b] = tau / 2
    for a, u in enumerate(left):
        for b, v in enumerate(right):
            w = weights.get((min(u, v), max(u, v)))
            if w is not None:
                cost[a, b] = w
    rows, cols = linear_sum_assignment(cost)
    pieces = []
    matched = set()
    for r, c in zip(rows, cols):
        if r < nl and c < nr and cost[r, c] < big:
            pieces.append(sorted([left[r], right[c]]))
            matched.update((left[r], right[c]))
    pieces.extend([n] for n in left + right if n not in matched)
    return sorted(pieces)


def _constrained_merge(members, weights) -> list[list[NodeId]]:
    parent = {n: n for n in members}
    views = {n: {n.view} for n in members}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (u, v), _ in sorted(weights.items(), key=lambda kv: (kv[1], kv[0])):
        ru, rv = find(u), find(v)
        if ru == rv or views[ru] & views[rv]:
            continue
        if rv < ru:
            ru, rv = rv, ru
        parent[rv] = ru
        views[ru] |= views.pop(rv)
    pieces: dict[NodeId, list[NodeId]] = {}
    for n in members:
        pieces.setdefault(find(n), []).append(n)
    return sorted(sorted(p) for p in pieces.values())
