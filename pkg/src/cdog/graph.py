"""Association graph: epipolar initialisation, overlap scoring, pruning.

Nodes are 2D observations. Initialisation adds, for every node and every
other view, one directed edge to the nearest observation (by epipolar
distance) in that view when that distance is below ``tau``. Pruning and
component extraction work on the undirected union of those edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cdog.geometry import epipolar_distance_matrix, fundamental_matrix
from cdog.scene import NodeId, Scene

DEFAULT_TAU_MIN = 1.0


@dataclass(frozen=True)
class Edge:
    """Directed candidate match with its epipolar distance in pixels."""

    source: NodeId
    target: NodeId
    weight: float


@dataclass(frozen=True)
class AssociationGroup:
    """Observations hypothesised to image one 3D point.

    ``outlier`` marks singleton components that cannot form a group.
    """

    group_id: int
    members: tuple[NodeId, ...]
    outlier: bool = False

    def __len__(self) -> int:
        return len(self.members)

    @property
    def views(self) -> list[int]:
        return [n.view for n in self.members]

    def has_view_conflict(self) -> bool:
        views = self.views
        return len(set(views)) != len(views)


@dataclass
class AssociationGraph:
    """Directed candidate edges over a fixed node set.

    Attributes:
        nodes: All observations, sorted.
        edges: Directed edge weights keyed by ``(source, target)``.
        tau: Distance threshold used to build the graph.
    """

    nodes: list[NodeId]
    edges: dict[tuple[NodeId, NodeId], float] = field(default_factory=dict)
    tau: float = math.inf

    def neighbors(self) -> dict[NodeId, set[NodeId]]:
        """Undirected adjacency (open neighbourhoods)."""
        adj: dict[NodeId, set[NodeId]] = {n: set() for n in self.nodes}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def undirected_pairs(self) -> list[tuple[NodeId, NodeId]]:
        """Connected pairs ``(u, v)`` with ``u < v``, sorted."""
        return sorted({(u, v) if u < v else (v, u) for u, v in self.edges})

    def edge_list(self) -> list[Edge]:
        return [Edge(u, v, w) for (u, v), w in sorted(self.edges.items())]

    def without_pairs(self, pairs) -> AssociationGraph:
        """Copy with both directions of every pair in ``pairs`` removed."""
        drop = set()
        for u, v in pairs:
            drop.add((u, v))
            drop.add((v, u))
        kept = {k: w for k, w in self.edges.items() if k not in drop}
        return AssociationGraph(nodes=list(self.nodes), edges=kept, tau=self.tau)


def threshold_from_sigma(sigma: float, alpha: float = 2.0, tau_min: float = DEFAULT_TAU_MIN) -> float:
    """Epipolar gate ``alpha * sqrt(2) * sigma``; ``tau_min`` when sigma is zero."""
    if sigma < 0 or alpha <= 0:
        raise ValueError("need sigma >= 0 and alpha > 0")
    if sigma == 0:
        return tau_min
    return alpha * math.sqrt(2.0) * sigma


def pairwise_fundamentals(scene: Scene) -> dict[tuple[int, int], np.ndarray]:
    """``F[(a, b)]`` maps pixels of view ``b`` to epipolar lines in view ``a``."""
    views = scene.views
    out = {}
    for a in views:
        for b in views:
            if a < b:
                F = fundamental_matrix(scene.camera(a), scene.camera(b))
                out[(a, b)] = F
                out[(b, a)] = F.T
    return out


def init_graph(scene: Scene, tau: float, fundamentals=None) -> AssociationGraph:
    """Build the directed nearest-epipolar-neighbour graph.

    For each node and each other view, the observation with the smallest
    epipolar distance (ties to the lowest index) receives an edge when that
    distance is strictly below ``tau``.
    """
    F = fundamentals if fundamentals is not None else pairwise_fundamentals(scene)
    graph = AssociationGraph(nodes=scene.nodes(), tau=tau)
    views = scene.views
    for m in views:
        src = scene.observations[m]
        if len(src) == 0:
            continue
        for mp in views:
            dst = scene.observations[mp]
            if mp == m or len(dst) == 0:
                continue
            # Lines in view mp of the points in view m.
            d = epipolar_distance_matrix(F[(mp, m)], src, dst)
            best = np.argmin(d, axis=1)
            best_d = d[np.arange(len(src)), best]
            for i in np.flatnonzero(best_d < tau):
                graph.edges[(NodeId(m, int(i)), NodeId(mp, int(best[i])))] = float(best_d[i])
    return graph


def closed_overlap(adj: dict[NodeId, set[NodeId]], u: NodeId, v: NodeId) -> float:
    """Shared closed neighbourhood size over the larger closed neighbourhood."""
    nu = adj[u] | {u}
    nv = adj[v] | {v}
    return len(nu & nv) / max(len(nu), len(nv))


def overlap_score(g: AssociationGraph, u: NodeId, v: NodeId) -> float:
    """Closed-neighbourhood overlap of two connected nodes, in ``(0, 1]``."""
    if (u, v) not in g.edges and (v, u) not in g.edges:
        raise ValueError(f"{u} and {v} are not connected")
    return closed_overlap(g.neighbors(), u, v)


def prune_weak_edges(g: AssociationGraph, delta: float = 0.5) -> AssociationGraph:
    """Remove every connected pair whose overlap score is ``<= delta``.

    All scores are computed on the unpruned graph, then removed together, so
    the result does not depend on iteration order.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    adj = g.neighbors()
    weak = [(u, v) for u, v in g.undirected_pairs() if closed_overlap(adj, u, v) <= delta]
    return g.without_pairs(weak)


class _DisjointSet:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Smaller root wins so the representative is deterministic.
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def connected_components(g: AssociationGraph) -> list[AssociationGroup]:
    """Partition nodes by undirected connectivity.

    Groups are ordered by their smallest member and numbered from zero;
    isolated nodes come back as singleton groups with ``outlier=True``.
    """
    ds = _DisjointSet(g.nodes)
    for u, v in g.edges:
        ds.union(u, v)
    comps: dict[NodeId, list[NodeId]] = {}
    for n in g.nodes:
        comps.setdefault(ds.find(n), []).append(n)
    ordered = sorted((sorted(members) for members in comps.values()), key=lambda m: m[0])
    return [AssociationGroup(k, tuple(members), outlier=len(members) < 2) for k, members in enumerate(ordered)]
