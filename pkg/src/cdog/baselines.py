"""Geometry-only comparison associators and the method registry.

Both baselines score every cross-view observation pair by its symmetric
epipolar distance (mean of the two directed point-to-line distances) and
keep pairs strictly below ``tau``.

* ``greedy`` merges groups along pairs in ascending distance, skipping any
  merge that would put two observations of one view in a group.
* ``cca`` takes connected components of all kept pairs; a component holding
  two observations of one view is split by dropping its largest-distance
  edges until every piece is view-consistent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from cdog.graph import pairwise_fundamentals, threshold_from_sigma
from cdog.geometry import epipolar_distance_matrix
from cdog.pipeline import AssociationResult, CdogConfig, associate, finalize, resolve_sigma
from cdog.scene import NodeId, Scene


@dataclass(frozen=True)
class BaselineConfig:
    """``tau=None`` derives the gate from the scene's noise level."""

    method: str = "greedy"
    tau: float | None = None
    tau_alpha: float = 2.0
    tau_min: float = 1.0

    def __post_init__(self):
        if self.method not in ("greedy", "cca"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")

    def resolve_tau(self, scene: Scene) -> float:
        if self.tau is not None:
            return self.tau
        sigma = resolve_sigma(scene, CdogConfig())
        return threshold_from_sigma(sigma, self.tau_alpha, self.tau_min)


def candidate_pairs(scene: Scene, tau: float, fundamentals=None) -> list[tuple[float, NodeId, NodeId]]:
    """All cross-view pairs with symmetric epipolar distance below ``tau``,
    sorted by ``(distance, u, v)``."""
    F = fundamentals if fundamentals is not None else pairwise_fundamentals(scene)
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
            sym = 0.5 * (d_ab + d_ba.T)
            for i, j in zip(*np.nonzero(sym < tau)):
                out.append((float(sym[i, j]), NodeId(a, int(i)), NodeId(b, int(j))))
    out.sort()
    return out


def _components(parent_of, nodes):
    groups: dict[NodeId, list[NodeId]] = {}
    for n in nodes:
        groups.setdefault(parent_of(n), []).append(n)
    return list(groups.values())


def greedy_associate(scene: Scene, tau: float) -> AssociationResult:
    t0 = time.perf_counter()
    nodes = scene.nodes()
    parent = {n: n for n in nodes}
    views = {n: 1 << n.view for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for _, u, v in candidate_pairs(scene, tau):
        ru, rv = find(u), find(v)
        if ru == rv or views[ru] & views[rv]:
            continue
        if rv < ru:
            ru, rv = rv, ru
        parent[rv] = ru
        views[ru] |= views[rv]
    groups, outliers = finalize(_components(find, nodes), nodes)
    ms = (time.perf_counter() - t0) * 1e3
    return AssociationResult(groups, outliers, stage_timings={"total": ms}, tau=tau, method="greedy")


def cca_associate(scene: Scene, tau: float) -> AssociationResult:
    t0 = time.perf_counter()
    nodes = scene.nodes()
    # Single-linkage dendrogram: cutting a component's heaviest edges until
    # it falls apart is the same as descending to the two clusters its
    # last (heaviest) spanning-tree merge joined.
    parent = {n: n for n in nodes}
    tree_of = {n: n for n in nodes}  # union-find root -> dendrogram node
    children: dict[object, tuple[object, object]] = {}
    mask: dict[object, int] = {n: 1 << n.view for n in nodes}
    valid: dict[object, bool] = {n: True for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (_, u, v) in enumerate(candidate_pairs(scene, tau)):
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        a, b = tree_of[ru], tree_of[rv]
        merged = ("merge", k)
        children[merged] = (a, b)
        mask[merged] = mask[a] | mask[b]
        valid[merged] = valid[a] and valid[b] and not (mask[a] & mask[b])
        if rv < ru:
            ru, rv = rv, ru
        parent[rv] = ru
        tree_of[ru] = merged

    pieces = []
    roots = {tree_of[find(n)] for n in nodes}
    stack = list(roots)
    while stack:
        node = stack.pop()
        if valid[node]:
            leaves, todo = [], [node]
            while todo:
                x = todo.pop()
                if x in children:
                    todo.extend(children[x])
                else:
                    leaves.append(x)
            pieces.append(leaves)
        else:
            stack.extend(children[node])
    groups, outliers = finalize(pieces, nodes)
    ms = (time.perf_counter() - t0) * 1e3
    return AssociationResult(groups, outliers, stage_timings={"total": ms}, tau=tau, method="cca")


Associator = Callable[[Scene, object], AssociationResult]

METHODS: dict[str, Associator] = {}


def register_method(name: str, fn: Associator) -> None:
    """Make an associator available to the CLI and bench runner.

    ``fn(scene, config)`` receives ``config=None`` unless the caller built one.
    """
    METHODS[name] = fn


def _run_cdog(scene: Scene, cfg=None) -> AssociationResult:
    return associate(scene, cfg if isinstance(cfg, CdogConfig) else None)


def _run_baseline(name):
    def run(scene: Scene, cfg=None) -> AssociationResult:
        cfg = cfg if isinstance(cfg, BaselineConfig) else BaselineConfig(method=name)
        tau = cfg.resolve_tau(scene)
        return greedy_associate(scene, tau) if name == "greedy" else cca_associate(scene, tau)
    return run


register_method("cdog", _run_cdog)
register_method("greedy", _run_baseline("greedy"))
register_method("cca", _run_baseline("cca"))


def run_method(name: str, scene: Scene, cfg=None) -> AssociationResult:
    try:
        fn = METHODS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; known: {sorted(METHODS)}") from None
    return fn(scene, cfg)
