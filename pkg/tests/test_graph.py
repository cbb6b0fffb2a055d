from __future__ import annotations

import itertools

import numpy as np
import pytest

from cdog.graph import (
    AssociationGraph,
    connected_components,
    init_graph,
    overlap_score,
    pairwise_fundamentals,
    prune_weak_edges,
    threshold_from_sigma,
)
from cdog.scene import NodeId, Scene


def graph_from_pairs(pairs, extra_nodes=()):
    nodes = sorted({n for p in pairs for n in p} | set(extra_nodes))
    return AssociationGraph(nodes=nodes, edges={(u, v): 0.0 for u, v in pairs})


def clique(views, index):
    members = [NodeId(v, index) for v in views]
    return members, list(itertools.combinations(members, 2))


def test_threshold_values():
    assert threshold_from_sigma(3.0, 2.0) == pytest.approx(8.4853, abs=1e-4)
    assert threshold_from_sigma(1.0, 2.0) == pytest.approx(2.8284, abs=1e-4)
    assert threshold_from_sigma(0.0, 2.0) == 1.0
    assert threshold_from_sigma(0.0, 2.0, tau_min=0.5) == 0.5
    with pytest.raises(ValueError):
        threshold_from_sigma(-1.0)


def test_init_graph_single_correspondence(make_scene):
    scene = make_scene(1, views=[0, 3])
    g = init_graph(scene, 1.0)
    assert set(g.edges) == {(NodeId(0, 0), NodeId(3, 0)), (NodeId(3, 0), NodeId(0, 0))}
    assert max(g.edges.values()) < 1e-6


def test_init_graph_two_points(make_scene):
    scene = make_scene(2, views=[0, 3], sep=20.0)
    g = init_graph(scene, 1.0)
    assert len(g.edges) == 4
    for u, v in g.edges:
        assert scene.label(u) == scene.label(v)
        assert (v, u) in g.edges


def test_init_graph_missing_match(make_scene):
    scene = make_scene(3, views=[0, 3], sep=20.0)
    lab = scene.gt_labels[3]
    keep = [i for i in range(3) if lab[i] != 0]
    reduced = Scene(scene.cameras, {0: scene.observations[0], 3: scene.observations[3][keep]})
    g = init_graph(reduced, 1.0)
    orphan = NodeId(0, int(np.flatnonzero(scene.gt_labels[0] == 0)[0]))
    assert not [e for e in g.edges if e[0] == orphan]


def test_init_graph_out_degree(make_scene):
    scene = make_scene(30, sigma=2.0, seed=4)
    g = init_graph(scene, threshold_from_sigma(2.0))
    seen = set()
    for u, v in g.edges:
        assert u.view != v.view
        assert (u, v.view) not in seen
        seen.add((u, v.view))
    assert all(w < g.tau for w in g.edges.values())


def test_init_graph_ties_pick_lowest_index(rig):
    # Two identical pixels in the target view: the lowest index wins.
    base = Scene(rig[:2], {0: [[600.0, 300.0]], 1: [[640.0, 360.0], [640.0, 360.0]]})
    F = pairwise_fundamentals(base)
    g = init_graph(base, 1e9, F)
    assert (NodeId(0, 0), NodeId(1, 0)) in g.edges
    assert (NodeId(0, 0), NodeId(1, 1)) not in g.edges


def test_overlap_examples():
    u, v, a, b = NodeId(0, 0), NodeId(1, 0), NodeId(2, 0), NodeId(3, 0)
    assert overlap_score(graph_from_pairs([(u, v)]), u, v) == 1.0
    g = graph_from_pairs([(u, v), (u, a), (u, b), (v, a)])
    assert overlap_score(g, u, v) == pytest.approx(0.75)
    members, pairs = clique(range(5), 0)
    g = graph_from_pairs(pairs)
    assert all(overlap_score(g, x, y) == 1.0 for x, y in pairs)
    with pytest.raises(ValueError):
        overlap_score(graph_from_pairs([(u, v)], [a]), u, a)


def bridged_cliques():
    left, lp = clique(range(5), 0)
    right, rp = clique(range(5), 1)
    bridge = (left[0], right[1])
    return left, right, bridge, graph_from_pairs(lp + rp + [bridge])


def test_bridge_score_by_hand():
    left, right, bridge, g = bridged_cliques()
    # Both endpoints have closed neighbourhoods of 6 sharing only themselves.
    assert overlap_score(g, *bridge) == pytest.approx(2 / 6)
    assert overlap_score(g, left[0], left[1]) == pytest.approx(5 / 6)
    assert overlap_score(g, left[2], left[3]) == 1.0


def test_prune_bridge_and_components():
    left, right, bridge, g = bridged_cliques()
    pruned = prune_weak_edges(g, 0.5)
    assert bridge not in pruned.edges and (bridge[1], bridge[0]) not in pruned.edges
    assert len(pruned.edges) == 20
    comps = connected_components(pruned)
    assert [len(c) for c in comps] == [5, 5]
    assert set(comps[0].members) == set(left)


def test_prune_dense_clique_untouched():
    _, pairs = clique(range(6), 0)
    g = graph_from_pairs(pairs)
    assert prune_weak_edges(g, 0.5).edges == g.edges
    with pytest.raises(ValueError):
        prune_weak_edges(g, 1.0)


def test_prune_threshold_is_inclusive():
    u, v, a = NodeId(0, 0), NodeId(1, 0), NodeId(2, 0)
    x, y = NodeId(3, 0), NodeId(4, 0)
    # N[u] = {u, v, a}, N[v] = {u, v, x, y}: theta = 2/4 = 0.5 exactly.
    g = graph_from_pairs([(u, v), (u, a), (v, x), (v, y)])
    assert overlap_score(g, u, v) == 0.5
    assert (u, v) not in prune_weak_edges(g, 0.5).edges
    assert (u, v) in prune_weak_edges(g, 0.49).edges


def test_prune_order_independent():
    rng = np.random.default_rng(0)
    nodes = [NodeId(v, i) for v in range(4) for i in range(4)]
    pairs = [(a, b) for a, b in itertools.combinations(nodes, 2) if a.view != b.view and rng.random() < 0.3]
    g1 = graph_from_pairs(pairs, nodes)
    shuffled = [pairs[k] for k in rng.permutation(len(pairs))]
    g2 = graph_from_pairs([(b, a) for a, b in shuffled], nodes)
    assert set(prune_weak_edges(g1).undirected_pairs()) == set(prune_weak_edges(g2).undirected_pairs())


def test_components_basic(make_scene):
    assert connected_components(AssociationGraph(nodes=[])) == []
    scene = make_scene(2, views=[0, 3], sep=20.0)
    comps = connected_components(init_graph(scene, 1.0))
    assert [len(c) for c in comps] == [2, 2]
    assert [c.group_id for c in comps] == [0, 1]
    assert comps[0].members[0] < comps[1].members[0]
    iso = connected_components(graph_from_pairs([(NodeId(0, 0), NodeId(1, 0))], [NodeId(2, 0)]))
    assert [c.outlier for c in iso] == [False, True]
