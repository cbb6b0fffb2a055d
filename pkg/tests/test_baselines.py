from __future__ import annotations

import numpy as np
import pytest

from cdog.baselines import (
    METHODS,
    BaselineConfig,
    candidate_pairs,
    cca_associate,
    greedy_associate,
    register_method,
    run_method,
)
from cdog.metrics import evaluate_result
from cdog.pipeline import AssociationResult, associate
from cdog.scene import Scene


def check_partition(result, scene):
    seen = [n for g in result.groups for n in g.members] + list(result.outliers)
    assert sorted(seen) == scene.nodes()
    for g in result.groups:
        assert 2 <= len(g) and not g.has_view_conflict()


def cca_oracle(scene, tau):
    """Drop the heaviest edge of any view-conflicted component until none remain."""
    edges = [(d, u, v) for d, u, v in candidate_pairs(scene, tau)]
    while True:
        parent = {n: n for n in scene.nodes()}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for _, u, v in edges:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[rv] = ru
        comps = {}
        for n in scene.nodes():
            comps.setdefault(find(n), []).append(n)
        bad = None
        for members in comps.values():
            views = [n.view for n in members]
            if len(views) != len(set(views)):
                inside = set(members)
                heaviest = max(e for e in edges if e[1] in inside)
                bad = heaviest if bad is None or heaviest > bad else bad
        if bad is None:
            return {frozenset(m) for m in comps.values() if len(m) >= 2}
        edges.remove(bad)


def test_single_instance(make_scene):
    scene = make_scene(1)
    for name in ("greedy", "cca"):
        result = run_method(name, scene)
        assert len(result.groups) == 1 and len(result.groups[0]) == 10


def test_empty_scene(rig):
    scene = Scene(rig[:3], {})
    for fn in (greedy_associate, cca_associate):
        result = fn(scene, 5.0)
        assert result.groups == [] and result.outliers == []


@pytest.mark.parametrize("seed", range(8))
def test_cca_matches_edge_dropping_oracle(make_scene, seed):
    scene = make_scene(12, sigma=2.0, seed=seed, views=[0, 2, 4, 6, 8])
    tau = 6.0
    result = cca_associate(scene, tau)
    check_partition(result, scene)
    assert result.grouping() == cca_oracle(scene, tau)


@pytest.mark.parametrize("seed", range(4))
def test_greedy_invariants(make_scene, seed):
    scene = make_scene(30, sigma=2.0, seed=seed)
    a = run_method("greedy", scene)
    check_partition(a, scene)
    assert a.grouping() == run_method("greedy", scene).grouping()


def test_separated_noise_free_matches_cdog(make_scene):
    scene = make_scene(8, seed=4, sep=40.0)
    assert cca_associate(scene, 1.0).grouping() == associate(scene).grouping()


def test_tiny_tau_gives_outliers(make_scene):
    scene = make_scene(5, sigma=1.0, seed=2)
    result = cca_associate(scene, 1e-9)
    assert result.groups == [] and len(result.outliers) == scene.n_observations()


def test_cdog_beats_greedy_on_close_pairs(make_scene):
    scores = {"cdog": [], "greedy": []}
    for seed in range(20):
        scene = make_scene(20, sigma=3.0, seed=seed)
        for name in scores:
            scores[name].append(evaluate_result(run_method(name, scene), scene).pg_f1)
    assert np.mean(scores["cdog"]) > np.mean(scores["greedy"]) + 0.1


def test_dense_scene_cca_precision_lower(make_scene):
    scene = make_scene(130, sigma=1.0, seed=0)
    cca = evaluate_result(run_method("cca", scene), scene)
    cdog = evaluate_result(run_method("cdog", scene), scene)
    assert cca.pg_p < cdog.pg_p


def test_registry():
    assert {"cdog", "greedy", "cca"} <= set(METHODS)
    with pytest.raises(ValueError):
        run_method("nope", None)

    def trivial(scene, cfg=None):
        return AssociationResult(groups=[], outliers=scene.nodes(), method="trivial")

    register_method("trivial", trivial)
    try:
        assert run_method("trivial", Scene([], {})).method == "trivial"
    finally:
        METHODS.pop("trivial")


def test_baseline_config(make_scene):
    with pytest.raises(ValueError):
        BaselineConfig(method="nope")
    with pytest.raises(ValueError):
        BaselineConfig(tau=0.0)
    scene = make_scene(3, sigma=2.0)
    assert BaselineConfig().resolve_tau(scene) == pytest.approx(2 * np.sqrt(2) * 2.0)
    assert BaselineConfig(tau=3.0).resolve_tau(scene) == 3.0
