from __future__ import annotations

import numpy as np
import pytest

from cdog import io
from cdog.benchmark import (
    BenchmarkSpec,
    RigSpec,
    default_point_counts,
    default_sigmas,
    drop_views,
    generate_benchmark,
    generate_scene,
    make_rig,
)
from cdog.errors import BehindCamera
from cdog.geometry import fundamental_matrix, project


def test_default_rig():
    rig = make_rig()
    assert len(rig) == 10
    for a in rig:
        assert np.allclose(a.R @ a.R.T, np.eye(3), atol=1e-12)
        # Every camera looks at the origin.
        assert np.allclose(project(a, [0.0, 0.0, 0.0]), [640.0, 360.0], atol=1e-9)
        for b in rig:
            if a.view_id < b.view_id:
                assert np.linalg.matrix_rank(fundamental_matrix(a, b), tol=1e-9) == 2
    again = make_rig()
    assert all(a.same_as(b) for a, b in zip(rig, again))
    assert not make_rig(seed=1)[0].same_as(rig[0])


def test_rig_spec_round_trip():
    spec = RigSpec(n_cameras=6, radius=400.0)
    assert RigSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        RigSpec(n_cameras=1)


def test_noise_free_scene_is_exact(rig):
    scene = generate_scene(20, rig, sigma=0.0, seed=1)
    for m in scene.views:
        for i, xy in enumerate(scene.observations[m]):
            X = scene.gt_points[scene.gt_labels[m][i]]
            assert np.allclose(xy, project(rig[m], X), atol=1e-9)
    assert np.all(np.abs(scene.gt_points) <= 100.0)


def test_noise_statistics(rig):
    scene = generate_scene(1000, rig, sigma=3.0, seed=2)
    resid = []
    for m in scene.views:
        exact = np.array([project(rig[m], scene.gt_points[g]) for g in scene.gt_labels[m]])
        resid.append(scene.observations[m] - exact)
    resid = np.concatenate(resid)
    assert resid.shape[0] == 10_000
    assert np.all(np.abs(resid.std(axis=0) - 3.0) < 0.1)


def test_scene_determinism(rig, tmp_path):
    a = generate_scene(15, rig, sigma=1.5, seed=9)
    b = generate_scene(15, rig, sigma=1.5, seed=9)
    io.write_scene(tmp_path / "a.json", a)
    io.write_scene(tmp_path / "b.json", b)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    c = generate_scene(15, rig, sigma=1.5, seed=10)
    assert not np.allclose(a.gt_points, c.gt_points)


def test_min_separation(rig):
    scene = generate_scene(30, rig, seed=4, min_separation_px=15.0)
    for m in scene.views:
        xy = scene.observations[m]
        d = np.linalg.norm(xy[:, None] - xy[None], axis=-1) + np.eye(len(xy)) * 1e9
        assert d.min() >= 15.0


def test_bounds_behind_camera(rig):
    with pytest.raises(BehindCamera):
        generate_scene(3, rig, bounds=((-600, 600), (-600, 600), (-10, 10)))


def test_drop_views(rig):
    scene = generate_scene(5, rig, seed=3)
    same = drop_views(scene, 10, seed=1)
    assert same.views == scene.views
    two = drop_views(scene, 2, seed=1)
    assert len(two.views) == 2
    for m in two.views:
        assert np.array_equal(two.observations[m], scene.observations[m])
        assert np.array_equal(two.gt_labels[m], scene.gt_labels[m])
    assert drop_views(scene, 2, seed=1).views == two.views
    with pytest.raises(ValueError):
        drop_views(scene, 1, seed=0)


def test_default_spec_totals():
    spec = BenchmarkSpec()
    assert len(default_point_counts()) == 42
    assert len(spec.point_counts) * spec.batches == 210
    assert spec.total_points_per_sigma() == 9575
    assert len(default_sigmas()) == 21 and default_sigmas()[-1] == 5.0
    assert spec.scene_seed(5, 0, 1.0) != spec.scene_seed(5, 1, 1.0)


def test_generate_benchmark(tmp_path):
    spec = BenchmarkSpec(point_counts=(3, 7), sigmas=(0.0, 2.0), batches=2, seed=5)
    manifest = generate_benchmark(spec, None, tmp_path / "a")
    generate_benchmark(spec, None, tmp_path / "b")
    assert len(manifest["scenes"]) == 8
    total = 0
    for entry in manifest["scenes"]:
        pa, pb = tmp_path / "a" / entry["file"], tmp_path / "b" / entry["file"]
        assert pa.read_bytes() == pb.read_bytes()
        scene = io.read_scene(pa)
        assert len(scene.gt_points) == entry["count"]
        assert scene.sigma == entry["sigma"]
        total += entry["count"] if entry["sigma"] == 0.0 else 0
    assert total == spec.total_points_per_sigma()
    b0 = io.read_scene(tmp_path / "a" / "sigma_0.00/n007_b0.json")
    b1 = io.read_scene(tmp_path / "a" / "sigma_0.00/n007_b1.json")
    assert not np.allclose(b0.gt_points, b1.gt_points)
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
