from __future__ import annotations

import numpy as np
import pytest

from cdog.benchmark import generate_scene, make_rig
from cdog.geometry import CameraPose


@pytest.fixture(scope="session")
def rig():
    return make_rig()


@pytest.fixture
def make_scene(rig):
    def build(n, sigma=0.0, seed=0, views=None, sep=0.0):
        cams = rig if views is None else [rig[v] for v in views]
        return generate_scene(n, cams, sigma=sigma, seed=seed, min_separation_px=sep)
    return build


def rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def simple_camera(view_id, center, target=(0.0, 0.0, 0.0), f=800.0):
    """Camera at ``center`` looking at ``target`` (world z up)."""
    center = np.asarray(center, dtype=float)
    fwd = np.asarray(target, dtype=float) - center
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.vstack([right, down, fwd])
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    K = np.array([[f, 0, 640.0], [0, f, 360.0], [0, 0, 1]])
    return CameraPose(view_id, K, R, -R @ center)
