"""Scene container: a calibrated rig plus per-view 2D detections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from cdog.geometry import CameraPose


class NodeId(NamedTuple):
    """One 2D observation: ``index`` within view ``view``."""

    view: int
    index: int


@dataclass
class Scene:
    """Cameras and observations for one association problem.

    Attributes:
        cameras: One pose per view; ``view_id`` values are unique.
        observations: Pixel coordinates per view id, each of shape (n_m, 2).
        gt_points: Ground-truth world points, row ``g`` is instance ``g``.
        gt_labels: Instance id of every observation, per view id.
        sigma: Pixel noise standard deviation, if known.
        seed: Seed the scene was generated from, if synthetic.
    """

    cameras: list[CameraPose]
    observations: dict[int, np.ndarray]
    gt_points: np.ndarray | None = None
    gt_labels: dict[int, np.ndarray] | None = None
    sigma: float | None = None
    seed: int | None = None
    _cam_index: dict[int, CameraPose] = field(init=False, repr=False)

    def __post_init__(self):
        self._cam_index = {c.view_id: c for c in self.cameras}
        if len(self._cam_index) != len(self.cameras):
            raise ValueError("duplicate camera view ids")
        obs = {}
        for m in self._cam_index:
            arr = np.asarray(self.observations.get(m, np.zeros((0, 2))), dtype=float).reshape(-1, 2)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"view {m}: non-finite observation")
            obs[m] = arr
        extra = set(self.observations) - set(obs)
        if extra:
            raise ValueError(f"observations for unknown views {sorted(extra)}")
        self.observations = obs
        if self.gt_labels is not None:
            labels = {}
            for m in obs:
                lab = np.asarray(self.gt_labels.get(m, np.zeros(0)), dtype=np.int64).reshape(-1)
                if lab.shape[0] != obs[m].shape[0]:
                    raise ValueError(f"view {m}: {lab.shape[0]} labels for {obs[m].shape[0]} observations")
                labels[m] = lab
            self.gt_labels = labels
        if self.gt_points is not None:
            self.gt_points = np.asarray(self.gt_points, dtype=float).reshape(-1, 3)

    @property
    def views(self) -> list[int]:
        return sorted(self._cam_index)

    @property
    def has_ground_truth(self) -> bool:
        return self.gt_labels is not None and self.gt_points is not None

    def camera(self, view: int) -> CameraPose:
        return self._cam_index[view]

    def nodes(self) -> list[NodeId]:
        return [NodeId(m, i) for m in self.views for i in range(len(self.observations[m]))]

    def n_observations(self) -> int:
        return sum(len(v) for v in self.observations.values())

    def xy(self, node: NodeId) -> np.ndarray:
        return self.observations[node.view][node.index]

    def label(self, node: NodeId) -> int:
        if self.gt_labels is None:
            raise ValueError("scene has no ground-truth labels")
        return int(self.gt_labels[node.view][node.index])

    def stack(self, nodes: Iterable[NodeId]) -> tuple[np.ndarray, np.ndarray]:
        """Projection matrices (n, 3, 4) and pixels (n, 2) for ``nodes``."""
        nodes = list(nodes)
        P = np.stack([self._cam_index[n.view].P for n in nodes]) if nodes else np.zeros((0, 3, 4))
        xy = np.array([self.observations[n.view][n.index] for n in nodes]).reshape(-1, 2)
        return P, xy

    def gt_groups(self) -> dict[int, list[NodeId]]:
        """Observations of each ground-truth instance, in node order."""
        if self.gt_labels is None:
            raise ValueError("scene has no ground-truth labels")
        groups: dict[int, list[NodeId]] = {}
        for node in self.nodes():
            groups.setdefault(self.label(node), []).append(node)
        return groups

    def subset(self, keep: Iterable[NodeId]) -> tuple[Scene, dict[NodeId, NodeId]]:
        """Scene restricted to ``keep`` with observations re-indexed per view.

        Returns the reduced scene and a map from new node ids to original ones.
        """
        keep = sorted(set(keep))
        per_view: dict[int, list[int]] = {m: [] for m in self.views}
        for n in keep:
            per_view[n.view].append(n.index)
        back = {}
        obs, labels = {}, {}
        for m, idx in per_view.items():
            obs[m] = self.observations[m][idx].reshape(-1, 2)
            if self.gt_labels is not None:
                labels[m] = self.gt_labels[m][idx]
            for new, old in enumerate(idx):
                back[NodeId(m, new)] = NodeId(m, old)
        reduced = Scene(
            cameras=list(self.cameras),
            observations=obs,
            gt_points=self.gt_points,
            gt_labels=labels if self.gt_labels is not None else None,
            sigma=self.sigma,
            seed=self.seed,
        )
        return reduced, back
