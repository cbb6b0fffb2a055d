"""Evaluation scores for predicted association groups.

Three families are reported, each as precision/recall/F1 (and IoU where
meaningful):

* group-level (``g_``): a predicted group matches the instance most of its
  members come from when at least two members carry that label; one group
  per instance may match, preferring the one with most correct members.
  Leftover observations count as singleton predictions.
* mean-point (``mp_``): per-group point precision/recall against the group's
  dominant instance, averaged over groups spanning at least two views.
* perfect-group (``pg_``): a group is correct when every member comes from
  one instance; only the largest such group per instance counts.

Reconstruction quality is the mean 3D error against the dominant
instance's true point and the mean squared reprojection error against that
instance's observations.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from cdog.geometry import project_many
from cdog.refine import group_bpe
from cdog.scene import NodeId, Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    fn: int

    def scores(self) -> tuple[float, float, float, float]:
        return prf(self.tp, self.fp, self.fn)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        log.debug("zero denominator in score; reporting 0")
        return 0.0
    return num / den


def prf(tp: float, fp: float, fn: float) -> tuple[float, float, float, float]:
    """Precision, recall, F1 and IoU; any zero denominator yields 0."""
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = _ratio(2 * p * r, p + r)
    iou = _ratio(tp, tp + fp + fn)
    return p, r, f1, iou


@dataclass
class MatchAssignment:
    pairs: dict[int, int]
    unmatched_pred: list[int]
    unmatched_gt: list[int]

    @property
    def counts(self) -> Counts:
        return Counts(len(self.pairs), len(self.unmatched_pred), len(self.unmatched_gt))


def _plurality(labels: Sequence[int]) -> tuple[int, int]:
    counts = Counter(labels)
    best = max(counts.values())
    label = min(k for k, v in counts.items() if v == best)
    return label, best


def prediction_sets(groups: Iterable[Sequence[NodeId]], outliers: Iterable[NodeId] = ()) -> list[tuple[NodeId, ...]]:
    """Groups followed by each outlier as its own singleton prediction."""
    return [tuple(g) for g in groups] + [(n,) for n in outliers]


def match_groups(pred: Sequence[Sequence[NodeId]], scene: Scene) -> MatchAssignment:
    """Assign predicted groups (by position) to ground-truth instances."""
    claims: dict[int, list[tuple[int, int]]] = {}
    unmatched = []
    for k, members in enumerate(pred):
        label, hits = _plurality([scene.label(n) for n in members]) if members else (-1, 0)
        if hits >= 2:
            claims.setdefault(label, []).append((hits, k))
        else:
            unmatched.append(k)
    pairs = {}
    for label, cands in claims.items():
        cands.sort(key=lambda hk: (-hk[0], hk[1]))
        pairs[cands[0][1]] = label
        unmatched.extend(k for _, k in cands[1:])
    gt_ids = sorted(scene.gt_groups())
    matched_gt = set(pairs.values())
    return MatchAssignment(pairs=dict(sorted(pairs.items())), unmatched_pred=sorted(unmatched),
                           unmatched_gt=[g for g in gt_ids if g not in matched_gt])


def group_scores(assignment: MatchAssignment) -> tuple[float, float, float, float]:
    return assignment.counts.scores()


def mean_point_scores(groups: Sequence[Sequence[NodeId]], scene: Scene) -> tuple[float, float, float, float]:
    """Averaged per-group point precision, recall, F1 and IoU."""
    gt_sizes = {g: len(m) for g, m in scene.gt_groups().items()}
    per_group = []
    for members in groups:
        if len({n.view for n in members}) < 2:
            continue
        label, tp = _plurality([scene.label(n) for n in members])
        fp = len(members) - tp
        fn = gt_sizes[label] - tp
        per_group.append(prf(tp, fp, fn))
    if not per_group:
        log.debug("no qualifying groups for mean-point scores")
        return 0.0, 0.0, 0.0, 0.0
    return tuple(float(x) for x in np.mean(per_group, axis=0))


def perfect_group_counts(groups: Sequence[Sequence[NodeId]], scene: Scene, complete: bool = False) -> Counts:
    """TP/FP/FN for perfect groups.

    Args:
        complete: Also require the group to contain every observation of
            its instance.
    """
    gt = scene.gt_groups()
    best: dict[int, tuple[int, int]] = {}
    for k, members in enumerate(groups):
        labels = {scene.label(n) for n in members}
        if len(members) < 2 or len(labels) != 1:
            continue
        label = labels.pop()
        if complete and len(members) != len(gt[label]):
            continue
        cur = best.get(label)
        if cur is None or (-len(members), k) < (-cur[0], cur[1]):
            best[label] = (len(members), k)
    tp = len(best)
    return Counts(tp=tp, fp=len(groups) - tp, fn=len(gt) - tp)


def perfect_group_scores(groups: Sequence[Sequence[NodeId]], scene: Scene, complete: bool = False) -> tuple[float, float, float]:
    p, r, f1, _ = perfect_group_counts(groups, scene, complete).scores()
    return p, r, f1


def reconstruction_errors(groups: Sequence[Sequence[NodeId]], scene: Scene) -> tuple[float, float, int]:
    """Mean 3D error, mean per-group BPE against ground-truth observations,
    and the number of groups that could not be triangulated.

    Both means are NaN when no group can be evaluated.
    """
    gt = scene.gt_groups()
    errs3d, bpes = [], []
    failed = 0
    for members in groups:
        if len(members) < 2:
            continue
        X, _ = group_bpe(members, scene)
        if X is None:
            failed += 1
            continue
        label, _ = _plurality([scene.label(n) for n in members])
        errs3d.append(float(np.linalg.norm(X - scene.gt_points[label])))
        P, xy = scene.stack(gt[label])
        with np.errstate(invalid="ignore", divide="ignore"):
            bpes.append(float(np.mean(np.sum((project_many(P, X[None]) - xy) ** 2, axis=-1))))
    err3d = float(np.mean(errs3d)) if errs3d else math.nan
    bpe = float(np.mean(bpes)) if bpes else math.nan
    return err3d, bpe, failed


@dataclass
class MetricsReport:
    """All score families for one scene (or a mean over scenes)."""

    g_p: float
    g_r: float
    g_f1: float
    g_iou: float
    mp_p: float
    mp_r: float
    mp_f1: float
    mp_iou: float
    pg_p: float
    pg_r: float
    pg_f1: float
    err3d: float
    bpe: float
    bpe_rms: float
    time_ms: float
    g_counts: Counts | None = None
    pg_counts: Counts | None = None
    untriangulable: int = 0
    extra: dict = field(default_factory=dict)

    SCORE_FIELDS = ("g_p", "g_r", "g_f1", "g_iou", "mp_p", "mp_r", "mp_f1", "mp_iou",
                    "pg_p", "pg_r", "pg_f1", "err3d", "bpe", "bpe_rms", "time_ms")

    def row(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.SCORE_FIELDS}

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(groups: Sequence[Sequence[NodeId]], outliers: Sequence[NodeId], scene: Scene,
             time_ms: float = math.nan, complete_pg: bool = False) -> MetricsReport:
    """Score a prediction against the scene's ground truth."""
    if not scene.has_ground_truth:
        raise ValueError("scene has no ground truth")
    groups = [tuple(g) for g in groups]
    assignment = match_groups(prediction_sets(groups, outliers), scene)
    g = group_scores(assignment)
    mp = mean_point_scores(groups, scene)
    pg_counts = perfect_group_counts(groups, scene, complete_pg)
    pg = pg_counts.scores()
    err3d, bpe, failed = reconstruction_errors(groups, scene)
    return MetricsReport(
        *g, *mp, *pg[:3], err3d=err3d, bpe=bpe,
        bpe_rms=math.sqrt(bpe) if not math.isnan(bpe) else math.nan,
        time_ms=time_ms, g_counts=assignment.counts, pg_counts=pg_counts, untriangulable=failed,
    )


def evaluate_result(result, scene: Scene, complete_pg: bool = False) -> MetricsReport:
    """:func:`evaluate` for an :class:`~cdog.pipeline.AssociationResult`."""
    return evaluate([g.members for g in result.groups], result.outliers, scene,
                    time_ms=result.stage_timings.get("total", math.nan), complete_pg=complete_pg)


def ground_truth_prediction(scene: Scene) -> tuple[list[tuple[NodeId, ...]], list[NodeId]]:
    """Ground-truth instances as a prediction (single-view instances become outliers)."""
    groups, outliers = [], []
    for _, members in sorted(scene.gt_groups().items()):
        if len(members) >= 2:
            groups.append(tuple(members))
        else:
            outliers.extend(members)
    return groups, sorted(outliers)


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, float]:
    """Unweighted mean over scenes; NaN entries are skipped per column."""
    out = {}
    for k in MetricsReport.SCORE_FIELDS:
        vals = np.array([getattr(r, k) for r in reports], dtype=float)
        vals = vals[~np.isnan(vals)]
        out[k] = float(vals.mean()) if vals.size else math.nan
    return out
