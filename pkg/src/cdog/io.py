"""JSON and CSV formats.

Scene files::

    {"format_version": 1, "sigma": s, "seed": n,
     "cameras": [{"id": m, "K": [[...]], "R": [[...]], "T": [...]}],
     "observations": [{"view": m, "index": i, "xy": [u, v], "gt": g}],
     "gt_points": [{"id": g, "xyz": [x, y, z]}]}

``gt`` and ``gt_points`` are optional. Association files::

    {"groups": [{"id": k, "members": [{"view": m, "index": i}]}],
     "outliers": [{"view": m, "index": i}],
     "timings_ms": {"init": ..., "prune": ..., "iqr": ..., "gap": ..., "total": ...}}

Files are written with sorted keys, no insignificant whitespace and
shortest round-trip float formatting, so equal content means equal bytes.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from cdog.errors import SceneFormatError
from cdog.geometry import CameraPose
from cdog.graph import AssociationGroup
from cdog.scene import NodeId, Scene

FORMAT_VERSION = 1

METRIC_COLUMNS = ["scene", "count", "sigma", "views", "method",
                  "g_p", "g_r", "g_f1", "g_iou", "mp_p", "mp_r", "mp_f1", "mp_iou",
                  "pg_p", "pg_r", "pg_f1", "err3d", "bpe", "bpe_rms", "time_ms"]


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def scene_to_dict(scene: Scene) -> dict:
    d: dict = {
        "format_version": FORMAT_VERSION,
        "cameras": [{"id": c.view_id, "K": _floats(c.K), "R": _floats(c.R), "T": _floats(c.T)}
                    for c in scene.cameras],
        "observations": [],
    }
    if scene.sigma is not None:
        d["sigma"] = float(scene.sigma)
    if scene.seed is not None:
        d["seed"] = int(scene.seed)
    for m in scene.views:
        for i, xy in enumerate(scene.observations[m]):
            obs = {"view": m, "index": i, "xy": _floats(xy)}
            if scene.gt_labels is not None:
                obs["gt"] = int(scene.gt_labels[m][i])
            d["observations"].append(obs)
    if scene.gt_points is not None:
        d["gt_points"] = [{"id": g, "xyz": _floats(x)} for g, x in enumerate(scene.gt_points)]
    return d


def scene_from_dict(d: dict) -> Scene:
    """Parse a scene dictionary.

    Raises:
        SceneFormatError: on any schema violation.
    """
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise SceneFormatError(f"unsupported format_version {d.get('format_version')!r}")
        cameras = [CameraPose(int(c["id"]), c["K"], c["R"], c["T"]) for c in d["cameras"]]
        per_view: dict[int, dict[int, tuple]] = {c.view_id: {} for c in cameras}
        has_gt = None
        for o in d["observations"]:
            m, i = int(o["view"]), int(o["index"])
            if m not in per_view:
                raise SceneFormatError(f"observation refers to unknown view {m}")
            if i in per_view[m]:
                raise SceneFormatError(f"duplicate observation ({m}, {i})")
            gt = o.get("gt")
            if has_gt is None:
                has_gt = gt is not None
            elif has_gt != (gt is not None):
                raise SceneFormatError("either all or no observations carry gt labels")
            xy = [float(v) for v in o["xy"]]
            if len(xy) != 2:
                raise SceneFormatError(f"observation ({m}, {i}) must have 2 coordinates")
            per_view[m][i] = (xy, gt)
        observations, labels = {}, {}
        for m, entries in per_view.items():
            if sorted(entries) != list(range(len(entries))):
                raise SceneFormatError(f"view {m}: observation indices must be 0..n-1")
            observations[m] = np.array([entries[i][0] for i in range(len(entries))]).reshape(-1, 2)
            labels[m] = np.array([entries[i][1] for i in range(len(entries))], dtype=np.int64) if has_gt else None
        gt_points = None
        if "gt_points" in d:
            pts = sorted(d["gt_points"], key=lambda p: p["id"])
            if [p["id"] for p in pts] != list(range(len(pts))):
                raise SceneFormatError("gt_points ids must be 0..G-1")
            gt_points = np.array([p["xyz"] for p in pts], dtype=float).reshape(-1, 3)
        if has_gt and gt_points is not None:
            for m, lab in labels.items():
                if lab.size and (lab.min() < 0 or lab.max() >= len(gt_points)):
                    raise SceneFormatError(f"view {m}: gt label out of range")
        return Scene(
            cameras=cameras,
            observations=observations,
            gt_points=gt_points,
            gt_labels=labels if has_gt else None,
            sigma=float(d["sigma"]) if d.get("sigma") is not None else None,
            seed=int(d["seed"]) if d.get("seed") is not None else None,
        )
    except SceneFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed scene: {exc}") from exc


def write_scene(path: str | Path, scene: Scene) -> None:
    write_json(path, scene_to_dict(scene))


def read_scene(path: str | Path) -> Scene:
    try:
        d = read_json(path)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: not JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise SceneFormatError(f"{path}: top level must be an object")
    return scene_from_dict(d)


def _node(n: NodeId) -> dict:
    return {"view": int(n.view), "index": int(n.index)}


def result_to_dict(result) -> dict:
    return {
        "method": result.method,
        "tau": result.tau,
        "groups": [{"id": g.group_id, "members": [_node(n) for n in g.members]} for g in result.groups],
        "outliers": [_node(n) for n in result.outliers],
        "timings_ms": {k: float(v) for k, v in result.stage_timings.items()},
    }


def result_from_dict(d: dict):
    from cdog.pipeline import AssociationResult

    try:
        groups = [AssociationGroup(int(g["id"]), tuple(NodeId(int(n["view"]), int(n["index"])) for n in g["members"]))
                  for g in d["groups"]]
        outliers = [NodeId(int(n["view"]), int(n["index"])) for n in d["outliers"]]
        return AssociationResult(groups=groups, outliers=outliers,
                                 stage_timings=dict(d.get("timings_ms", {})),
                                 tau=d.get("tau"), method=d.get("method", "cdog"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed association file: {exc}") from exc


def check_result_matches(result, scene: Scene) -> None:
    """Every scene observation must appear exactly once in the prediction."""
    seen = [n for g in result.groups for n in g.members] + list(result.outliers)
    if len(seen) != len(set(seen)) or set(seen) != set(scene.nodes()):
        raise SceneFormatError("prediction does not partition the scene's observations")


def format_value(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_value(r[c]) for c in columns])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str], append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = csv_text(rows, columns)
    if append and path.exists() and path.stat().st_size > 0:
        text = text.split("\n", 1)[1]
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
