"""Benchmark sweeps over a generated dataset.

Results are always emitted in ``(count, batch, sigma, method)`` order, so the
output bytes do not depend on the number of workers; only ``time_ms``
columns vary between runs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from cdog import io
from cdog.baselines import run_method
from cdog.benchmark import drop_views
from cdog.metrics import MetricsReport, aggregate, evaluate_result
from cdog.pipeline import CdogConfig
from cdog.rng import derive_seed

log = logging.getLogger(__name__)

SCORE_COLUMNS = list(MetricsReport.SCORE_FIELDS)
AGGREGATE_COLUMNS = ["method", "count", "sigma", "scenes"] + SCORE_COLUMNS
TIMING_COLUMNS = ["method", "count", "scenes", "time_ms"]
ABLATION_COLUMNS = ["views", "scenes", "g_f1", "g_iou", "mp_p", "mp_r", "mp_f1", "mp_iou",
                    "pg_p", "pg_r", "pg_f1", "err3d", "bpe", "time_ms"]


@dataclass(frozen=True)
class Task:
    root: str
    file: str
    count: int
    batch: int
    sigma: float
    method: str
    keep_views: int | None = None
    view_seed: int = 0
    config: object = None


def load_manifest(dataset: str | Path) -> dict:
    root = Path(dataset)
    manifest = io.read_json(root / "manifest.json")
    if manifest.get("format_version") != io.FORMAT_VERSION:
        raise ValueError(f"{root}: unsupported manifest version")
    return manifest


def select_entries(manifest: dict, sigmas: Iterable[float] | None = None,
                   counts: Iterable[int] | None = None) -> list[dict]:
    entries = manifest["scenes"]
    if sigmas is not None:
        wanted = [float(s) for s in sigmas]
        entries = [e for e in entries if any(abs(e["sigma"] - s) < 1e-9 for s in wanted)]
    if counts is not None:
        wanted_c = set(counts)
        entries = [e for e in entries if e["count"] in wanted_c]
    return sorted(entries, key=lambda e: (e["count"], e["batch"], e["sigma"]))


def run_task(task: Task) -> dict:
    """Associate and score one scene; failures come back as ``{"error": ...}``."""
    try:
        scene = io.read_scene(Path(task.root) / task.file)
        if task.keep_views is not None:
            scene = drop_views(scene, task.keep_views, derive_seed(task.view_seed, task.file))
        result = run_method(task.method, scene, task.config)
        report = evaluate_result(result, scene)
    except Exception as exc:  # reported per scene, never fatal for the sweep
        log.warning("%s [%s]: %s", task.file, task.method, exc)
        return {"error": f"{type(exc).__name__}: {exc}", "scene": task.file, "method": task.method}
    row = {"scene": task.file, "count": task.count, "sigma": task.sigma,
           "views": len(scene.views), "method": task.method}
    row.update(report.row())
    return row


def map_tasks(tasks: Sequence[Task], workers: int = 1) -> list[dict]:
    if workers <= 1:
        return [run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_task, tasks, chunksize=4))


def _mean_rows(rows: list[dict]) -> dict:
    reports = [MetricsReport(**{k: r[k] for k in SCORE_COLUMNS}) for r in rows]
    return aggregate(reports)


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Per ``(method, count, sigma)`` unweighted means of the scene rows."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["method"], r["count"], r["sigma"]), []).append(r)
    out = []
    for (method, count, sigma), rs in sorted(cells.items()):
        out.append({"method": method, "count": count, "sigma": sigma, "scenes": len(rs), **_mean_rows(rs)})
    return out


def timing_rows(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list[float]] = {}
    for r in rows:
        cells.setdefault((r["method"], r["count"]), []).append(r["time_ms"])
    return [{"method": m, "count": c, "scenes": len(t), "time_ms": float(np.mean(t))}
            for (m, c), t in sorted(cells.items())]


def run_bench(dataset: str | Path, methods: Sequence[str], out_dir: str | Path, workers: int = 1,
              sigmas=None, counts=None, configs: dict | None = None) -> dict:
    """Run every selected scene with every method and write the CSV reports.

    Writes ``scenes.csv`` (one row per scene and method), ``aggregate.csv``
    (the count-by-sigma score grid per method) and ``timing.csv``
    (mean runtime per instance count).

    Returns a summary with the number of successful and failed tasks.
    """
    manifest = load_manifest(dataset)
    entries = select_entries(manifest, sigmas, counts)
    configs = configs or {}
    tasks = [Task(str(dataset), e["file"], e["count"], e["batch"], float(e["sigma"]), m, config=configs.get(m))
             for e in entries for m in methods]
    results = map_tasks(tasks, workers)
    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    out = Path(out_dir)
    io.write_csv(out / "scenes.csv", ok, io.METRIC_COLUMNS)
    io.write_csv(out / "aggregate.csv", aggregate_rows(ok), AGGREGATE_COLUMNS)
    io.write_csv(out / "timing.csv", timing_rows(ok), TIMING_COLUMNS)
    if failed:
        io.write_csv(out / "failures.csv", failed, ["scene", "method", "error"])
    log.info("bench: %d ok, %d failed", len(ok), len(failed))
    return {"ok": len(ok), "failed": len(failed), "rows": ok}


def run_view_ablation(dataset: str | Path, out_file: str | Path, sigma: float = 3.0,
                      views: Sequence[int] = tuple(range(2, 11)), view_seed: int = 0,
                      workers: int = 1, counts=None, config: CdogConfig | None = None) -> list[dict]:
    """Score C-DOG with ``k`` randomly retained views for each ``k`` in ``views``.

    Writes one row per view count with the mean scores and runtime.
    """
    manifest = load_manifest(dataset)
    entries = select_entries(manifest, [sigma], counts)
    rows = []
    for k in views:
        tasks = [Task(str(dataset), e["file"], e["count"], e["batch"], float(e["sigma"]), "cdog",
                      keep_views=k, view_seed=view_seed, config=config) for e in entries]
        res = [r for r in map_tasks(tasks, workers) if "error" not in r]
        if not res:
            raise RuntimeError(f"no scene succeeded with {k} views")
        mean = _mean_rows(res)
        rows.append({"views": k, "scenes": len(res), **{c: mean[c] for c in ABLATION_COLUMNS[2:]}})
    io.write_csv(out_file, rows, ABLATION_COLUMNS)
    return rows


def strip_columns(csv_text: str, drop: Sequence[str] = ("time_ms",)) -> str:
    """CSV text with the named columns removed, for byte comparisons."""
    lines = csv_text.splitlines()
    if not lines:
        return ""
    header = lines[0].split(",")
    keep = [i for i, h in enumerate(header) if h not in drop]
    return "\n".join(",".join(row.split(",")[i] for i in keep) for row in lines) + "\n"


def finite_or_nan(x: float) -> float:
    return x if math.isfinite(x) else math.nan
