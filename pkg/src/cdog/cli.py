"""``cdog`` command-line interface.

Exit codes: 0 success, 2 invalid flags, 3 IO failure, 4 malformed scene or
prediction, 5 no scene succeeded in a sweep. ``CDOG_LOG`` (off, info, debug)
sets log verbosity; the default is warnings only.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from cdog import bench, io
from cdog.baselines import METHODS, BaselineConfig, run_method
from cdog.benchmark import BenchmarkSpec, RigSpec, default_point_counts, default_sigmas, drop_views, generate_benchmark
from cdog.errors import SceneFormatError
from cdog.graph import threshold_from_sigma
from cdog.metrics import evaluate_result
from cdog.pipeline import CdogConfig

log = logging.getLogger("cdog")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_NO_SCENE = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def configure_logging() -> None:
    level = os.environ.get("CDOG_LOG", "").strip().lower()
    if level == "off":
        logging.disable(logging.CRITICAL)
        return
    logging.basicConfig(
        level={"info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _number_list(text: str, kind=float) -> list:
    """Parse ``"1,2,5"`` or ``"start:stop:step"`` (stop inclusive)."""
    try:
        if ":" in text:
            parts = [kind(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else kind(1)
            if step <= 0:
                raise ValueError
            out, k = [], 0
            while start + k * step <= stop + 1e-9:
                out.append(kind(round(start + k * step, 10)) if kind is float else start + k * step)
                k += 1
            return out
        return [kind(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None


def _int_list(text: str) -> list[int]:
    return _number_list(text, int)


def _float_list(text: str) -> list[float]:
    return _number_list(text, float)


def _method_list(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    unknown = [n for n in names if n not in METHODS]
    if not names or unknown:
        raise argparse.ArgumentTypeError(f"unknown method(s) {unknown}; known: {sorted(METHODS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdog", description="Descriptor-free multi-view point association.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    gen.add_argument("--out", required=True, type=Path)
    gen.add_argument("--points", type=_int_list, default=None, help="instance counts, e.g. 5,10 or 1:20")
    gen.add_argument("--sigmas", type=_float_list, default=None, help="noise levels in px, e.g. 0,1 or 0:5:0.25")
    gen.add_argument("--batches", type=int, default=5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--rig", type=Path, default=None, help="JSON file with rig parameters")
    gen.add_argument("--keep-views", type=int, default=None)
    gen.add_argument("--min-separation", type=float, default=0.0,
                     help="reject points whose projections come closer than this many px")

    asc = sub.add_parser("associate", help="group one scene's observations")
    asc.add_argument("--scene", required=True, type=Path)
    asc.add_argument("--out", required=True, type=Path)
    asc.add_argument("--method", default="cdog", choices=sorted(METHODS))
    asc.add_argument("--delta", type=float, default=0.5)
    asc.add_argument("--tau-alpha", type=float, default=2.0)
    asc.add_argument("--iqr-alpha", type=float, default=2.0)
    asc.add_argument("--sigma", type=float, default=None)
    asc.add_argument("--no-gap-filter", action="store_true")
    asc.add_argument("--no-iqr", action="store_true")
    _add_view_flags(asc)

    ev = sub.add_parser("evaluate", help="score a prediction and append a CSV row")
    ev.add_argument("--pred", required=True, type=Path)
    ev.add_argument("--scene", required=True, type=Path)
    ev.add_argument("--out", required=True, type=Path)
    ev.add_argument("--complete-pg", action="store_true", help="perfect groups must also be complete")
    _add_view_flags(ev)

    b = sub.add_parser("bench", help="run methods over a dataset")
    b.add_argument("--dataset", required=True, type=Path)
    b.add_argument("--methods", type=_method_list, default=["cdog"])
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--sigmas", type=_float_list, default=None, help="restrict to these noise levels")
    b.add_argument("--points", type=_int_list, default=None, help="restrict to these instance counts")

    ab = sub.add_parser("ablate", help="score C-DOG against the number of retained views")
    ab.add_argument("--dataset", required=True, type=Path)
    ab.add_argument("--out", required=True, type=Path)
    ab.add_argument("--sigma", type=float, default=3.0)
    ab.add_argument("--views", type=_int_list, default=list(range(2, 11)))
    ab.add_argument("--view-seed", type=int, default=0)
    ab.add_argument("--threads", type=int, default=1)
    ab.add_argument("--points", type=_int_list, default=None)
    return parser


def _add_view_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--keep-views", type=int, default=None, help="keep K randomly chosen views")
    p.add_argument("--view-seed", type=int, default=0)


def _load_scene(path: Path, keep_views: int | None, view_seed: int):
    scene = io.read_scene(path)
    if keep_views is not None:
        if not 2 <= keep_views <= len(scene.views):
            raise UsageError(f"--keep-views must be in [2, {len(scene.views)}]")
        scene = drop_views(scene, keep_views, view_seed)
    return scene


def cmd_generate(args) -> int:
    rig = None
    if args.rig is not None:
        try:
            rig = RigSpec.from_dict(io.read_json(args.rig))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid rig file: {exc}") from exc
    try:
        spec = BenchmarkSpec(
            point_counts=tuple(args.points or default_point_counts()),
            sigmas=tuple(args.sigmas if args.sigmas is not None else default_sigmas()),
            batches=args.batches,
            seed=args.seed,
            keep_views=args.keep_views,
            min_separation_px=args.min_separation,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    manifest = generate_benchmark(spec, rig, args.out)
    log.info("wrote %d scenes to %s", len(manifest["scenes"]), args.out)
    return EXIT_OK


def cmd_associate(args) -> int:
    scene = _load_scene(args.scene, args.keep_views, args.view_seed)
    try:
        if args.method == "cdog":
            cfg = CdogConfig(sigma=args.sigma, tau_alpha=args.tau_alpha, delta=args.delta,
                             iqr_alpha=args.iqr_alpha, iqr_enabled=not args.no_iqr,
                             gap_enabled=not args.no_gap_filter)
        elif args.method in ("greedy", "cca"):
            tau = threshold_from_sigma(args.sigma, args.tau_alpha) if args.sigma is not None else None
            cfg = BaselineConfig(method=args.method, tau=tau, tau_alpha=args.tau_alpha)
        else:
            cfg = None
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = run_method(args.method, scene, cfg)
    io.write_json(args.out, io.result_to_dict(result))
    log.info("%s: %d groups, %d outliers", args.scene, len(result.groups), len(result.outliers))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scene = _load_scene(args.scene, args.keep_views, args.view_seed)
    if not scene.has_ground_truth:
        raise SceneFormatError(f"{args.scene}: no ground truth labels")
    try:
        pred = io.read_json(args.pred)
    except ValueError as exc:
        raise SceneFormatError(f"{args.pred}: not JSON ({exc})") from exc
    result = io.result_from_dict(pred)
    io.check_result_matches(result, scene)
    report = evaluate_result(result, scene, complete_pg=args.complete_pg)
    row = {"scene": str(args.scene), "count": len(scene.gt_groups()), "sigma": scene.sigma,
           "views": len(scene.views), "method": result.method, **report.row()}
    io.write_csv(args.out, [row], io.METRIC_COLUMNS, append=True)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    summary = bench.run_bench(args.dataset, args.methods, args.out, workers=args.threads,
                              sigmas=args.sigmas, counts=args.points)
    return EXIT_OK if summary["ok"] else EXIT_NO_SCENE


def cmd_ablate(args) -> int:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    try:
        bench.run_view_ablation(args.dataset, args.out, sigma=args.sigma, views=args.views,
                                view_seed=args.view_seed, workers=args.threads, counts=args.points)
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_NO_SCENE
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "associate": cmd_associate,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cdog: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SceneFormatError as exc:
        print(f"cdog: malformed input: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (OSError, KeyError) as exc:
        print(f"cdog: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"cdog: malformed input: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
