"""Multimodal stixels from LiDAR range images: generate, solve, evaluate and render.

Exit codes: 0 success, 2 usage error, 3 missing or unwritable path,
4 malformed input document, 5 input that parses but violates an invariant
(parameter bounds, scan consistency, mismatched shapes).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, experiments, formats, metrics
from .model import SCALAR_PARAMS, ModelParams, validate_scan
from .solver import solve_scan
from .synthetic import SceneSpec, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PATH = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters",
                             "start from --params (or the shipped defaults) and override single values")
    g.add_argument("--params", metavar="FILE", help="parameter file")
    for name in SCALAR_PARAMS:
        g.add_argument(_flag(name), dest=name, type=float, metavar="X", help=f"override {name}")


def _params(args) -> ModelParams:
    base = formats.read_params(args.params) if args.params else formats.read_params(formats.default_params_path())
    overrides = {k: getattr(args, k) for k in SCALAR_PARAMS if getattr(args, k, None) is not None}
    return replace(base, **overrides)


def _read_valid_scan(path: str):
    scan = formats.read_scan(path)
    problems = validate_scan(scan)
    if problems:
        shown = "\n  ".join(problems[:5])
        more = f"\n  ... and {len(problems) - 5} more" if len(problems) > 5 else ""
        raise CliError(f"{path}: invalid scan:\n  {shown}{more}", EXIT_VALIDATION)
    return scan


def _read_reference(path: str, scan):
    labels, classes = formats.read_labels(path)
    if labels.shape != scan.ranges.shape:
        raise CliError(f"{path}: labels are {labels.shape[0]}x{labels.shape[1]} but scan is "
                       f"{scan.width}x{scan.height}", EXIT_VALIDATION)
    target = scan.stixel_classes
    if classes.names != target.names:
        # re-index by name onto the stixel class set
        try:
            lut = np.array([target.index(n) for n in classes.names] + [metrics.UNLABELED])
        except KeyError as exc:
            raise CliError(f"{path}: {exc.args[0]} is not a stixel class of the scan", EXIT_VALIDATION) from None
        labels = lut[labels]
    return labels


def _workers(args) -> int:
    if args.workers < 1:
        raise CliError("--workers must be >= 1", EXIT_VALIDATION)
    return args.workers


def _ensure_parent(path: str) -> None:
    parent = Path(path).parent
    if not parent.is_dir():
        raise CliError(f"{path}: output directory {parent} does not exist", EXIT_PATH)


# ----------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    spec = formats.read_scene(args.scene) if args.scene else SceneSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.out_dir)
    if not out.is_dir():
        raise CliError(f"{out}: output directory does not exist", EXIT_PATH)
    scene = generate(spec)
    formats.write_scan(scene.scan, out / "scan.txt")
    formats.write_world(scene.truth, out / "truth.txt")
    formats.write_labels(scene.labels, scene.scan.stixel_classes, out / "labels.txt")
    formats.write_scene(spec, out / "scene.txt")
    print(f"wrote {out / 'scan.txt'} ({scene.scan.width}x{scene.scan.height}), truth.txt, labels.txt, scene.txt")
    return EXIT_OK


def cmd_solve(args) -> int:
    params = _params(args)
    workers = _workers(args)
    scan = _read_valid_scan(args.scan)
    _ensure_parent(args.out)
    start = time.perf_counter()
    sol = solve_scan(scan, params, workers=workers, max_candidates=args.max_candidates)
    elapsed = time.perf_counter() - start
    formats.write_world(sol.world, args.out)
    print(f"columns {scan.width} rows {scan.height} stixels {sol.world.n_stixels}")
    print(f"energy {float(np.sum(sol.energies)):.6f}")
    if args.per_column:
        for i, e in enumerate(sol.energies):
            print(f"column {i} energy {e:.6f}")
    print(f"time {elapsed:.3f} s ({workers} worker{'s' if workers > 1 else ''})")
    return EXIT_OK


def cmd_eval(args) -> int:
    params = _params(args)
    scan = _read_valid_scan(args.scan)
    world = formats.read_world(args.world)
    reference = _read_reference(args.labels, scan)
    if len(world) != scan.width or world.height != scan.height:
        raise CliError(f"world is {len(world)}x{world.height} but scan is {scan.width}x{scan.height}",
                       EXIT_VALIDATION)
    if world.classes.names != scan.stixel_classes.names:
        raise CliError("world and scan use different stixel class sets", EXIT_VALIDATION)
    report = metrics.evaluate(scan, world, reference, args.threshold, params.sensor_height_m, args.count_invalid)
    report.extra.update({
        "threshold": repr(args.threshold),
        "denominator": "all_points" if args.count_invalid else "valid_points",
        "params_sha256": formats.params_hash(params),
    })
    text = formats.dumps_report(report)
    if args.out:
        _ensure_parent(args.out)
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    if args.figure:
        _ensure_parent(args.figure)
        from .plotting import iou_figure
        iou_figure(report, args.figure)
    sys.stdout.write(text)
    return EXIT_OK


def _cases(args, scan_paths: Sequence[str], label_paths: Sequence[str]) -> list[experiments.Case]:
    if len(scan_paths) != len(label_paths):
        raise CliError("give one --labels per --scan", EXIT_USAGE)
    cases = []
    for sp, lp in zip(scan_paths, label_paths):
        scan = _read_valid_scan(sp)
        cases.append(experiments.Case(scan, _read_reference(lp, scan)))
    return cases


def _write_rows(args, rows, figure) -> None:
    text = formats.dumps_table(rows)
    if args.out:
        _ensure_parent(args.out)
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    if args.figure:
        _ensure_parent(args.figure)
        figure(rows, args.figure)
    sys.stdout.write(text)


def cmd_sweep(args) -> int:
    params = _params(args)
    workers = _workers(args)
    if args.param not in SCALAR_PARAMS:
        raise CliError(f"unknown parameter {args.param!r}; choose from {', '.join(SCALAR_PARAMS)}", EXIT_USAGE)
    if args.steps < 1:
        raise CliError("--steps must be >= 1", EXIT_VALIDATION)
    values = experiments.grid(args.min, args.max, args.steps)
    for v in values:  # check the whole grid against the parameter bounds before any work
        replace(params, **{args.param: float(v)})
    cases = _cases(args, args.scan, args.labels)
    rows = experiments.sweep(cases, params, args.param, values, args.threshold, workers, args.count_invalid)
    from .plotting import sweep_figure
    _write_rows(args, rows, lambda r, p: sweep_figure(r, p, args.param))
    return EXIT_OK


def cmd_ablate(args) -> int:
    params = _params(args)
    workers = _workers(args)
    cases = _cases(args, args.scan, args.labels)
    rows = experiments.ablation(cases, params, args.threshold, workers, args.count_invalid)
    from .plotting import ablation_figure
    _write_rows(args, rows, ablation_figure)
    return EXIT_OK


def cmd_render(args) -> int:
    world = formats.read_world(args.world)
    scan = _read_valid_scan(args.scan) if args.scan else None
    _ensure_parent(args.out)
    formats.render(world, scan, args.out, upscale=args.upscale)
    print(f"wrote {args.out} ({len(world) * args.upscale}x{world.height * args.upscale})")
    return EXIT_OK


def cmd_defaults(args) -> int:
    text = formats.dumps_scene(SceneSpec()) if args.what == "scene" else formats.dumps_params(ModelParams())
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=0.05,
                   help="relative range deviation above which a point is an outlier (default 0.05)")
    p.add_argument("--count-invalid", action="store_true",
                   help="divide the outlier count by all points instead of valid points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmstixel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="write a synthetic scan with ground truth")
    p.add_argument("out_dir", help="directory for scan.txt, truth.txt, labels.txt and scene.txt")
    p.add_argument("--scene", metavar="FILE", help="scene spec file (default scene otherwise)")
    p.add_argument("--seed", type=int, help="override the scene's random seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="compute the stixel world of a scan")
    p.add_argument("scan")
    p.add_argument("out", help="output world file")
    p.add_argument("--workers", type=int, default=1, help="threads used for the columns (default 1)")
    p.add_argument("--max-candidates", type=int, metavar="K",
                   help="cap OBJECT distance candidates per segment (exact when omitted)")
    p.add_argument("--per-column", action="store_true", help="also print every column's energy")
    _add_param_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="outlier rate, IoU and compression rate of a world")
    p.add_argument("scan")
    p.add_argument("world")
    p.add_argument("labels", help="per-point reference labels")
    p.add_argument("--out", metavar="FILE", help="also write the report here")
    p.add_argument("--figure", metavar="PNG", help="per-class IoU bar chart")
    _add_eval_flags(p)
    _add_param_flags(p)
    p.set_defaults(func=cmd_eval)

    for name, helptext, func in (("sweep", "sweep one parameter over a grid", cmd_sweep),
                                 ("ablate", "compare depth-only, single-semantics and multimodal weights",
                                  cmd_ablate)):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scan", action="append", required=True, help="scan file (repeatable)")
        p.add_argument("--labels", action="append", required=True, help="labels of the matching --scan")
        if name == "sweep":
            p.add_argument("--param", default="w_sem_lidar", help="parameter to sweep (default w_sem_lidar)")
            p.add_argument("--min", type=float, default=0.0)
            p.add_argument("--max", type=float, default=5.0)
            p.add_argument("--steps", type=int, default=6)
        p.add_argument("--out", metavar="CSV", help="also write the table here")
        p.add_argument("--figure", metavar="PNG", help="figure of the table")
        p.add_argument("--workers", type=int, default=1)
        _add_eval_flags(p)
        _add_param_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("render", help="draw a world as a P6 image, one pixel column per scan column")
    p.add_argument("world")
    p.add_argument("out", help="output .ppm")
    p.add_argument("--scan", help="check the world against this scan's shape")
    p.add_argument("--upscale", type=int, default=1, help="pixels per cell (default 1)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("defaults", help="print the default parameter or scene file")
    p.add_argument("what", choices=("params", "scene"))
    p.set_defaults(func=cmd_defaults)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mmstixel: {exc}", file=sys.stderr)
        return exc.code
    except formats.FormatError as exc:
        print(f"mmstixel: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        print(f"mmstixel: {exc.filename or exc}: {exc.strerror or 'cannot access'}", file=sys.stderr)
        return EXIT_PATH
    except ValueError as exc:
        print(f"mmstixel: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
