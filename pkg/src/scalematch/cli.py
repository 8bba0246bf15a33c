"""``scalematch`` command line entry point.

Every subcommand also accepts ``--config FILE`` (a JSON object whose keys are
option names, e.g. ``{"k": 100, "seed": 7}``); explicit flags win over it.
The fully resolved options are written next to the outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from scalematch import __version__
from scalematch._io import atomic_write_text, write_json
from scalematch.dataset import (
    ANNOTATION_SCHEMA,
    DEFAULT_DETECTION_CAP,
    DETECTION_SCHEMA,
    load_annotations,
    load_detections,
    save_annotations,
    save_detections,
)
from scalematch.errors import ScaleMatchError
from scalematch.evaluation import REPORT_SCHEMA, EvalConfig, evaluate
from scalematch.sizes import (
    DEFAULT_ALPHA,
    DEFAULT_BINS,
    cluster_anchors,
    dataset_statistics,
    rectified_histogram,
    sparse_rate,
    uniform_histogram,
)
from scalematch.synth import SynthSpec, generate, parse_law, write_blank_images
from scalematch.tiling import (
    DEFAULT_OVERLAP,
    DEFAULT_TILE,
    PROVENANCE_SCHEMA,
    cut_dataset,
    mean_pixel_value,
    merge_detections,
    provenance_from_dict,
    provenance_to_dict,
)
from scalematch.transform import (
    DEFAULT_CLAMP,
    PLAN_SCHEMA,
    apply_scale_plan,
    build_monotone_map,
    build_monotone_plan,
    build_scale_plan,
)

log = logging.getLogger("scalematch")

COMMANDS = ("stats", "hist", "match", "msm", "tile", "merge", "eval", "synth", "cluster-anchors")
SCHEMAS = {
    "annotations": ANNOTATION_SCHEMA,
    "detections": DETECTION_SCHEMA,
    "scale_plan": PLAN_SCHEMA,
    "tile_provenance": PROVENANCE_SCHEMA,
    "eval_report": REPORT_SCHEMA,
}
_REQUIRED = {
    "stats": ("input",),
    "hist": ("input",),
    "match": ("source", "target", "out_dir"),
    "msm": ("source", "target", "out_dir"),
    "tile": ("input", "out_dir"),
    "merge": ("dets", "provenance", "out"),
    "eval": ("gt", "dets"),
    "synth": ("out",),
    "cluster-anchors": ("input",),
}
_NOT_ECHOED = {"func", "config", "command"}


class _Failure(Exception):
    def __init__(self, operation: str, cause: BaseException):
        super().__init__(str(cause))
        self.operation = operation
        self.cause = cause


@contextlib.contextmanager
def stage(operation: str):
    """Tag library errors with the operation that raised them."""
    try:
        yield
    except (ScaleMatchError, OSError, ValueError) as exc:
        raise _Failure(operation, exc) from exc


def _resolved(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _echo_config(args: argparse.Namespace, directory: str | os.PathLike, stem: str = "resolved_config") -> None:
    write_json(Path(directory) / f"{stem}.json", {"command": args.command, "options": _resolved(args)})


# ---------------------------------------------------------------------------
# subcommands


def cmd_stats(args) -> int:
    with stage("dataset.load_annotations"):
        ds = load_annotations(args.input)
    with stage("sizes.dataset_statistics"):
        stats = dataset_statistics(ds, args.include_ignore, args.include_uncertain)
    cols = ("absolute_size", "relative_size", "aspect_ratio")
    print(f"{'dataset':<16}{'absolute size':>18}{'relative size':>18}{'aspect ratio':>18}")
    fmt = {"absolute_size": "{:.1f}±{:.1f}", "relative_size": "{:.3f}±{:.3f}", "aspect_ratio": "{:.3f}±{:.3f}"}
    print(f"{ds.name[:15]:<16}" + "".join(f"{fmt[c].format(*stats[c]):>18}" for c in cols))
    if args.json:
        write_json(args.json, {"dataset": ds.name, **{c: {"mean": m, "std": s} for c, (m, s) in stats.items()}})
        _echo_config(args, Path(args.json).parent, Path(args.json).stem + ".config")
    return 0


def cmd_hist(args) -> int:
    with stage("dataset.load_annotations"):
        ds = load_annotations(args.input)
    with stage("sizes.rectified_histogram"):
        if args.plain:
            hist = uniform_histogram(ds, args.k, include_uncertain=args.include_uncertain)
        else:
            hist = rectified_histogram(ds, args.k, include_uncertain=args.include_uncertain)
    if args.out:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_low", "bin_high", "probability"])
        writer.writerows(hist.to_rows())
        atomic_write_text(args.out, buf.getvalue())
        _echo_config(args, Path(args.out).parent, Path(args.out).stem + ".config")

    # sparse rate with and without uncertain boxes, rectified vs plain
    for include_uncertain in (False, True):
        with stage("sizes.sparse_rate"):
            try:
                sr_rect = sparse_rate(rectified_histogram(ds, args.k, include_uncertain=include_uncertain), args.alpha)
                sr_plain = sparse_rate(uniform_histogram(ds, args.k, include_uncertain=include_uncertain), args.alpha)
            except ScaleMatchError as exc:
                log.warning("sparse rate (uncertain=%s) unavailable: %s", include_uncertain, exc)
                continue
        label = "with uncertain" if include_uncertain else "persons only"
        print(f"sparse rate ({label}, K={args.k}, alpha={args.alpha:g}): rectified {sr_rect:.2f}, plain {sr_plain:.2f}")
    return 0


def _clamp(args) -> tuple[float, float]:
    return (args.clamp_min, args.clamp_max)


def _apply_and_write(args, source, plan) -> None:
    out_dir = Path(args.out_dir)
    pixel = not args.annotations_only
    if pixel and not args.image_dir:
        raise _Failure("transform.apply_scale_plan", ValueError("--image-dir is required unless --annotations-only"))
    with stage("transform.apply_scale_plan"):
        matched = apply_scale_plan(
            source,
            plan,
            image_dir_in=args.image_dir if pixel else None,
            image_dir_out=out_dir / "images" if pixel else None,
            annotations_only=not pixel,
            interpolation=args.interpolation,
            workers=args.workers,
        )
    save_annotations(matched, out_dir / "annotations.json")
    write_json(out_dir / "scale_plan.json", plan.to_dict())
    _echo_config(args, out_dir)
    print(f"{plan.mode}: {len(plan.entries)} images, {plan.n_clamped} clamped, {plan.n_passthrough} without persons -> {out_dir}")


def cmd_match(args) -> int:
    with stage("dataset.load_annotations"):
        source = load_annotations(args.source)
        target = load_annotations(args.target)
    with stage("sizes.rectified_histogram"):
        hist = rectified_histogram(target, args.k)
    with stage("transform.build_scale_plan"):
        plan = build_scale_plan(source, hist, seed=args.seed, clamp=_clamp(args))
    _apply_and_write(args, source, plan)
    return 0


def cmd_msm(args) -> int:
    with stage("dataset.load_annotations"):
        source = load_annotations(args.source)
        target = load_annotations(args.target)
    with stage("sizes.rectified_histogram"):
        hist = rectified_histogram(target, args.k)
    with stage("transform.build_monotone_map"):
        mapping = build_monotone_map(source, hist)
    with stage("transform.build_monotone_plan"):
        plan = build_monotone_plan(source, mapping, clamp=_clamp(args))
    _apply_and_write(args, source, plan)
    return 0


def cmd_tile(args) -> int:
    with stage("dataset.load_annotations"):
        ds = load_annotations(args.input)
    out_dir = Path(args.out_dir)
    fill = None
    if args.fill and args.fill != "none":
        if not args.image_dir:
            raise _Failure("tiling.fill_ignore_regions", ValueError("--fill needs --image-dir"))
        with stage("tiling.mean_pixel_value"):
            if args.fill == "mean":
                fill = mean_pixel_value(Path(args.image_dir) / im.file_path for im in ds.images).tolist()
            else:
                fill = [float(v) for v in args.fill.split(",")]
    with stage("tiling.cut_dataset"):
        tiled = cut_dataset(
            ds,
            args.tile_w,
            args.tile_h,
            args.overlap,
            image_dir_in=args.image_dir,
            image_dir_out=out_dir / "images" if args.image_dir else None,
            fill_value=fill,
            workers=args.workers,
        )
    save_annotations(tiled.dataset, out_dir / "annotations.json")
    write_json(out_dir / "provenance.json", provenance_to_dict(tiled, args.tile_w, args.tile_h, args.overlap))
    _echo_config(args, out_dir)
    n_bg = sum(o.background for o in tiled.provenance.values())
    print(f"{len(ds.images)} images -> {len(tiled.dataset.images)} tiles ({n_bg} pure background) -> {out_dir}")
    return 0


def cmd_merge(args) -> int:
    with stage("dataset.load_detections"):
        dets = load_detections(args.dets, cap_per_image=10**9)
    with stage("tiling.load_provenance"):
        with open(args.provenance, encoding="utf-8") as fh:
            provenance = provenance_from_dict(json.load(fh))
    with stage("tiling.merge_detections"):
        merged = merge_detections(dets, provenance, args.nms_iou, args.cap)
    save_detections(merged, args.out)
    _echo_config(args, Path(args.out).parent, Path(args.out).stem + ".config")
    print(f"{len(dets)} tile detections -> {len(merged)} merged -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    with stage("dataset.load_annotations"):
        gt = load_annotations(args.gt)
    with stage("dataset.load_detections"):
        dets = load_detections(args.dets, cap_per_image=args.cap)
    raw = {"uncertain_as_ignore": args.uncertain_as_ignore}
    if args.iou_thresholds:
        raw["iou_thresholds"] = [float(t) for t in str(args.iou_thresholds).split(",")] if isinstance(
            args.iou_thresholds, str
        ) else list(args.iou_thresholds)
    if args.partitions:
        raw["partitions"] = args.partitions
    if args.fppi_points:
        raw["fppi_points"] = args.fppi_points
    with stage("evaluation.evaluate"):
        cfg = EvalConfig.from_dict(raw)
        report = evaluate(dets, gt, cfg)
    print(report.format_table())
    if args.out:
        write_json(args.out, report.to_dict(curves=False))
        _echo_config(args, Path(args.out).parent, Path(args.out).stem + ".config")
    if args.pr_csv_dir:
        for cell in report.cells.values():
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["score", "recall", "precision"])
            writer.writerows(zip(cell.scores.tolist(), cell.recall.tolist(), cell.precision.tolist()))
            name = f"pr_{cell.partition}_iou{int(round(cell.threshold * 100)):02d}.csv"
            atomic_write_text(Path(args.pr_csv_dir) / name, buf.getvalue())
    return 0


def cmd_synth(args) -> int:
    with stage("synth.generate"):
        spec = SynthSpec(
            n_images=args.n_images,
            boxes_per_image=(args.boxes_min, args.boxes_max),
            size_law=parse_law(args.size_law),
            aspect_law=parse_law(args.aspect_law),
            image_dims=(args.width, args.height),
            ignore_fraction=args.ignore_fraction,
            uncertain_fraction=args.uncertain_fraction,
            seed=args.seed,
            name=args.name,
        )
        ds = generate(spec)
    save_annotations(ds, args.out)
    if args.images_dir:
        write_blank_images(ds, args.images_dir)
    _echo_config(args, Path(args.out).parent, Path(args.out).stem + ".config")
    print(f"{len(ds.images)} images, {len(ds.boxes)} boxes -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    with stage("dataset.load_annotations"):
        ds = load_annotations(args.input)
    with stage("sizes.cluster_anchors"):
        sizes, ratios = cluster_anchors(ds, args.k, args.k_ratios, args.seed)
    print("anchor sizes:  (" + ", ".join(f"{v:.2f}" for v in sizes) + ")")
    print("aspect ratios: (" + ", ".join(f"{v:.2f}" for v in ratios) + ")")
    if args.json:
        write_json(args.json, {"sizes": sizes, "ratios": ratios})
        _echo_config(args, Path(args.json).parent, Path(args.json).stem + ".config")
    return 0


# ---------------------------------------------------------------------------
# parser


def _version_text() -> str:
    schemas = ", ".join(f"{k}={v}" for k, v in SCHEMAS.items())
    return f"scalematch {__version__} ({schemas})"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--workers", type=int, default=os.cpu_count(), help="per-image parallelism")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="scalematch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version_text())
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("stats", parents=[common], help="mean/std of absolute size, relative size, aspect ratio")
    p.add_argument("--in", dest="input")
    p.add_argument("--include-uncertain", action="store_true")
    p.add_argument("--include-ignore", action="store_true")
    p.add_argument("--json")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("hist", parents=[common], help="rectified size histogram as CSV + sparse rates")
    p.add_argument("--in", dest="input")
    p.add_argument("--k", type=int, default=DEFAULT_BINS)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--plain", action="store_true", help="equal-width histogram instead of rectified")
    p.add_argument("--include-uncertain", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_hist)

    for name, func, helptext in (
        ("match", cmd_match, "Scale Match a source dataset to a target size distribution"),
        ("msm", cmd_msm, "Monotone Scale Match a source dataset to a target size distribution"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--source")
        p.add_argument("--target")
        p.add_argument("--k", type=int, default=DEFAULT_BINS)
        if name == "match":
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--clamp-min", type=float, default=DEFAULT_CLAMP[0])
        p.add_argument("--clamp-max", type=float, default=DEFAULT_CLAMP[1])
        p.add_argument("--annotations-only", action="store_true")
        p.add_argument("--image-dir", help="source image directory (pixel mode)")
        p.add_argument("--interpolation", choices=("bilinear", "nearest"), default="bilinear")
        p.add_argument("--out-dir")
        p.set_defaults(func=func)

    p = sub.add_parser("tile", parents=[common], help="cut images into overlapping tiles")
    p.add_argument("--in", dest="input")
    p.add_argument("--tile-w", type=int, default=DEFAULT_TILE)
    p.add_argument("--tile-h", type=int, default=DEFAULT_TILE)
    p.add_argument("--overlap", type=int, default=DEFAULT_OVERLAP)
    p.add_argument("--image-dir")
    p.add_argument("--fill", default="none", help="'none', 'mean' or comma-separated channel values")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("merge", parents=[common], help="merge tile detections back with NMS")
    p.add_argument("--dets")
    p.add_argument("--provenance")
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=DEFAULT_DETECTION_CAP)
    p.add_argument("--out")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", parents=[common], help="size-partitioned AP / MR evaluation")
    p.add_argument("--gt")
    p.add_argument("--dets")
    p.add_argument("--iou-thresholds", help="comma-separated, default 0.25,0.5,0.75")
    p.add_argument("--no-uncertain-as-ignore", dest="uncertain_as_ignore", action="store_false")
    p.add_argument("--cap", type=int, default=DEFAULT_DETECTION_CAP)
    p.add_argument("--out")
    p.add_argument("--pr-csv-dir")
    p.set_defaults(func=cmd_eval, partitions=None, fppi_points=None)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n-images", type=int, default=100)
    p.add_argument("--boxes-min", type=int, default=1)
    p.add_argument("--boxes-max", type=int, default=10)
    p.add_argument("--size-law", default=f"lognormal:{math.log(18.0)!r},0.8")
    p.add_argument("--aspect-law", default="fixed:0.676")
    p.add_argument("--width", type=int, default=1920)
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--ignore-fraction", type=float, default=0.0)
    p.add_argument("--uncertain-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--images-dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster-anchors", parents=[common], help="k-means anchor sizes and aspect ratios")
    p.add_argument("--in", dest="input")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--k-ratios", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json")
    p.set_defaults(func=cmd_cluster)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    command = next((a for a in argv if a in COMMANDS), None)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or command is None:
        return
    sub = _subparser(parser, command)
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        sub.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(cfg, dict):
        sub.error("config file must hold a JSON object")
    dests = {a.dest for a in sub._actions} | set(sub._defaults)
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "in":
            dest = "input"
        if dest not in dests or dest in _NOT_ECHOED:
            sub.error(f"unknown config key {key!r} for {command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("scalematch: error: a subcommand is required", file=sys.stderr)
            return 2
        missing = [d for d in _REQUIRED[args.command] if getattr(args, d, None) in (None, "")]
        if missing:
            _subparser(parser, args.command).error(
                "missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing)
            )
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _Failure as exc:
        error = {"error": type(exc.cause).__name__, "operation": exc.operation, "message": str(exc.cause)}
    except (ScaleMatchError, OSError) as exc:
        error = {"error": type(exc).__name__, "operation": args.command, "message": str(exc)}
    print(json.dumps(error), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
