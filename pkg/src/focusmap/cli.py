"""Command-line entry point: ``focusmap <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import ManifestError, PipelineConfig, find_manifests, load_config, load_manifest, preset
from .pipeline import (Sources, load_context, prepare_out, run, source_manifest, stage_context, stage_detect,
                       stage_filter, stage_saliency, stage_segment, stage_track)
from .regularizer import write_fraction_manifest

log = logging.getLogger("focusmap")


def _config(args) -> PipelineConfig:
    cfg = preset(args.preset) if args.preset else PipelineConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    return cfg


def _sources(args) -> Sources:
    return Sources(detections=args.detections, detector_url=args.detector_url, mock_vlm=args.mock_vlm,
                   cache_dir=args.cache_dir, max_in_flight=args.max_in_flight)


def _common(p: argparse.ArgumentParser, sources: bool = True) -> None:
    p.add_argument("--dataset", type=Path, required=True, help="directory of trajectory subdirectories")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--config", type=Path, help="JSON file with pipeline config fields")
    p.add_argument("--preset", choices=["carla", "robot"], help="hyperparameter preset (config file overrides it)")
    if sources:
        p.add_argument("--detections", type=Path,
                       help="detections fixture file, or directory of <trajectory>/detections.json "
                            "(default: detections.json next to each manifest)")
        p.add_argument("--detector-url", help="detector service base URL (POST /detect)")
        p.add_argument("--mock-vlm", type=Path, help="scripted VLM fixture instead of the HTTP endpoint")
        p.add_argument("--cache-dir", type=Path, help="cache for detector service responses")
        p.add_argument("--max-in-flight", type=int, default=4, help="concurrent requests per service")


def _each_trajectory(args, fn) -> int:
    """Apply ``fn(trajectory, tdir)`` to every trajectory; returns an exit code."""
    status = 0
    for path in find_manifests(args.dataset):
        try:
            trajectory = load_manifest(path)
            fn(trajectory, prepare_out(trajectory, args.out))
            print(f"{trajectory.name}: ok")
        except Exception as exc:
            print(f"{path.parent.name}: error: {exc}", file=sys.stderr)
            status = 1
            if getattr(args, "strict", False):
                break
    return status


def cmd_run(args) -> int:
    report = run(args.dataset, args.out, _config(args), _sources(args), jobs=args.jobs, strict=args.strict,
                 formats=tuple(args.formats.split(",")))
    for r in report.trajectories:
        line = f"{r.name}: {r.status}"
        print(line if r.status == "ok" else f"{line}: {r.error}")
    if args.strict and report.failed:
        return 1
    return 0


def cmd_stage(args) -> int:
    cfg = _config(args)
    sources = _sources(args) if hasattr(args, "mock_vlm") else None
    stage = args.command

    def step(trajectory, tdir):
        if stage == "context":
            stage_context(trajectory, tdir, sources.transport(trajectory), cfg)
        elif stage == "detect":
            stage_detect(trajectory, tdir, sources.detector(trajectory), cfg)
        elif stage == "track":
            stage_track(trajectory, tdir, cfg)
        elif stage == "segment":
            stage_segment(trajectory, tdir)
        elif stage == "filter":
            # scripted answers continue after the context request
            _, used = load_context(tdir)
            stage_filter(trajectory, tdir, sources.detector(trajectory), sources.transport(trajectory, used), cfg)
        elif stage == "saliency":
            stage_saliency(trajectory, tdir, cfg, tuple(args.formats.split(",")))

    return _each_trajectory(args, step)


def cmd_confound(args) -> int:
    from .confound import confound

    written = confound(args.dataset, args.out, args.icon_config)
    print(f"wrote {len(written)} confounded trajectories to {args.out}")
    return 0


def cmd_overlay(args) -> int:
    from .overlay import overlay

    rng = None
    if args.frames:
        a, _, b = args.frames.partition(":")
        rng = (int(a), int(b or a))
    written = overlay(args.trajectory_out, rng, boxes=args.boxes)
    print(f"wrote {len(written)} overlays")
    return 0


def cmd_fraction(args) -> int:
    status = 0
    args.out.mkdir(parents=True, exist_ok=True)
    for path in find_manifests(args.dataset):
        try:
            trajectory = load_manifest(path, check_images=False)
        except ManifestError as exc:
            print(f"{path.parent.name}: error: {exc}", file=sys.stderr)
            status = 1
            continue
        tdir = args.out / trajectory.name
        tdir.mkdir(exist_ok=True)
        for f in args.fractions:
            data = write_fraction_manifest(tdir / f"supervised_{f:g}.json", trajectory.T, f, args.seed)
            print(f"{trajectory.name}: f={f:g} -> {len(data['frames'])} frames")
    return status


def cmd_validate(args) -> int:
    status = 0
    for path in find_manifests(args.dataset):
        try:
            m = load_manifest(path)
            print(f"{m.name}: ok ({m.T} frames, {m.width}x{m.height})")
        except (ManifestError, OSError) as exc:
            print(f"{path.parent.name}: invalid: {exc}")
            status = 1
    if args.config:
        try:
            load_config(args.config)
            print(f"{args.config}: ok")
        except (ValueError, OSError) as exc:
            print(f"{args.config}: invalid: {exc}")
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focusmap", description="VLM-filtered temporal saliency annotation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="all stages for every trajectory, plus report.json")
    _common(p)
    p.add_argument("--jobs", type=int, default=1, help="trajectories processed concurrently")
    p.add_argument("--strict", action="store_true", help="stop at the first failure and exit nonzero")
    p.add_argument("--formats", default="png,afsl", help="saliency export formats (png,afsl)")
    p.set_defaults(func=cmd_run)

    for name, needs_sources in (("context", True), ("detect", True), ("track", False),
                                ("segment", False), ("filter", True), ("saliency", False)):
        p = sub.add_parser(name, help=f"run the {name} stage only")
        _common(p, sources=needs_sources)
        p.add_argument("--strict", action="store_true")
        if name == "saliency":
            p.add_argument("--formats", default="png,afsl")
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("confound", help="copy a dataset with previous-action icons in the top margin")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--icon-config", type=Path)
    p.set_defaults(func=cmd_confound)

    p = sub.add_parser("overlay", help="blend frames with their saliency maps")
    p.add_argument("trajectory_out", type=Path, help="<out>/<trajectory> directory of a finished run")
    p.add_argument("--frames", help="START:END inclusive frame range (default: all)")
    p.add_argument("--boxes", action="store_true", help="outline key-object boxes")
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("fraction", help="write supervised-frame manifests for a fraction sweep")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fraction)

    p = sub.add_parser("validate", help="check manifests (and optionally a config file)")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
