"""Per-trajectory stages with on-disk dumps, and the batch runner.

Output layout for a trajectory named ``name``::

    <out>/<name>/source.json          manifest location (relative to this directory)
    <out>/<name>/context.json         context summary and sampled frames
    <out>/<name>/detections.json      per-frame detections (fixture layout)
    <out>/<name>/tracks.json
    <out>/<name>/subsequences.json
    <out>/<name>/filter.json          final vocabulary, VLM call count, warnings
    <out>/<name>/saliency/<t:06d>.png and .afsl

Each stage reads the dumps of the stages before it, so any stage can be
re-run on its own.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .core import PipelineConfig, TrajectoryManifest, find_manifests, load_manifest
from .detect import FixtureDetector, HTTPDetector, detect_frames, load_detections, save_detections
from .saliency import export_f32, export_png, generate
from .supervisor import TrajectoryState, filter_all, query_context
from .tracking import build_tracks, load_subsequences, load_tracks, save_subsequences, save_tracks, segment
from .vlm import ContextSummary, HTTPTransport, MockVLMFixture, sample_context_frames

log = logging.getLogger(__name__)

REPORT_VERSION = 1


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def prepare_out(trajectory: TrajectoryManifest, out_dir: Path) -> Path:
    tdir = Path(out_dir) / trajectory.name
    tdir.mkdir(parents=True, exist_ok=True)
    rel = os.path.relpath(trajectory.root.resolve() / "manifest.json", tdir.resolve())
    _write_json(tdir / "source.json", {"manifest": Path(rel).as_posix()})
    return tdir


def source_manifest(tdir: Path) -> TrajectoryManifest:
    rel = _read_json(Path(tdir) / "source.json")["manifest"]
    return load_manifest(Path(tdir) / rel)


def stage_context(trajectory, tdir: Path, transport, cfg: PipelineConfig) -> ContextSummary:
    context = query_context(trajectory, transport, cfg)
    _write_json(tdir / "context.json", {
        "context": context.to_dict(),
        "sampled_frames": sample_context_frames(trajectory.T, cfg.num_context_frames),
        "vlm_calls": 1,
    })
    return context


def load_context(tdir: Path) -> tuple[ContextSummary, int]:
    data = _read_json(Path(tdir) / "context.json")
    return ContextSummary.from_dict(data["context"]), int(data["vlm_calls"])


def stage_detect(trajectory, tdir: Path, detector, cfg: PipelineConfig):
    context, _ = load_context(tdir)
    dets = detect_frames(trajectory, context.vocabulary, detector, cfg.detector_confidence)
    save_detections(dets, tdir / "detections.json")
    return dets


def stage_track(trajectory, tdir: Path, cfg: PipelineConfig):
    dets = load_detections(tdir / "detections.json", trajectory.T)
    tracks = build_tracks(dets, cfg.iou_gate)
    save_tracks(tracks, tdir / "tracks.json")
    return tracks


def stage_segment(trajectory, tdir: Path):
    subs = segment(load_tracks(tdir / "tracks.json"), trajectory.T)
    save_subsequences(subs, tdir / "subsequences.json")
    return subs


def stage_filter(trajectory, tdir: Path, detector, transport, cfg: PipelineConfig) -> TrajectoryState:
    context, _ = load_context(tdir)
    state = TrajectoryState(
        trajectory=trajectory,
        context=context,
        detections=load_detections(tdir / "detections.json", trajectory.T),
        tracks=load_tracks(tdir / "tracks.json"),
        subs=load_subsequences(tdir / "subsequences.json"),
    )
    filter_all(state, detector, transport, cfg)
    save_detections(state.detections, tdir / "detections.json")
    save_tracks(state.tracks, tdir / "tracks.json")
    save_subsequences(state.subs, tdir / "subsequences.json")
    _write_json(tdir / "filter.json", {
        "vocabulary": state.vocabulary,
        "vlm_calls": state.vlm_calls,
        "warnings": state.warnings,
    })
    return state


def stage_saliency(trajectory, tdir: Path, cfg: PipelineConfig, formats=("png", "afsl")) -> list[Path]:
    maps = generate(trajectory, load_subsequences(tdir / "subsequences.json"),
                    load_tracks(tdir / "tracks.json"), cfg)
    sdir = tdir / "saliency"
    sdir.mkdir(exist_ok=True)
    written = []
    for t, smap in enumerate(maps):
        if "png" in formats:
            export_png(smap, sdir / f"{t:06d}.png")
            written.append(sdir / f"{t:06d}.png")
        if "afsl" in formats:
            export_f32(smap, sdir / f"{t:06d}.afsl")
            written.append(sdir / f"{t:06d}.afsl")
    return written


@dataclass
class TrajectoryReport:
    name: str
    status: str = "ok"
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    vlm_calls: int = 0
    detector_calls: int = 0
    warnings: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)


@dataclass
class RunReport:
    trajectories: list[TrajectoryReport] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[TrajectoryReport]:
        return [r for r in self.trajectories if r.status != "ok"]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": self.config,
            "succeeded": len(self.trajectories) - len(self.failed),
            "failed": len(self.failed),
            "trajectories": [asdict(r) for r in self.trajectories],
        }


@dataclass
class Sources:
    """How detections and VLM answers are obtained for each trajectory."""

    detections: Path | None = None
    detector_url: str | None = None
    mock_vlm: Path | None = None
    cache_dir: Path | None = None
    max_in_flight: int = 4
    _mock: MockVLMFixture | None = field(default=None, repr=False)
    _http: HTTPTransport | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def detector(self, trajectory: TrajectoryManifest):
        if self.detector_url:
            return HTTPDetector(self.detector_url, self.cache_dir, self.max_in_flight)
        if self.detections is not None:
            path = Path(self.detections)
            if path.is_dir():
                path = path / trajectory.name / "detections.json"
        else:
            path = trajectory.root / "detections.json"
        return FixtureDetector(path)

    def transport(self, trajectory: TrajectoryManifest, offset: int = 0):
        with self._lock:
            if self.mock_vlm is not None:
                if self._mock is None:
                    self._mock = MockVLMFixture.load(self.mock_vlm)
                return self._mock.for_trajectory(trajectory.name, offset)
            if self._http is None:
                self._http = HTTPTransport.from_env(max_in_flight=self.max_in_flight)
            return self._http


def process_trajectory(manifest_path: Path, out_dir: Path, cfg: PipelineConfig, sources: Sources,
                       formats=("png", "afsl")) -> TrajectoryReport:
    report = TrajectoryReport(name=manifest_path.parent.name)
    clock = time.perf_counter

    def timed(stage: str, fn: Callable):
        t0 = clock()
        try:
            return fn()
        finally:
            report.timings[stage] = round(clock() - t0, 6)

    try:
        trajectory = timed("load", lambda: load_manifest(manifest_path))
        report.name = trajectory.name
        tdir = prepare_out(trajectory, out_dir)
        detector = sources.detector(trajectory)
        transport = sources.transport(trajectory)
        timed("context", lambda: stage_context(trajectory, tdir, transport, cfg))
        timed("detect", lambda: stage_detect(trajectory, tdir, detector, cfg))
        timed("track", lambda: stage_track(trajectory, tdir, cfg))
        timed("segment", lambda: stage_segment(trajectory, tdir))
        state = timed("filter", lambda: stage_filter(trajectory, tdir, detector, transport, cfg))
        written = timed("saliency", lambda: stage_saliency(trajectory, tdir, cfg, formats))
        report.vlm_calls = 1 + state.vlm_calls
        report.detector_calls = detector.calls
        report.warnings = list(state.warnings)
        rel = [Path(os.path.relpath(p, out_dir)).as_posix() for p in tdir.glob("*.json")]
        if written:
            rel.append(f"{trajectory.name}/saliency/")
        report.outputs = sorted(rel)
    except Exception as exc:
        log.error("trajectory %s failed: %s", report.name, exc)
        report.status = "error"
        report.error = f"{type(exc).__name__}: {exc}"
    return report


def run(dataset_dir: Path | str, out_dir: Path | str, cfg: PipelineConfig, sources: Sources | None = None,
        jobs: int = 1, strict: bool = False, formats=("png", "afsl")) -> RunReport:
    """Annotate every trajectory of a dataset and write ``report.json``.

    Failures are recorded per trajectory; with ``strict`` the first failure
    cancels trajectories that have not started yet.
    """
    sources = sources or Sources()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests = find_manifests(dataset_dir)
    if not manifests:
        raise FileNotFoundError(f"no */manifest.json found under {dataset_dir}")

    reports: dict[int, TrajectoryReport] = {}
    lock = threading.Lock()
    abort = threading.Event()

    def work(i: int, path: Path):
        if abort.is_set():
            rep = TrajectoryReport(name=path.parent.name, status="skipped", error="aborted after an earlier failure")
        else:
            rep = process_trajectory(path, out_dir, cfg, sources, formats)
            if rep.status != "ok" and strict:
                abort.set()
        with lock:
            reports[i] = rep

    with ThreadPoolExecutor(max(1, jobs)) as pool:
        list(pool.map(lambda a: work(*a), enumerate(manifests)))

    report = RunReport([reports[i] for i in range(len(manifests))], cfg.to_dict())
    _write_json(out_dir / "report.json", report.to_dict())
    return report
