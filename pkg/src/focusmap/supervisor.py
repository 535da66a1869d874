"""VLM supervision of one trajectory: global context, then key-object filtering.

Filtering walks the sub-sequences in order. When the model reports missing
object categories, the vocabulary grows, the current sub-sequence's frames
are re-detected, tracking resumes from its first frame and the rest of the
trajectory is re-segmented; the model is then asked again, up to
``retry_cap`` rounds per sub-sequence.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator

from ._images import png_bytes
from .core import PipelineConfig, TrajectoryManifest
from .detect import Detection, detect_frames
from .tracking import SubSequence, Track, build_tracks, segment
from .vlm import (ContextSummary, VLMParseError, build_context_prompt, build_filter_prompt,
                  parse_context_response, parse_filter_response, sample_context_frames)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


def query_context(trajectory: TrajectoryManifest, transport, cfg: PipelineConfig) -> ContextSummary:
    indices = sample_context_frames(trajectory.T, cfg.num_context_frames)
    frames = [(t, png_bytes(trajectory.image_path(t))) for t in indices]
    actions = [trajectory.frames[t].action for t in indices]
    return parse_context_response(transport.complete(build_context_prompt(frames, actions)))


@dataclass
class TrajectoryState:
    """Mutable annotation state of one trajectory during filtering."""

    trajectory: TrajectoryManifest
    context: ContextSummary
    detections: list[list[Detection]]
    tracks: list[Track]
    subs: list[SubSequence]
    vocabulary: list[str] = field(default_factory=list)
    ids: Iterator[int] | None = None
    warnings: list[str] = field(default_factory=list)
    detector_frames: int = 0
    vlm_calls: int = 0

    def __post_init__(self):
        if not self.vocabulary:
            self.vocabulary = list(self.context.vocabulary)
        if self.ids is None:
            self.ids = itertools.count(max((tr.id for tr in self.tracks), default=-1) + 1)

    def track(self, tid: int) -> Track:
        for tr in self.tracks:
            if tr.id == tid:
                return tr
        raise KeyError(tid)


def _signature(tr: Track):
    return tr.label, tuple((t, tr.boxes[t]) for t in sorted(tr.boxes))


def _retrack_from(state: TrajectoryState, start: int, cfg: PipelineConfig) -> None:
    """Redo tracking for frames ``>= start``; earlier boxes and their IDs are kept.

    A rebuilt track identical to a previous one (same label, same boxes)
    keeps its ID; every other new track draws a fresh ID.
    """
    kept, late = [], {}
    for tr in state.tracks:
        if tr.start >= start:
            late.setdefault(_signature(tr), tr.id)
            continue
        boxes = {t: b for t, b in tr.boxes.items() if t < start}
        kept.append(Track(tr.id, tr.label, boxes))
    seeds = [tr for tr in kept if tr.end == start - 1]
    # provisional negative IDs, in creation order
    rest = build_tracks(state.detections[start:], cfg.iou_gate, start=start, seed_tracks=seeds,
                        ids=itertools.count(-1, -1))
    for tr in sorted((tr for tr in rest if tr.id < 0), key=lambda tr: -tr.id):
        old = late.pop(_signature(tr), None)
        tr.id = old if old is not None else next(state.ids)
    seed_ids = {tr.id for tr in seeds}
    state.tracks = sorted([tr for tr in kept if tr.id not in seed_ids] + rest, key=lambda tr: tr.id)


def filter_subsequence(state: TrajectoryState, i: int, detector, transport, cfg: PipelineConfig) -> SubSequence:
    """Set key IDs on ``state.subs[i]``, retrying with an augmented vocabulary.

    Returns the keyed sub-sequence. Re-segmentation may replace
    ``state.subs[i:]``; if the retried span ends up with the same active set
    as the previous sub-sequence, it is merged into it and keeps its keys.
    """
    traj = state.trajectory
    max_rounds = max(1, cfg.retry_cap)
    rounds = 0
    while True:
        sub = state.subs[i]
        rounds += 1
        active = [(tid, state.track(tid).label, state.track(tid).boxes[sub.start]) for tid in sub.active_ids]
        request = build_filter_prompt(png_bytes(traj.image_path(sub.start)), traj.frames[sub.start].action,
                                      state.context, active)
        state.vlm_calls += 1
        try:
            raw = transport.complete(request)
            decision = parse_filter_response(raw, sub.active_ids, state.vocabulary)
        except VLMParseError as exc:
            if rounds >= max_rounds:
                raise VLMParseError(f"sub-sequence [{sub.start}, {sub.end}]: {exc}", exc.raw) from exc
            msg = f"sub-sequence [{sub.start}, {sub.end}]: unparseable VLM answer, asking again"
            log.warning(msg)
            state.warnings.append(msg)
            continue
        except Exception as exc:
            raise PipelineError(f"sub-sequence [{sub.start}, {sub.end}]: VLM request failed: {exc}") from exc

        if decision.dropped_ids:
            msg = (f"sub-sequence [{sub.start}, {sub.end}]: VLM returned unknown track IDs "
                   f"{list(decision.dropped_ids)}; ignored")
            log.warning(msg)
            state.warnings.append(msg)
        state.subs[i] = dataclasses.replace(sub, key_ids=decision.key_ids)

        if not decision.missing_categories or rounds >= max_rounds:
            return state.subs[i]

        state.vocabulary.extend(decision.missing_categories)
        span = range(sub.start, sub.end + 1)
        fresh = detect_frames(traj, state.vocabulary, detector, cfg.detector_confidence, frames=span)
        state.detector_frames += len(span)
        for t, dets in zip(span, fresh):
            state.detections[t] = dets
        _retrack_from(state, sub.start, cfg)
        state.subs[i:] = segment(state.tracks, traj.T, start=sub.start)

        if i > 0 and state.subs[i].active_ids == state.subs[i - 1].active_ids:
            prev = state.subs[i - 1]
            state.subs[i - 1] = dataclasses.replace(prev, end=state.subs[i].end)
            del state.subs[i]
            return state.subs[i - 1]


def filter_all(state: TrajectoryState, detector, transport, cfg: PipelineConfig) -> list[SubSequence]:
    """Filter every sub-sequence in temporal order."""
    i = 0
    while i < len(state.subs):
        keyed = filter_subsequence(state, i, detector, transport, cfg)
        # after a merge, index i already holds the next unfiltered sub-sequence
        if i < len(state.subs) and state.subs[i] is keyed:
            i += 1
    return state.subs
