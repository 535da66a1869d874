"""IoU/Hungarian frame-to-frame tracking and constant-ID-set segmentation."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .detect import BBox, Detection

TIE_TOL = 1e-9


@dataclass
class Track:
    """Persistent-ID object track. ``boxes`` maps frame index to box over a contiguous range."""

    id: int
    label: str
    boxes: dict[int, BBox] = field(default_factory=dict)

    @property
    def start(self) -> int:
        return min(self.boxes)

    @property
    def end(self) -> int:
        return max(self.boxes)

    def last_box(self) -> BBox:
        return self.boxes[self.end]

    def to_dict(self) -> dict:
        return {"id": self.id, "label": self.label,
                "boxes": {str(t): self.boxes[t].as_list() for t in sorted(self.boxes)}}

    @classmethod
    def from_dict(cls, d: dict) -> "Track":
        return cls(int(d["id"]), d["label"], {int(t): BBox(*map(float, b)) for t, b in d["boxes"].items()})


@dataclass(frozen=True)
class SubSequence:
    start: int
    end: int
    active_ids: tuple[int, ...]
    key_ids: tuple[int, ...] = ()

    def __contains__(self, t: int) -> bool:
        return self.start <= t <= self.end

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end,
                "active_ids": list(self.active_ids), "key_ids": list(self.key_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "SubSequence":
        return cls(int(d["start"]), int(d["end"]),
                   tuple(sorted(int(i) for i in d["active_ids"])),
                   tuple(sorted(int(i) for i in d["key_ids"])))


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of ``min(n, m)`` pairs for an ``n x m`` cost matrix.

    Shortest-augmenting-path Hungarian method with row/column potentials,
    O(n^2 m). Returns (row, col) pairs sorted by row.
    """
    a = np.asarray(cost, dtype=float)
    if a.size == 0:
        return []
    if a.ndim != 2:
        raise ValueError(f"cost must be a 2-D matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("cost matrix contains non-finite entries")
    transposed = a.shape[0] > a.shape[1]
    if transposed:
        a = a.T
    n, m = a.shape

    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)    # p[j]: 1-based row matched to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cols = np.flatnonzero(free)
            cur = a[i0 - 1, cols - 1] - u[i0] - v[cols]
            better = cur < minv[cols]
            minv[cols[better]] = cur[better]
            way[cols[better]] = j0
            k = int(np.argmin(minv[cols]))
            j1 = int(cols[k])
            delta = minv[j1]
            used_cols = np.flatnonzero(used)
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            minv[cols] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    pairs = [(int(p[j]) - 1, j - 1) for j in range(1, m + 1) if p[j]]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted(pairs)


def assignment_cost(cost, pairs) -> float:
    a = np.asarray(cost, dtype=float)
    return float(sum(a[r, c] for r, c in pairs))


def lexmin_assignment(cost, tol: float = TIE_TOL) -> list[tuple[int, int]]:
    """Optimal assignment with ties broken toward lower rows, then lower columns.

    Rows are fixed one at a time to the smallest column that still admits an
    optimal completion.
    """
    a = np.asarray(cost, dtype=float)
    if a.size == 0:
        return []
    n, m = a.shape
    k = min(n, m)
    best = assignment_cost(a, hungarian(a))
    free = list(range(m))
    fixed: list[tuple[int, int]] = []
    acc = 0.0
    for r in range(n):
        if len(fixed) == k:
            break
        rest = list(range(r + 1, n))
        for c in free:
            cols = [j for j in free if j != c]
            sub = a[np.ix_(rest, cols)]
            total = acc + a[r, c] + assignment_cost(sub, hungarian(sub))
            if total <= best + tol:
                fixed.append((r, c))
                acc += a[r, c]
                free.remove(c)
                break
        # no feasible column: row r is left unmatched (only when n > m)
    return fixed


def associate(prev_tracks: Sequence[Track], detections: Sequence[Detection], t: int,
              iou_gate: float = 0.1, ids: Iterator[int] | None = None):
    """Extend open tracks at ``t - 1`` with the detections of frame ``t``.

    Returns ``(continued, new, closed)``. Continued tracks are extended in
    place. Matching is per label with cost ``1 - IoU``; matched pairs below
    ``iou_gate`` are rejected.
    """
    if ids is None:
        ids = itertools.count(max((tr.id for tr in prev_tracks), default=-1) + 1)
    tracks = sorted(prev_tracks, key=lambda tr: tr.id)
    labels = sorted({tr.label for tr in tracks} | {d.label for d in detections})

    matched_tracks: set[int] = set()
    matched_dets: set[int] = set()
    for label in labels:
        rows = [tr for tr in tracks if tr.label == label]
        cols = [j for j, d in enumerate(detections) if d.label == label]
        if not rows or not cols:
            continue
        overlap = np.array([[iou(tr.boxes[t - 1], detections[j].bbox) for j in cols] for tr in rows])
        for r, c in lexmin_assignment(1.0 - overlap):
            if overlap[r, c] < iou_gate:
                continue
            rows[r].boxes[t] = detections[cols[c]].bbox
            matched_tracks.add(rows[r].id)
            matched_dets.add(cols[c])

    continued = [tr for tr in tracks if tr.id in matched_tracks]
    closed = [tr for tr in tracks if tr.id not in matched_tracks]
    new = [Track(next(ids), d.label, {t: d.bbox})
           for j, d in enumerate(detections) if j not in matched_dets]
    return continued, new, closed


def build_tracks(per_frame_detections: Sequence[Sequence[Detection]], iou_gate: float = 0.1,
                 start: int = 0, seed_tracks: Sequence[Track] = (),
                 ids: Iterator[int] | None = None) -> list[Track]:
    """Fold :func:`associate` over frames ``start, start+1, ...``.

    ``seed_tracks`` ending at ``start - 1`` are continued into the first frame.
    """
    seeds = list(seed_tracks)
    if ids is None:
        ids = itertools.count(max((tr.id for tr in seeds), default=-1) + 1)
    open_tracks = [tr for tr in seeds if tr.boxes and tr.end == start - 1]
    open_ids = {tr.id for tr in open_tracks}
    finished = [tr for tr in seeds if tr.id not in open_ids]
    for offset, dets in enumerate(per_frame_detections):
        t = start + offset
        continued, new, closed = associate(open_tracks, dets, t, iou_gate, ids)
        finished.extend(closed)
        open_tracks = continued + new
    finished.extend(open_tracks)
    return sorted(finished, key=lambda tr: tr.id)


def segment(tracks: Sequence[Track], T: int, start: int = 0) -> list[SubSequence]:
    """Split frames ``[start, T-1]`` into maximal spans with a constant active-ID set."""
    active: list[set[int]] = [set() for _ in range(start, T)]
    for tr in tracks:
        for t in tr.boxes:
            if start <= t < T:
                active[t - start].add(tr.id)
    subs = []
    seg_start = start
    for t in range(start + 1, T + 1):
        if t == T or active[t - start] != active[seg_start - start]:
            subs.append(SubSequence(seg_start, t - 1, tuple(sorted(active[seg_start - start]))))
            seg_start = t
    return subs


def subsequence_at(subs: Sequence[SubSequence], t: int) -> SubSequence:
    for s in subs:
        if s.start <= t <= s.end:
            return s
    raise IndexError(f"frame {t} is not covered by any sub-sequence")


def save_tracks(tracks: Sequence[Track], path: Path | str) -> None:
    Path(path).write_text(json.dumps([tr.to_dict() for tr in tracks], indent=1) + "\n", encoding="utf-8")


def load_tracks(path: Path | str) -> list[Track]:
    return [Track.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


def save_subsequences(subs: Sequence[SubSequence], path: Path | str) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in subs], indent=1) + "\n", encoding="utf-8")


def load_subsequences(path: Path | str) -> list[SubSequence]:
    return [SubSequence.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]
