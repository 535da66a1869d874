"""Open-vocabulary detections from fixture files or a detector service."""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx

from ._images import b64, png_bytes
from .core import TrajectoryManifest

log = logging.getLogger(__name__)


class DetectionError(ValueError):
    """Invalid detection data (fixture gaps, labels outside the vocabulary)."""


class DetectorTransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DetectionError(f"degenerate box {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    bbox: BBox

    def to_dict(self) -> dict:
        return {"label": self.label, "confidence": self.confidence, "bbox": self.bbox.as_list()}


def center(bbox: BBox) -> tuple[float, float]:
    return ((bbox.x_min + bbox.x_max) / 2, (bbox.y_min + bbox.y_max) / 2)


def clamp_box(coords, width: int, height: int) -> BBox | None:
    """Clamp ``[x0, y0, x1, y1]`` to the image rectangle; None if nothing is left."""
    x0, y0, x1, y1 = (float(c) for c in coords)
    x0, x1 = max(0.0, x0), min(float(width), x1)
    y0, y1 = max(0.0, y0), min(float(height), y1)
    if x0 >= x1 or y0 >= y1:
        return None
    return BBox(x0, y0, x1, y1)


def normalize_label(label: str) -> str:
    return " ".join(label.strip().lower().split())


def _parse_raw(raw: dict, where: str) -> tuple[str, float, list]:
    try:
        label = raw["label"]
        conf = float(raw["confidence"])
        bbox = list(raw["bbox"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DetectionError(f"{where}: malformed detection {raw!r}") from exc
    if not isinstance(label, str) or len(bbox) != 4:
        raise DetectionError(f"{where}: malformed detection {raw!r}")
    return label, conf, bbox


class FixtureDetector:
    """Replays precomputed detections from a ``detections.json`` file.

    The fixture stands in for a detector queried with a vocabulary, so entries
    whose label is not in the query vocabulary are left out.
    """

    strict_labels = False

    def __init__(self, path: Path | str):
        self.path = Path(path)
        data = json.loads(self.path.read_text(encoding="utf-8"))
        self.frames: dict[int, list[dict]] = {}
        for entry in data:
            self.frames[int(entry["frame_index"])] = list(entry["detections"])
        self.calls = 0

    def detect_many(self, trajectory, frames, labels, threshold):
        out = {}
        for t in frames:
            if t not in self.frames:
                raise DetectionError(f"{self.path}: fixture has no entry for frame {t}")
            self.calls += 1
            out[t] = self.frames[t]
        return out


class HTTPDetector:
    """Client for a detector service speaking ``POST /detect``.

    Responses are cached per (trajectory, vocabulary, threshold) in
    ``cache_dir`` so reruns replay without network access.
    """

    strict_labels = True

    def __init__(self, url: str, cache_dir: Path | str | None = None, max_in_flight: int = 4,
                 timeout: float = 60.0, client: httpx.Client | None = None):
        self.url = url.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_in_flight = max(1, max_in_flight)
        self.client = client or httpx.Client(timeout=timeout)
        self.calls = 0
        self._lock = threading.Lock()

    def cache_path(self, trajectory: TrajectoryManifest, labels, threshold) -> Path | None:
        if self.cache_dir is None:
            return None
        key = json.dumps({"labels": sorted(labels), "threshold": threshold}, sort_keys=True)
        digest = hashlib.sha1(key.encode()).hexdigest()[:16]
        return self.cache_dir / trajectory.name / f"detections-{digest}.json"

    def _request(self, trajectory, t, labels, threshold):
        body = {
            "image_b64": b64(png_bytes(trajectory.image_path(t))),
            "labels": list(labels),
            "box_threshold": threshold,
        }
        try:
            resp = self.client.post(self.url + "/detect", json=body)
            resp.raise_for_status()
            payload = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise DetectorTransportError(f"frame {t}: detector request failed: {exc}") from exc
        with self._lock:
            self.calls += 1
        if not isinstance(payload, dict) or not isinstance(payload.get("detections"), list):
            raise DetectionError(f"frame {t}: response lacks a 'detections' list")
        return payload["detections"]

    def detect_many(self, trajectory, frames, labels, threshold):
        path = self.cache_path(trajectory, labels, threshold)
        cached: dict[int, list] = {}
        if path is not None and path.is_file():
            for entry in json.loads(path.read_text(encoding="utf-8")):
                cached[int(entry["frame_index"])] = entry["detections"]
        todo = [t for t in frames if t not in cached]
        if todo:
            with ThreadPoolExecutor(self.max_in_flight) as pool:
                results = list(pool.map(lambda t: self._request(trajectory, t, labels, threshold), todo))
            cached.update(zip(todo, results))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                entries = [{"frame_index": t, "detections": cached[t]} for t in sorted(cached)]
                path.write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")
        return {t: cached[t] for t in frames}


def detect_frames(trajectory: TrajectoryManifest, vocabulary, source, confidence: float = 0.3,
                  frames=None) -> list[list[Detection]]:
    """Detections for each requested frame (all frames by default), in frame order.

    Applies the confidence gate and clamps boxes to the image. Labels are
    normalized; a service answering with a label outside ``vocabulary`` is an
    error.
    """
    vocab = [normalize_label(v) for v in vocabulary]
    if not vocab:
        raise DetectionError("vocabulary must not be empty")
    allowed = set(vocab)
    frames = list(range(trajectory.T)) if frames is None else list(frames)
    raw = source.detect_many(trajectory, frames, vocab, confidence)

    out = []
    for t in frames:
        dets = []
        for item in raw[t]:
            label, conf, coords = _parse_raw(item, f"frame {t}")
            label = normalize_label(label)
            if label not in allowed:
                if getattr(source, "strict_labels", True):
                    raise DetectionError(f"frame {t}: detection label {label!r} is not in the vocabulary")
                continue
            if conf < confidence:
                continue
            box = clamp_box(coords, trajectory.width, trajectory.height)
            if box is None:
                log.warning("frame %d: %s box %s lies outside the image; dropped", t, label, coords)
                continue
            dets.append(Detection(label, conf, box))
        out.append(dets)
    return out


def save_detections(per_frame, path: Path | str, frames=None) -> None:
    frames = range(len(per_frame)) if frames is None else frames
    entries = [{"frame_index": t, "detections": [d.to_dict() for d in dets]}
               for t, dets in zip(frames, per_frame)]
    Path(path).write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")


def load_detections(path: Path | str, T: int) -> list[list[Detection]]:
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    by_frame = {int(e["frame_index"]): e["detections"] for e in entries}
    out = []
    for t in range(T):
        if t not in by_frame:
            raise DetectionError(f"{path}: no entry for frame {t}")
        dets = []
        for item in by_frame[t]:
            label, conf, coords = _parse_raw(item, f"frame {t}")
            dets.append(Detection(label, conf, BBox(*map(float, coords))))
        out.append(dets)
    return out
