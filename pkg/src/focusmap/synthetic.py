"""Small synthetic driving dataset with fixture detections and a scripted VLM.

``make_golden_dataset(root)`` writes two trajectories:

``drive_a``  8 frames. A car drives right past a pedestrian under a traffic
             light. The first filtering answer keys the car and reports the
             traffic light as missing; after re-detection the second answer
             keys car and traffic light.
``drive_b``  10 frames. A pedestrian walks in at frame 4, splitting the
             trajectory into two sub-sequences. One answer cites an unknown
             track ID, which is dropped with a warning.

Each trajectory directory holds ``manifest.json``, ``detections.json`` and
its frames; ``mock_vlm.json`` at the dataset root scripts the model.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._images import write_png

WIDTH, HEIGHT = 64, 48

COLORS = {"car": (40, 60, 200), "person": (200, 60, 200), "pedestrian": (200, 60, 200),
          "traffic light": (230, 200, 30)}


def _background(t: int) -> np.ndarray:
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    base = 90 + (yy * 2 + xx + 3 * t) % 40
    img = np.stack([base, base + 10, base - 10], axis=-1)
    img[HEIGHT - 12:] = (70, 70, 70)    # road
    return img.clip(0, 255).astype(np.uint8)


def _draw(img: np.ndarray, box, color) -> None:
    x0, y0, x1, y1 = (int(round(v)) for v in box)
    img[y0:y1, x0:x1] = color


def _write_trajectory(root: Path, name: str, objects_per_frame, actions, extra_detections=None) -> None:
    tdir = root / name
    (tdir / "frames").mkdir(parents=True, exist_ok=True)
    frames, detections = [], []
    for t, objs in enumerate(objects_per_frame):
        img = _background(t)
        dets = []
        for label, box, conf in objs:
            _draw(img, box, COLORS[label])
            dets.append({"label": label, "confidence": conf, "bbox": list(box)})
        dets.extend((extra_detections or {}).get(t, []))
        image = f"frames/{t:04d}.png"
        write_png(img, tdir / image)
        frames.append({"index": t, "image": image, "action": list(actions[t])})
        detections.append({"frame_index": t, "detections": dets})
    manifest = {"name": name, "width": WIDTH, "height": HEIGHT, "frames": frames}
    (tdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (tdir / "detections.json").write_text(json.dumps(detections, indent=1) + "\n", encoding="utf-8")


def _drive_a(root: Path) -> list[str]:
    objects, actions = [], []
    for t in range(8):
        car = (6.0 + 4 * t, 30.0, 18.0 + 4 * t, 38.0)
        objects.append([
            ("car", car, 0.9),
            ("person", (52.0, 22.0, 56.0, 34.0), 0.8),
            ("traffic light", (30.0, 2.0, 34.0, 10.0), 0.7),
        ])
        brake = 1.0 if t >= 5 else 0.0
        actions.append((round(0.1 * np.sin(t), 4), 0.0 if brake else 0.5, brake))
    # a low-confidence ghost that the confidence gate must remove
    extra = {3: [{"label": "car", "confidence": 0.2, "bbox": [40.0, 8.0, 48.0, 14.0]}]}
    _write_trajectory(root, "drive_a", objects, actions, extra)
    return [
        '```json\n{"task": "drive along the street", "environment": "urban road with a crossing",'
        ' "risks": ["pedestrian near the curb"], "objects": ["Car", "person", "car "]}\n```',
        '{"key_object_ids": [0], "missing_categories": ["Traffic Light"]}',
        'Key objects: {"key_object_ids": [0, 2], "missing_categories": []}',
    ]


def _drive_b(root: Path) -> list[str]:
    objects, actions = [], []
    for t in range(10):
        objs = [("car", (4.0 + 3 * t, 32.0, 16.0 + 3 * t, 40.0), 0.85)]
        if t >= 4:
            x = 56.0 - 3 * (t - 4)
            objs.append(("pedestrian", (x, 20.0, x + 4, 32.0), 0.75))
        objects.append(objs)
        actions.append((-0.2 if t >= 4 else 0.05, 0.3 if t < 6 else 0.0, 1.0 if t >= 6 else 0.0))
    _write_trajectory(root, "drive_b", objects, actions)
    return [
        'Here is the summary you asked for: {"task": "follow the lane", "environment": "suburban street",'
        ' "risks": ["pedestrian crossing"], "objects": ["car", "pedestrian"]}',
        '{"key_object_ids": [0, 7], "missing_categories": []}',
        '{"key_object_ids": [0, 1], "missing_categories": ["car"]}',
    ]


def make_golden_dataset(root: Path | str) -> Path:
    """Write the synthetic dataset under ``root``; returns ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    script = {"drive_a": _drive_a(root), "drive_b": _drive_b(root)}
    (root / "mock_vlm.json").write_text(json.dumps(script, indent=2) + "\n", encoding="utf-8")
    return root
