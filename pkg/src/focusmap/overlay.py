"""Inspection overlays: frame and saliency map blended into one RGB image.

Colormap ("hot"): value ``g`` maps to
``(clip(3g), clip(3g - 1), clip(3g - 2)) * 255``, black at 0 and white at 1.
Blend: ``out = round_half_up(0.5 * frame + 0.5 * color)`` per channel, so an
all-zero map yields the frame at half brightness.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ._images import read_rgb, write_png
from .pipeline import source_manifest
from .saliency import SaliencyMap, read_f32, read_png
from .tracking import load_subsequences, load_tracks

ALPHA = 0.5
BOX_COLOR = (0, 255, 255)


def hot_colormap(values: np.ndarray) -> np.ndarray:
    g = np.asarray(values, dtype=float)[..., None]
    rgb = np.clip(3 * g - np.array([0.0, 1.0, 2.0]), 0.0, 1.0)
    return rgb * 255.0


def blend(frame: np.ndarray, smap: SaliencyMap, alpha: float = ALPHA) -> np.ndarray:
    color = hot_colormap(smap.values)
    mixed = (1 - alpha) * frame.astype(float) + alpha * color
    return np.floor(mixed + 0.5).clip(0, 255).astype(np.uint8)


def draw_box(img: np.ndarray, box, color=BOX_COLOR) -> None:
    h, w = img.shape[:2]
    x0 = int(np.clip(np.floor(box.x_min), 0, w - 1))
    x1 = int(np.clip(np.ceil(box.x_max) - 1, 0, w - 1))
    y0 = int(np.clip(np.floor(box.y_min), 0, h - 1))
    y1 = int(np.clip(np.ceil(box.y_max) - 1, 0, h - 1))
    img[y0, x0:x1 + 1] = color
    img[y1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0] = color
    img[y0:y1 + 1, x1] = color


def load_saliency(tdir: Path, t: int) -> SaliencyMap:
    sdir = Path(tdir) / "saliency"
    if (sdir / f"{t:06d}.afsl").is_file():
        return read_f32(sdir / f"{t:06d}.afsl")
    if (sdir / f"{t:06d}.png").is_file():
        return SaliencyMap((read_png(sdir / f"{t:06d}.png") / 255.0).astype(np.float32))
    raise FileNotFoundError(f"no saliency export for frame {t} in {sdir}")


def overlay(tdir: Path | str, frame_range: tuple[int, int] | None = None, boxes: bool = False,
            out_dir: Path | str | None = None) -> list[Path]:
    """Write ``overlay/<t:06d>.png`` for frames ``start..end`` (inclusive)."""
    tdir = Path(tdir)
    trajectory = source_manifest(tdir)
    start, end = frame_range if frame_range is not None else (0, trajectory.T - 1)
    if not (0 <= start <= end < trajectory.T):
        raise IndexError(f"frame range [{start}, {end}] is outside [0, {trajectory.T - 1}]")
    out_dir = Path(out_dir) if out_dir else tdir / "overlay"
    out_dir.mkdir(parents=True, exist_ok=True)

    keyed = {}
    if boxes:
        tracks = {tr.id: tr for tr in load_tracks(tdir / "tracks.json")}
        for sub in load_subsequences(tdir / "subsequences.json"):
            for t in range(sub.start, sub.end + 1):
                keyed[t] = [tracks[i].boxes[t] for i in sub.key_ids if t in tracks[i].boxes]

    written = []
    for t in range(start, end + 1):
        img = blend(read_rgb(trajectory.image_path(t)), load_saliency(tdir, t))
        for box in keyed.get(t, ()):
            draw_box(img, box)
        path = out_dir / f"{t:06d}.png"
        write_png(img, path)
        written.append(path)
    return written
