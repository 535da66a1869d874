"""Temporal multi-peak Gaussian saliency maps and their file formats."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .core import PipelineConfig
from .detect import center
from .tracking import SubSequence, Track

AFSL_MAGIC = b"AFSL"
_HEADER = struct.Struct("<4sII")


class SaliencyError(ValueError):
    pass


class SaliencyFormatError(SaliencyError):
    pass


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel relevance in [0, 1]; ``values`` is float32 with shape (height, width)."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SaliencyMap):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)


def render_raw(t: int, centers: Mapping[int, Sequence[tuple[float, float]]], cfg: PipelineConfig,
               width: int, height: int) -> np.ndarray:
    """Unnormalized saliency at frame ``t`` as a float64 ``(height, width)`` grid.

    Sums, over history offsets ``k = 0..min(t_prime, t)``, a Gaussian around
    every center seen at frame ``t - k``, weighted by ``alpha**k`` with the
    variance widened by ``beta**(-2k)``. Pixel ``(col, row)`` is evaluated at
    integer coordinates.
    """
    xs = np.arange(width, dtype=float)
    ys = np.arange(height, dtype=float)
    out = np.zeros((height, width))
    for k in range(min(cfg.t_prime, t) + 1):
        pts = centers.get(t - k, ())
        if not pts:
            continue
        weight = cfg.alpha ** k
        if k > 0 and cfg.beta == 0:
            # infinite variance: flat kernel
            out += weight * len(pts)
            continue
        var2 = 2.0 * cfg.gamma ** 2 * cfg.beta ** (-2 * k)
        for x, y in pts:
            if not (0 <= x <= width and 0 <= y <= height):
                raise SaliencyError(f"center ({x}, {y}) at frame {t - k} is outside the {width}x{height} image")
            gx = np.exp(-((xs - x) ** 2) / var2)
            gy = np.exp(-((ys - y) ** 2) / var2)
            out += weight * np.outer(gy, gx)
    return out


def normalize(raw: np.ndarray) -> SaliencyMap:
    raw = np.asarray(raw, dtype=float)
    if (raw < 0).any():
        raise SaliencyError("raw saliency contains negative values")
    peak = raw.max() if raw.size else 0.0
    if peak > 0:
        values = raw / peak
    else:
        values = np.zeros_like(raw)
    return SaliencyMap(values.astype(np.float32))


def key_centers(subs: Sequence[SubSequence], tracks: Sequence[Track]) -> dict[int, list[tuple[float, float]]]:
    """Centers of key-object boxes per frame.

    A track counts at frame ``t`` when its ID is keyed in the sub-sequence
    containing ``t``.
    """
    by_id = {tr.id: tr for tr in tracks}
    out: dict[int, list[tuple[float, float]]] = {}
    for sub in subs:
        for tid in sub.key_ids:
            tr = by_id.get(tid)
            if tr is None:
                continue
            for t in range(sub.start, sub.end + 1):
                if t in tr.boxes:
                    out.setdefault(t, []).append(center(tr.boxes[t]))
    return out


def generate(trajectory, subs: Sequence[SubSequence], tracks: Sequence[Track],
             cfg: PipelineConfig) -> list[SaliencyMap]:
    """One normalized saliency map per frame of a filtered trajectory.

    ``trajectory`` only needs ``T``, ``width`` and ``height`` attributes.
    """
    centers = key_centers(subs, tracks)
    w, h = trajectory.width, trajectory.height
    return [normalize(render_raw(t, centers, cfg, w, h)) for t in range(trajectory.T)]


def to_bytes(smap: SaliencyMap) -> np.ndarray:
    """Quantize to uint8 with round-half-up."""
    return np.floor(smap.values.astype(np.float64) * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


def export_png(smap: SaliencyMap, path: Path | str) -> None:
    try:
        Image.fromarray(to_bytes(smap)).save(path, format="PNG", compress_level=6)
    except OSError as exc:
        raise OSError(f"cannot write saliency PNG {path}: {exc}") from exc


def read_png(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")).copy()


def export_f32(smap: SaliencyMap, path: Path | str) -> None:
    data = _HEADER.pack(AFSL_MAGIC, smap.width, smap.height) + smap.values.astype("<f4").tobytes()
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write saliency file {path}: {exc}") from exc


def read_f32(path: Path | str) -> SaliencyMap:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SaliencyFormatError(f"{path}: file too short for an AFSL header")
    magic, width, height = _HEADER.unpack_from(data)
    if magic != AFSL_MAGIC:
        raise SaliencyFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        raise SaliencyFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(height, width)
    return SaliencyMap(values.astype(np.float32))
