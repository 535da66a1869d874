"""Reference saliency-regularization penalty over feature-map fixtures.

Trainers compute the penalty on their own tensors; the functions here give
the values those implementations should reproduce for a single sample.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AFFM_MAGIC = b"AFFM"
_HEADER = struct.Struct("<4sIII")


class FeatureMapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Activation tensor with shape (height, width, channels)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or 0 in v.shape:
            raise FeatureMapError(f"feature map must be h x w x c with positive sizes, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise FeatureMapError("feature map contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def _axis_weights(n_src: int, n_dst: int):
    pos = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    pos = np.clip(pos, 0, n_src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def upsample_bilinear(fm: FeatureMap, target_h: int, target_w: int) -> FeatureMap:
    """Per-channel bilinear upsampling with half-pixel centers and edge clamping."""
    if target_h < fm.height or target_w < fm.width:
        raise FeatureMapError(
            f"target {target_h}x{target_w} is smaller than source {fm.height}x{fm.width}")
    y0, y1, wy = _axis_weights(fm.height, target_h)
    x0, x1, wx = _axis_weights(fm.width, target_w)
    v = fm.values
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = v[y0][:, x0] * (1 - wx) + v[y0][:, x1] * wx
    bottom = v[y1][:, x0] * (1 - wx) + v[y1][:, x1] * wx
    return FeatureMap(top * (1 - wy) + bottom * wy)


def saliency_penalty(fm: FeatureMap, g, lam: float) -> float:
    """``lam * ||(1 - g) * fm**2||_2`` with the mask broadcast over channels.

    The norm is Euclidean over all h*w*c entries. ``g`` is a SaliencyMap or
    an (h, w) array.
    """
    g = np.asarray(getattr(g, "values", g), dtype=float)
    if g.shape != fm.values.shape[:2]:
        raise FeatureMapError(f"saliency shape {g.shape} does not match feature map {fm.values.shape[:2]}")
    masked = (1.0 - g)[:, :, None] * fm.values ** 2
    return float(lam * np.sqrt(np.sum(masked ** 2)))


def select_supervised_frames(T: int, f: float, seed: int = 0) -> list[int]:
    """Seeded uniform choice of ``round(f * T)`` distinct frames, sorted."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {f}")
    n = min(T, int(math.floor(f * T + 0.5)))
    if n == T:
        return list(range(T))
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(T, size=n, replace=False))


def write_fraction_manifest(path: Path | str, T: int, f: float, seed: int = 0) -> dict:
    data = {"fraction": f, "seed": seed, "frames": select_supervised_frames(T, f, seed)}
    Path(path).write_text(json.dumps(data) + "\n", encoding="utf-8")
    return data


def write_feature_map(fm: FeatureMap, path: Path | str) -> None:
    h, w, c = fm.values.shape
    Path(path).write_bytes(_HEADER.pack(AFFM_MAGIC, h, w, c) + fm.values.astype("<f4").tobytes())


def read_feature_map(path: Path | str) -> FeatureMap:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FeatureMapError(f"{path}: file too short for an AFFM header")
    magic, h, w, c = _HEADER.unpack_from(data)
    if magic != AFFM_MAGIC:
        raise FeatureMapError(f"{path}: bad magic {magic!r}")
    if len(data) != _HEADER.size + 4 * h * w * c:
        raise FeatureMapError(f"{path}: payload size does not match {h}x{w}x{c}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    return FeatureMap(values.astype(float))
