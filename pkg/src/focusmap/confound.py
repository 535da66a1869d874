"""Confounded dataset variants: previous-action icons drawn in the top margin.

For every frame after the first, the action of the previous frame is shown as

* a red filled circle ("brake light") when brake exceeds ``brake_threshold``;
* an arrow pointing left, right or up for negative, positive or near-zero
  steering, whose stroke thickness is ``round(throttle * thickness_per_unit)``
  pixels, capped at ``thickness_cap``. No arrow is drawn at zero thickness.

Everything is drawn inside the band ``rows [0, band_height)``; pixels below
it are never touched. Geometry defaults approximate the driving overlays and
can be overridden with a JSON object using the field names of IconConfig.
"""
from __future__ import annotations

import dataclasses
import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._images import read_rgb, write_png
from .core import MANIFEST_NAME, find_manifests, load_manifest, save_manifest

BRAKE_COLOR = (255, 0, 0)
ARROW_COLOR = (0, 255, 0)


class ConfoundError(ValueError):
    pass


@dataclass(frozen=True)
class IconConfig:
    band_height: int = 24
    brake_threshold: float = 0.5
    brake_radius: int = 8
    brake_margin_right: int = 16     # circle center x = width - brake_margin_right
    arrow_length: int = 32
    arrow_head_length: int = 8
    arrow_head_half_width: int = 8
    thickness_per_unit: float = 8.0
    thickness_cap: int = 10
    steer_deadzone: float = 0.05
    steer_index: int = 0
    throttle_index: int = 1
    brake_index: int = 2

    @property
    def center_y(self) -> int:
        return self.band_height // 2

    @classmethod
    def load(cls, path: Path | str | None) -> "IconConfig":
        if path is None:
            return cls()
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfoundError(f"unknown icon_config field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


def driving_action(action, cfg: IconConfig) -> tuple[float, float, float]:
    """(steer, throttle, brake) from a continuous action vector."""
    if isinstance(action, int):
        raise ConfoundError("discrete actions cannot be mapped to steer/throttle/brake")
    need = max(cfg.steer_index, cfg.throttle_index, cfg.brake_index)
    if len(action) <= need:
        raise ConfoundError(f"action {list(action)} has no component {need}; expected (steer, throttle, brake)")
    return float(action[cfg.steer_index]), float(action[cfg.throttle_index]), float(action[cfg.brake_index])


def arrow_thickness(throttle: float, cfg: IconConfig) -> int:
    return int(min(cfg.thickness_cap, max(0, math.floor(throttle * cfg.thickness_per_unit + 0.5))))


def arrow_direction(steer: float, cfg: IconConfig) -> str:
    if abs(steer) < cfg.steer_deadzone:
        return "up"
    return "right" if steer > 0 else "left"


def _brake_mask(h: int, w: int, cfg: IconConfig) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    cx = w - cfg.brake_margin_right
    return (xx - cx) ** 2 + (yy - cfg.center_y) ** 2 <= cfg.brake_radius ** 2


def _arrow_mask(h: int, w: int, direction: str, thickness: int, cfg: IconConfig) -> np.ndarray:
    """Right-pointing arrow centered at (w/2, center_y), rotated for other directions."""
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = w // 2, cfg.center_y
    if direction == "up":
        length = min(cfg.arrow_length, cfg.band_height - 4)
        # along-axis coordinate grows toward the tip
        along, across = (cy + length // 2) - yy, xx - cx
    else:
        length = cfg.arrow_length
        along = xx - (cx - length // 2) if direction == "right" else (cx + length // 2) - xx
        across = yy - cy
    shaft_end = length - cfg.arrow_head_length
    top = -(thickness // 2)
    shaft = (along >= 0) & (along < shaft_end) & (across >= top) & (across < top + thickness)
    # isosceles head: half width shrinks linearly to zero at the tip
    dist = along - shaft_end
    head_len = cfg.arrow_head_length
    half = cfg.arrow_head_half_width * (head_len - dist) / head_len
    head = (dist >= 0) & (dist <= head_len) & (np.abs(across) <= half)
    return shaft | head


def render_icons(frame: np.ndarray, prev_action, cfg: IconConfig = IconConfig()) -> np.ndarray:
    """Copy of ``frame`` with the icons for ``prev_action`` drawn in the top band."""
    out = frame.copy()
    h, w = out.shape[:2]
    steer, throttle, brake = driving_action(prev_action, cfg)
    band = np.zeros((h, w), dtype=bool)
    band[: cfg.band_height] = True
    if brake > cfg.brake_threshold:
        out[_brake_mask(h, w, cfg) & band] = BRAKE_COLOR
    thickness = arrow_thickness(throttle, cfg)
    if thickness > 0:
        out[_arrow_mask(h, w, arrow_direction(steer, cfg), thickness, cfg) & band] = ARROW_COLOR
    return out


def confound(dataset_dir: Path | str, out_dir: Path | str, icon_config: IconConfig | Path | str | None = None) -> list[Path]:
    """Copy a dataset and overlay previous-action icons on every frame but the first.

    Frames are rewritten as PNG (manifest image paths follow the new names);
    actions and frame order are left unchanged. Returns the new manifests.
    """
    cfg = icon_config if isinstance(icon_config, IconConfig) else IconConfig.load(icon_config)
    dataset_dir, out_dir = Path(dataset_dir), Path(out_dir)
    manifests = find_manifests(dataset_dir)
    if not manifests:
        raise FileNotFoundError(f"no */{MANIFEST_NAME} under {dataset_dir}")
    # validate every trajectory before writing anything
    trajectories = [load_manifest(p) for p in manifests]
    for traj in trajectories:
        for f in traj.frames:
            driving_action(f.action, cfg)

    shutil.copytree(dataset_dir, out_dir, dirs_exist_ok=True)
    written = []
    for path, traj in zip(manifests, trajectories):
        tdir = out_dir / path.parent.relative_to(dataset_dir)
        frames = []
        for f in traj.frames:
            img = read_rgb(traj.image_path(f.index))
            if f.index > 0:
                img = render_icons(img, traj.frames[f.index - 1].action, cfg)
            name = str(Path(f.image).with_suffix(".png"))
            target = tdir / name
            if name != f.image:
                (tdir / f.image).unlink(missing_ok=True)
            target.parent.mkdir(parents=True, exist_ok=True)
            write_png(img, target)
            frames.append(dataclasses.replace(f, image=Path(name).as_posix()))
        new = dataclasses.replace(traj, frames=tuple(frames), root=tdir)
        save_manifest(new, tdir / MANIFEST_NAME)
        written.append(tdir / MANIFEST_NAME)
    (out_dir / "icon_config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n", encoding="utf-8")
    return written
