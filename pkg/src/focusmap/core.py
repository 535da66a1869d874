"""Domain types, manifest I/O and pipeline configuration."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from PIL import Image

Action = Union[tuple[float, ...], int]

MANIFEST_NAME = "manifest.json"


class ManifestError(ValueError):
    """Raised when a manifest cannot be parsed or fails validation."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    index: int
    image: str
    action: Action

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.action, int)


@dataclass(frozen=True)
class TrajectoryManifest:
    name: str
    width: int
    height: int
    frames: tuple[FrameRecord, ...]
    # directory the image paths are relative to; not serialized
    root: Path = field(default=Path("."), compare=False)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def T(self) -> int:
        return len(self.frames)

    def image_path(self, t: int) -> Path:
        return self.root / self.frames[t].image

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "frames": [
                {
                    "index": f.index,
                    "image": f.image,
                    "action": f.action if f.is_discrete else list(f.action),
                }
                for f in self.frames
            ],
        }


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ManifestError(f"{where}: missing key '{key}'")
    value = obj[key]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ManifestError(f"{where}: key '{key}' has invalid type {type(value).__name__}")
    return value


def _parse_action(raw, where: str) -> Action:
    if isinstance(raw, bool):
        raise ManifestError(f"{where}: key 'action' must be a number list or an integer")
    if isinstance(raw, int):
        if raw < 0:
            raise ManifestError(f"{where}: key 'action' discrete value must be non-negative")
        return raw
    if isinstance(raw, list) and raw:
        values = []
        for v in raw:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ManifestError(f"{where}: key 'action' must contain finite numbers")
            values.append(float(v))
        return tuple(values)
    raise ManifestError(f"{where}: key 'action' must be a non-empty number list or an integer")


def manifest_from_dict(data: dict, root: Path | str = ".", check_images: bool = True) -> TrajectoryManifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest: top level must be a JSON object")
    name = _require(data, "name", str, "manifest")
    width = _require(data, "width", int, "manifest")
    height = _require(data, "height", int, "manifest")
    if width <= 0:
        raise ManifestError("manifest: key 'width' must be positive")
    if height <= 0:
        raise ManifestError("manifest: key 'height' must be positive")
    raw_frames = _require(data, "frames", list, "manifest")
    if not raw_frames:
        raise ManifestError("manifest: key 'frames' must contain at least one frame")

    root = Path(root)
    frames = []
    for pos, raw in enumerate(raw_frames):
        where = f"frames[{pos}]"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: must be an object")
        index = _require(raw, "index", int, where)
        image = _require(raw, "image", str, where)
        if "action" not in raw:
            raise ManifestError(f"{where}: missing key 'action'")
        action = _parse_action(raw["action"], where)
        if index != pos:
            if index > pos:
                raise ManifestError(f"frame indices must be gap-free: gap at index {pos}")
            raise ManifestError(f"frame indices must be strictly increasing: index {index} at position {pos}")
        frames.append(FrameRecord(index, image, action))

    kinds = {f.is_discrete for f in frames}
    if len(kinds) > 1:
        raise ManifestError("mixed action variants: continuous and discrete actions in one trajectory")
    if not frames[0].is_discrete:
        dims = {len(f.action) for f in frames}
        if len(dims) > 1:
            raise ManifestError(f"mixed action variants: continuous actions of lengths {sorted(dims)}")

    manifest = TrajectoryManifest(name, width, height, tuple(frames), root)
    if check_images:
        for f in frames:
            path = root / f.image
            if not path.is_file():
                raise ManifestError(f"frame {f.index}: image file not found: {path}")
            try:
                with Image.open(path) as im:
                    size = im.size
            except OSError as exc:
                raise ManifestError(f"frame {f.index}: cannot decode image {path}: {exc}") from exc
            if size != (width, height):
                raise ManifestError(
                    f"frame {f.index}: image is {size[0]}x{size[1]}, manifest declares {width}x{height}"
                )
    return manifest


def load_manifest(path: Path | str, check_images: bool = True) -> TrajectoryManifest:
    """Load and validate a trajectory manifest.

    ``path`` may point at the JSON file or at the directory holding
    ``manifest.json``. Image paths resolve relative to the manifest's directory.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_dict(data, path.parent, check_images=check_images)


def save_manifest(manifest: TrajectoryManifest, path: Path | str) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")


def find_manifests(dataset_dir: Path | str) -> list[Path]:
    """Trajectory manifests in a dataset directory, sorted by subdirectory name."""
    dataset_dir = Path(dataset_dir)
    return sorted(p for p in dataset_dir.glob(f"*/{MANIFEST_NAME}"))


def format_action(action: Action) -> str:
    """Render an action as prompt text: integers verbatim, reals with 4 significant digits."""
    if isinstance(action, int):
        return str(action)
    return ", ".join(_four_sig(v) for v in action)


def _four_sig(v: float) -> str:
    if v == 0:
        return "0.0000"
    digits = 4 - int(math.floor(math.log10(abs(v)))) - 1
    digits = max(digits, 0)
    out = f"{v:.{digits}f}"
    # rounding can carry into a new leading digit (9.9999 -> 10.000)
    if digits > 0 and len(out.lstrip("-").replace(".", "").lstrip("0")) > 4:
        out = f"{v:.{digits - 1}f}"
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline hyperparameters.

    ``lam`` is serialized under the key ``"lambda"``. ``t_prime=0`` gives the
    frame-wise (non-temporal) saliency variant.
    """

    alpha: float = 0.7
    beta: float = 0.8
    gamma: float = 15.0
    t_prime: int = 4
    num_context_frames: int = 25
    iou_gate: float = 0.1
    detector_confidence: float = 0.3
    retry_cap: int = 3
    lam: float = 10.0

    def __post_init__(self):
        for name in ("alpha", "beta", "iou_gate", "detector_confidence"):
            v = getattr(self, name)
            if not _is_real(v) or not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")
        if not _is_real(self.gamma) or not self.gamma > 0 or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be a positive number of pixels, got {self.gamma!r}")
        if not _is_real(self.lam) or not self.lam >= 0 or not math.isfinite(self.lam):
            raise ConfigError(f"lambda must be >= 0, got {self.lam!r}")
        for name, lo in (("t_prime", 0), ("num_context_frames", 1), ("retry_cap", 0)):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_dict(cls, data: dict, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        """Build a config from JSON field names; missing fields come from ``base``."""
        known = set(CONFIG_FIELDS)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kwargs = {("lam" if k == "lambda" else k): v for k, v in data.items()}
        return dataclasses.replace(base or cls(), **kwargs)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


CONFIG_FIELDS = (
    "alpha", "beta", "gamma", "t_prime", "num_context_frames",
    "iou_gate", "detector_confidence", "retry_cap", "lambda",
)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


PRESETS = {
    "carla": PipelineConfig(alpha=0.7, beta=0.8, gamma=15.0, t_prime=4, num_context_frames=25, lam=10.0),
    "robot": PipelineConfig(alpha=0.7, beta=0.8, gamma=30.0, t_prime=4, num_context_frames=25, lam=5.0),
}


def preset(name: str) -> PipelineConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}") from None


def load_config(path: Path | str, base: PipelineConfig | None = None) -> PipelineConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return PipelineConfig.from_dict(data, base)


def save_config(cfg: PipelineConfig, path: Path | str) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
