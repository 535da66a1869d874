import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from focusmap.synthetic import make_golden_dataset


@pytest.fixture
def golden(tmp_path) -> Path:
    return make_golden_dataset(tmp_path / "data")


def write_trajectory(root: Path, name="traj", T=3, width=16, height=12, actions=None, ext="png"):
    """Plain trajectory directory with gray frames; returns its directory."""
    tdir = Path(root) / name
    (tdir / "frames").mkdir(parents=True, exist_ok=True)
    frames = []
    for t in range(T):
        img = np.full((height, width, 3), 40 + 10 * t, dtype=np.uint8)
        rel = f"frames/{t:03d}.{ext}"
        Image.fromarray(img).save(tdir / rel)
        action = actions[t] if actions is not None else [0.1 * t, -0.5]
        frames.append({"index": t, "image": rel, "action": action})
    manifest = {"name": name, "width": width, "height": height, "frames": frames}
    (tdir / "manifest.json").write_text(json.dumps(manifest))
    return tdir
