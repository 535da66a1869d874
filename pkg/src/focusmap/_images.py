import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image


def png_bytes(path: Path | str) -> bytes:
    """Re-encode an image file as RGB PNG."""
    with Image.open(path) as im:
        buf = io.BytesIO()
        im.convert("RGB").save(buf, format="PNG")
    return buf.getvalue()


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def data_url(png: bytes) -> str:
    return "data:image/png;base64," + b64(png)


def read_rgb(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).copy()


def write_png(arr: np.ndarray, path: Path | str) -> None:
    # optimize/compress settings pinned so reruns produce identical bytes
    Image.fromarray(arr).save(path, format="PNG", compress_level=6)
