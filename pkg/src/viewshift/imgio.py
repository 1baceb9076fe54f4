"""PNG encode/decode helpers (8-bit grayscale end-to-end; RGB tolerated)."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def encode_png(image: np.ndarray) -> bytes:
    if image.dtype != np.uint8:
        raise ValueError("expected uint8 image")
    if image.ndim == 2:
        pil = Image.fromarray(image, mode="L")
    elif image.ndim == 3 and image.shape[2] == 3:
        pil = Image.fromarray(image, mode="RGB")
    else:
        raise ValueError(f"unsupported image shape {image.shape}")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    pil = Image.open(io.BytesIO(data))
    if pil.mode not in ("L", "RGB"):
        pil = pil.convert("L")
    return np.asarray(pil)


def write_png(image: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(image))


def read_png(path) -> np.ndarray:
    return decode_png(Path(path).read_bytes())
