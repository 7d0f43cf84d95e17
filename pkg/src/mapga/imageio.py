"""Image artifact output: viewable 8-bit PNG plus a lossless float32 sidecar.

The sidecar is a flat binary file with a 16-byte header (4-byte magic,
three uint32 dims: channels, height, width) followed by C-order float32
pixels. Metrics are always computed from the sidecar so PSNR is never
quantization-limited.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

MAGIC = b"FI32"
HEADER = struct.Struct("<4sIII")


def write_float_image(path, arr) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DataError(f"expected (channels, height, width) array, got shape {arr.shape}")
    c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, c, h, w))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_float_image(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, c, h, w = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype=np.float32, offset=HEADER.size)
    if data.size != c * h * w:
        raise DataError(f"{path}: payload size mismatch")
    return data.reshape(c, h, w).copy()


def write_png(path, arr) -> None:
    """8-bit grayscale preview, min/max normalized per image."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 3:
        arr = arr[0]
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.clip((arr - lo) * scale, 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)
