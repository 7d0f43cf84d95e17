"""Inpainting measurement operators.

The forward matrix H is a row selector over flat pixel indices, so
H H^T = I and H^T H is a 0/1 diagonal projector. Masks act identically on
every channel; kept_indices are stored already expanded across channels in
(channel, row, col) C-order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

MASK_KINDS = ("box50", "half", "expand", "box25", "sr2x", "altlines")


@dataclass(frozen=True)
class InpaintingMask:
    width: int
    height: int
    channels: int
    kept_indices: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        idx = np.asarray(self.kept_indices, dtype=np.int64)
        object.__setattr__(self, "kept_indices", idx)
        n = self.width * self.height * self.channels
        if idx.ndim != 1 or idx.size == 0:
            raise ConfigError("kept_indices must be a nonempty 1-D index list")
        if np.any(np.diff(idx) <= 0):
            raise ConfigError("kept_indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= n:
            raise ConfigError(f"kept_indices out of range [0, {n})")

    @property
    def n(self) -> int:
        return self.width * self.height * self.channels

    @property
    def m(self) -> int:
        return int(self.kept_indices.size)

    @property
    def hidden_indices(self) -> np.ndarray:
        keep = np.zeros(self.n, dtype=bool)
        keep[self.kept_indices] = True
        return np.nonzero(~keep)[0]

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DataError(f"expected vectors of length {self.n}, got shape {x.shape}")
        return x[..., self.kept_indices]

    def adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.m:
            raise DataError(f"expected measurements of length {self.m}, got shape {y.shape}")
        out = np.zeros(y.shape[:-1] + (self.n,))
        out[..., self.kept_indices] = y
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "width": self.width,
                "height": self.height,
                "channels": self.channels,
                "kept_indices": self.kept_indices.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "InpaintingMask":
        try:
            doc = json.loads(text)
            return cls(
                width=doc["width"],
                height=doc["height"],
                channels=doc["channels"],
                kept_indices=np.asarray(doc["kept_indices"], dtype=np.int64),
                kind=doc.get("kind", "custom"),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"bad mask document: {exc}") from exc


def _center_box_hidden(width: int, crop: int) -> np.ndarray:
    off = (width - crop) // 2
    hidden = np.zeros((width, width), dtype=bool)
    hidden[off : off + crop, off : off + crop] = True
    return hidden


def make_mask(kind: str, width: int, height: int, channels: int = 1) -> InpaintingMask:
    """Build one of the six mask families; kept pixels are the visible set."""
    if kind not in MASK_KINDS:
        raise ConfigError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    if width != height:
        raise ConfigError("masks require square images (width == height)")
    if channels < 1:
        raise ConfigError("channels must be >= 1")
    if kind in ("box50", "box25", "expand", "sr2x", "altlines") and width % 2:
        raise ConfigError(f"mask kind {kind!r} requires even dimensions")

    hidden = np.zeros((height, width), dtype=bool)
    if kind == "box50":
        hidden = _center_box_hidden(width, width // 2)
    elif kind == "box25":
        hidden = _center_box_hidden(width, width // 4)
    elif kind == "expand":
        hidden = ~_center_box_hidden(width, width // 4)
    elif kind == "half":
        hidden[:, width - width // 2 :] = True
    elif kind == "sr2x":
        hidden[:, :] = True
        hidden[::2, ::2] = False
    elif kind == "altlines":
        hidden[1::2, :] = True

    keep_pixels = np.nonzero(~hidden.reshape(-1))[0]
    n_pix = width * height
    kept = (np.arange(channels)[:, None] * n_pix + keep_pixels[None, :]).reshape(-1)
    return InpaintingMask(width=width, height=height, channels=channels, kept_indices=kept, kind=kind)


@dataclass(frozen=True)
class Measurement:
    """Observation y = H x + eta with noise std sigma_y."""

    y: np.ndarray
    sigma_y: float
    mask: InpaintingMask

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if self.sigma_y < 0:
            raise ConfigError("sigma_y must be nonnegative")
        if y.shape[-1] != self.mask.m:
            raise DataError(f"y has length {y.shape[-1]}, mask expects {self.mask.m}")

    def residual(self, x):
        return self.y - self.mask.apply(x)


def apply(mask: InpaintingMask, x):
    return mask.apply(x)


def adjoint(mask: InpaintingMask, y):
    return mask.adjoint(y)


def simulate_measurement(x0, mask: InpaintingMask, sigma_y: float, rng: np.random.Generator) -> Measurement:
    """y = H x0 + sigma_y * xi with standard normal xi."""
    if sigma_y < 0:
        raise ConfigError("sigma_y must be nonnegative")
    clean = mask.apply(x0)
    y = clean + sigma_y * rng.standard_normal(clean.shape) if sigma_y > 0 else clean
    return Measurement(y=y, sigma_y=sigma_y, mask=mask)
