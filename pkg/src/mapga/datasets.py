"""Synthetic desk-scale datasets: mixture draws and smooth random fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .priors import GaussianMixture

DATASET_KINDS = ("gmm-draws", "smooth-fields")


def smooth_fields(count: int, height: int, width: int, rng: np.random.Generator, length_scale: float = 0.25):
    """Band-limited random images: white noise filtered with a squared-
    exponential spectrum, normalized to zero mean / unit std per ensemble."""
    ky = np.fft.fftfreq(height)[:, None]
    kx = np.fft.rfftfreq(width)[None, :]
    ell = length_scale * min(height, width)
    envelope = np.exp(-0.5 * ell**2 * (2 * np.pi) ** 2 * (kx**2 + ky**2))
    noise = rng.standard_normal((count, height, width))
    fields = np.fft.irfft2(np.fft.rfft2(noise) * envelope, s=(height, width))
    fields -= fields.mean()
    std = fields.std()
    if std > 0:
        fields /= std
    return fields.reshape(count, -1)


def make_synthetic_dataset(
    kind: str,
    count: int,
    shape: tuple[int, int, int],
    rng: np.random.Generator,
    mixture: GaussianMixture | None = None,
    out_path=None,
):
    """Generate a dataset of flat sample vectors; optionally save as .npz."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    if kind not in DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    channels, height, width = shape
    n = channels * height * width
    if kind == "gmm-draws":
        if mixture is None:
            raise ConfigError("gmm-draws needs a mixture specification")
        if mixture.dim != n:
            raise DataError(f"mixture dimension {mixture.dim} does not match shape {shape}")
        samples = mixture.sample(rng, count)
    else:
        if channels != 1:
            raise ConfigError("smooth-fields supports single-channel shapes")
        samples = smooth_fields(count, height, width, rng)
    if out_path is not None:
        np.savez(out_path, samples=samples, channels=channels, height=height, width=width)
    return samples


def load_dataset(path) -> np.ndarray:
    try:
        with np.load(path) as doc:
            return np.asarray(doc["samples"], dtype=float)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot load dataset {path}: {exc}") from exc
