"""Small numeric and validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero.

    Works on scalars and arrays. Returns ``int`` for scalar input and an
    ``int64`` array otherwise.
    """
    if np.isscalar(x):
        v = float(x)
        return int(np.sign(v) * np.floor(abs(v) + 0.5))
    a = np.asarray(x, dtype=np.float64)
    return (np.sign(a) * np.floor(np.abs(a) + 0.5)).astype(np.int64)


def check_luma(samples, name="image"):
    """Validate a 2-D 8-bit luma array and return it as ``uint8``."""
    a = np.asarray(samples)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if a.dtype != np.uint8:
        if np.any(a < 0) or np.any(a > 255):
            raise ValueError(f"{name} samples must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


def check_feature_batch(X, name="X"):
    """Validate a batch of 3-channel byte images, shape (n, H, W, 3)."""
    a = np.asarray(X)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4 or a.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n, H, W, 3), got {a.shape}")
    if a.dtype != np.uint8:
        if np.any(a < 0) or np.any(a > 255):
            raise ValueError(f"{name} values must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


def psnr(a, b):
    """Peak signal-to-noise ratio in dB between two 8-bit images."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0 ** 2 / mse)
