"""Separable 2-d resampling kernels: anti-aliased area averaging for
downscaling and Catmull-Rom bicubic (a = -0.5) for upscaling.

Both operate per channel on float arrays via precomputed 1-d weight
matrices, with half-pixel-center alignment for the bicubic path.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic [n_out, n_in] matrix of box-overlap fractions."""
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_in)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / scale
    return weights


def _catmull_rom(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    near = (1.5 * ax - 2.5) * ax * ax + 1.0
    far = ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _bicubic_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] Catmull-Rom interpolation matrix with edge clamping."""
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        base = int(np.floor(src))
        frac = src - base
        taps = np.array([base - 1, base, base + 1, base + 2])
        w = _catmull_rom(np.array([frac + 1.0, frac, frac - 1.0, frac - 2.0]))
        for tap, wt in zip(np.clip(taps, 0, n_in - 1), w):
            weights[i, tap] += wt
    return weights


def area_resample(channel: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter a [H, W] channel down (or keep equal); never upscales."""
    h, w = channel.shape
    if out_h > h or out_w > w:
        raise ConfigurationError(
            f"area_resample only downsamples: {h}x{w} -> {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        return channel.copy()
    rows = _area_weights(h, out_h)
    cols = _area_weights(w, out_w)
    return (rows @ channel.astype(np.float64) @ cols.T).astype(channel.dtype)


def bicubic_resample(channel: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Catmull-Rom resample of a [H, W] channel (identity when sizes match)."""
    h, w = channel.shape
    if (out_h, out_w) == (h, w):
        return channel.copy()
    rows = _bicubic_weights(h, out_h)
    cols = _bicubic_weights(w, out_w)
    return (rows @ channel.astype(np.float64) @ cols.T).astype(channel.dtype)
