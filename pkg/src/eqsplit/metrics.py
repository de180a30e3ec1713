"""Image quality metrics.  Images are flat rows; 2-D shape is inferred as square."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

PSNR_CAP_DB = 150.0


def psnr(xhat, x, peak: float = 1.0):
    """Per-image PSNR in dB with a fixed peak, capped at 150 dB for exact matches."""
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = np.mean((xhat - x) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(peak**2 / mse)
    return np.minimum(out, PSNR_CAP_DB)


def _square(v, shape):
    if shape is not None:
        return v.reshape(*v.shape[:-1], *shape)
    side = int(round(np.sqrt(v.shape[-1])))
    if side * side != v.shape[-1]:
        raise ValueError("pass the image shape for non-square images")
    return v.reshape(*v.shape[:-1], side, side)


def ssim(xhat, x, shape=None, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
         peak: float = 1.0):
    """Gaussian-window SSIM per image, averaged over windows away from the border.

    Local statistics use a Gaussian of std ``sigma`` truncated to ``window``
    taps, population (biased) variances and reflective padding.
    """
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch {xhat.shape} vs {x.shape}")
    a, b = _square(xhat, shape), _square(x, shape)
    h, w = a.shape[-2:]
    if window > h or window > w:
        raise ValueError(f"window {window} larger than {h}x{w} image")
    if window % 2 == 0:
        raise ValueError("window size must be odd")
    radius = (window - 1) // 2
    truncate = radius / sigma
    axes = (a.ndim - 2, a.ndim - 1)

    def blur(img):
        return gaussian_filter(img, sigma, mode="reflect", truncate=truncate, axes=axes)

    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    ma, mb = blur(a), blur(b)
    va = blur(a * a) - ma * ma
    vb = blur(b * b) - mb * mb
    cov = blur(a * b) - ma * mb
    smap = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2))
    inner = smap[..., radius:h - radius, radius:w - radius]
    return inner.mean(axis=(-2, -1))
