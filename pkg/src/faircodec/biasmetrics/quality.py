"""Full-reference image quality: MSE, PSNR and SSIM for images in [0, 1]."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fairness import MetricsError

PSNR_CAP = 100.0
MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise MetricsError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def mse(x, y):
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(m):
    """-10 log10(MSE) for unit peak, capped at 100 dB below an MSE of 1e-10."""
    if m < MSE_FLOOR:
        return PSNR_CAP
    return float(min(-10.0 * np.log10(m), PSNR_CAP))


def psnr(x, y):
    return psnr_from_mse(mse(x, y))


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable correlation of (H, W, C) ``img`` with ``g``, valid positions only."""
    k = len(g)
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim(x, y, data_range=1.0):
    """Mean SSIM over all valid 11x11 window positions and channels."""
    x, y = _pair(x, y)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    if x.ndim != 3:
        raise MetricsError(f"expected an (H, W) or (H, W, C) image, got shape {x.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise MetricsError(f"image {x.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def batch_quality(xs, ys):
    """Per-image (mse, psnr, ssim) arrays for two aligned batches."""
    xs, ys = _pair(xs, ys)
    m = np.mean((xs - ys) ** 2, axis=tuple(range(1, xs.ndim)))
    p = np.array([psnr_from_mse(v) for v in m])
    s = np.array([ssim(a, b) for a, b in zip(xs, ys)])
    return m, p, s
