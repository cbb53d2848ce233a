"""MSE, PSNR (peak 255) and SSIM with the usual 11x11 Gaussian window."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .image import as_image, split_channels

__all__ = ["QualityReport", "mse", "psnr", "ssim", "quality", "format_psnr"]

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SPREAD = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(u, v) -> tuple[np.ndarray, np.ndarray]:
    u = as_image(u, copy=False)
    v = as_image(v, copy=False)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return u, v


def mse(u, v) -> float:
    """Mean squared difference over all pixels and channels."""
    u, v = _pair(u, v)
    return float(np.mean((u - v) ** 2))


def psnr(u, v, peak: float = PEAK) -> float:
    """``10 log10(peak^2 / mse)``; identical images give ``inf``."""
    m = mse(u, v)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def _gaussian_window(size: int = SSIM_WINDOW, spread: float = SSIM_SPREAD) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2.0 * spread**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, then keep only windows fully inside the image
    half = g.size // 2
    y = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return y[half : x.shape[0] - half, half : x.shape[1] - half]


def _ssim_plane(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    g = _gaussian_window()
    if min(x.shape) < g.size:
        raise ValueError(f"image {x.shape} is smaller than the {g.size}x{g.size} SSIM window")
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


def ssim(u, v, data_range: float = PEAK) -> float:
    """Mean SSIM over valid (unpadded) windows, averaged over channels.

    Identical inputs return exactly 1.0.
    """
    u, v = _pair(u, v)
    if np.array_equal(u, v):
        if min(u.shape[:2]) < SSIM_WINDOW:
            raise ValueError(f"image {u.shape} is smaller than the SSIM window")
        return 1.0
    scores = [_ssim_plane(a, b, data_range) for a, b in zip(split_channels(u), split_channels(v))]
    return float(np.mean(scores))


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    mse: float
    channels: list["QualityReport"] = field(default_factory=list)


def quality(reference, test) -> QualityReport:
    """PSNR/SSIM/MSE of ``test`` against ``reference`` with a per-channel breakdown."""
    reference, test = _pair(reference, test)
    per = []
    if reference.ndim == 3 and reference.shape[2] > 1:
        for a, b in zip(split_channels(reference), split_channels(test)):
            per.append(QualityReport(psnr(a, b), ssim(a, b), mse(a, b)))
    return QualityReport(psnr(reference, test), ssim(reference, test), mse(reference, test), per)
