"""Edge information map and the two-level (binarised) regularisation weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import gaussian_kernel
from .operators import convolve_spectrum, grad, kernel_spectrum

__all__ = ["WeightConfig", "edge_matrix", "binarize_weights"]


@dataclass(frozen=True)
class WeightConfig:
    """Base weights, smooth-region scale factors, threshold and smoother.

    ``alpha1``/``alpha2`` weight the TV and Tikhonov terms at edge pixels
    (``E < tau``); pixels with ``E >= tau`` get ``theta * alpha``.
    ``swap_branches`` exchanges the two branches for ablation runs.
    """

    alpha1: float = 1.0
    alpha2: float = 1.0
    theta1: float = 0.5
    theta2: float = 0.5
    tau: float = 0.9
    g_size: int = 5
    g_spread: float = 1.0
    swap_branches: bool = False

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise ValueError(f"alpha1 must be > 0, got {self.alpha1!r}")
        if not self.alpha2 >= 0:
            raise ValueError(f"alpha2 must be >= 0, got {self.alpha2!r}")
        for name in ("theta1", "theta2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau!r}")
        if int(self.g_size) != self.g_size or self.g_size < 1 or self.g_size % 2 == 0:
            raise ValueError(f"g_size must be a positive odd integer, got {self.g_size!r}")
        if not self.g_spread > 0:
            raise ValueError(f"g_spread must be > 0, got {self.g_spread!r}")


def edge_matrix(u: np.ndarray, g_size: int = 5, g_spread: float = 1.0) -> np.ndarray:
    """``E = 1 / (1 + |G * grad u|^2)`` with both gradient components smoothed
    by a periodic Gaussian ``G``.  Values lie in (0, 1]; flat regions give 1.
    """
    u = np.asarray(u, dtype=np.float64)
    h, w = u.shape
    g = gaussian_kernel(g_size, g_spread)
    if g.size > min(h, w):
        # a smoother wider than the image is meaningless; fall back to no smoothing
        smoothed = grad(u)
    else:
        spec = kernel_spectrum(g, h, w)
        smoothed = np.stack([convolve_spectrum(c, spec) for c in grad(u)])
    mag2 = smoothed[0] ** 2 + smoothed[1] ** 2
    return 1.0 / (1.0 + mag2)


def binarize_weights(E: np.ndarray, cfg: WeightConfig) -> tuple[np.ndarray, np.ndarray]:
    """Two-level weight maps: ``alpha`` where ``E < tau``, ``theta*alpha`` where ``E >= tau``."""
    E = np.asarray(E, dtype=np.float64)
    edge = E < cfg.tau
    if cfg.swap_branches:
        edge = ~edge
    a1 = np.where(edge, cfg.alpha1, cfg.theta1 * cfg.alpha1)
    a2 = np.where(edge, cfg.alpha2, cfg.theta2 * cfg.alpha2)
    return a1, a2
