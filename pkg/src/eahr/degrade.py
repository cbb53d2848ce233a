"""Blur kernels, seeded Gaussian noise and the ``f = A*u + noise`` pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Kernel, as_image
from .operators import convolve_periodic

__all__ = [
    "DegradeSpec",
    "KernelSpec",
    "gaussian_kernel",
    "motion_kernel",
    "average_kernel",
    "add_gaussian_noise",
    "degrade",
    "shepp_logan",
    "parse_kernel",
]


def _check_odd(size: int) -> None:
    if int(size) != size or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size!r}")


def gaussian_kernel(size: int, spread: float) -> Kernel:
    """Sampled isotropic Gaussian on the centred integer grid, normalised."""
    _check_odd(size)
    if not spread > 0:
        raise ValueError(f"gaussian spread must be positive, got {spread!r}")
    r = np.arange(size) - size // 2
    # separable 1-D profile keeps the taps exactly symmetric
    g = np.exp(-(r.astype(np.float64) ** 2) / (2.0 * spread**2))
    return Kernel.normalized(np.outer(g, g))


def average_kernel(size: int) -> Kernel:
    _check_odd(size)
    return Kernel(np.full((size, size), 1.0 / (size * size)))


def _clip_length(x0, y0, x1, y1, xmin, xmax, ymin, ymax) -> float:
    """Length of segment (x0,y0)-(x1,y1) inside an axis-aligned box (Liang-Barsky)."""
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return 0.0
            continue
        r = q / p
        if p < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 >= t1:
            return 0.0
    return (t1 - t0) * math.hypot(dx, dy)


def motion_kernel(length: float, angle_degrees: float) -> Kernel:
    """Linear motion PSF of the given length (pixels) and direction.

    The blur path is a segment of length ``length`` centred on the kernel
    centre, at ``angle_degrees`` counter-clockwise from the +column axis
    (rows grow downward, so positive angles point up).  Each tap is the
    length of the segment lying inside that pixel's unit square, i.e. the
    exact coverage of an infinitely thin uniform line; taps are then
    normalised to unit sum.  The kernel is the smallest odd square that holds
    the segment, and is point-symmetric, so ``angle`` and ``angle + 180``
    give the same kernel.
    """
    if not length >= 1:
        raise ValueError(f"motion length must be >= 1, got {length!r}")
    theta = math.radians(angle_degrees)
    ux, uy = math.cos(theta), -math.sin(theta)
    # round away float noise such as cos(90deg) = 6e-17 before sizing
    ex = round(abs(ux) * length / 2.0, 9)
    ey = round(abs(uy) * length / 2.0, 9)
    half = max(0, math.ceil(max(ex, ey) - 0.5))
    size = 2 * half + 1
    x0, y0 = -ux * length / 2.0, -uy * length / 2.0
    x1, y1 = -x0, -y0
    taps = np.zeros((size, size))
    for row in range(size):
        yc = row - half
        for col in range(size):
            xc = col - half
            taps[row, col] = _clip_length(x0, y0, x1, y1, xc - 0.5, xc + 0.5, yc - 0.5, yc + 0.5)
    taps = 0.5 * (taps + taps[::-1, ::-1])
    return Kernel.normalized(taps)


@dataclass(frozen=True)
class KernelSpec:
    """Declarative blur kernel: ``gaussian(size, spread)``, ``motion(length,
    angle)`` or ``average(size)``; written ``kind:a[:b]`` on the command line.
    """

    kind: str
    size: int = 1
    param: float = 0.0

    def __post_init__(self):
        if self.kind == "gaussian":
            _check_odd(self.size)
            if not self.param > 0:
                raise ValueError(f"gaussian spread must be positive, got {self.param!r}")
        elif self.kind == "average":
            _check_odd(self.size)
        elif self.kind == "motion":
            if not self.size >= 1:
                raise ValueError(f"motion length must be >= 1, got {self.size!r}")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def build(self) -> Kernel:
        if self.kind == "gaussian":
            return gaussian_kernel(self.size, self.param)
        if self.kind == "motion":
            return motion_kernel(self.size, self.param)
        return average_kernel(self.size)

    def __str__(self):
        if self.kind == "average":
            return f"average:{self.size}"
        return f"{self.kind}:{self.size}:{self.param:g}"


def parse_kernel(text: str) -> KernelSpec:
    """Parse ``gaussian:9:5``, ``motion:20:60`` or ``average:9``."""
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "average" and len(parts) == 2:
            return KernelSpec("average", int(parts[1]))
        if kind in ("gaussian", "motion") and len(parts) == 3:
            size = float(parts[1])
            if size != int(size):
                raise ValueError(f"kernel size must be an integer, got {parts[1]!r}")
            return KernelSpec(kind, int(size), float(parts[2]))
    except ValueError as exc:
        raise ValueError(f"invalid kernel spec {text!r}: {exc}") from exc
    raise ValueError(f"invalid kernel spec {text!r}; expected gaussian:S:P, motion:L:A or average:S")


@dataclass(frozen=True)
class DegradeSpec:
    kernel: KernelSpec
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.noise_sigma!r}")


def add_gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise, unclamped.

    Samples come from ``numpy.random.default_rng(seed)`` (PCG64) via
    ``standard_normal`` in C order over the whole array, so output is a pure
    function of ``(img, sigma, seed)``.
    """
    if not sigma >= 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma!r}")
    img = as_image(img)
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)


def degrade(u, spec: DegradeSpec) -> np.ndarray:
    """Blur ``u`` channel-wise with periodic boundaries, then add noise."""
    u = as_image(u)
    blurred = convolve_periodic(u, spec.kernel.build())
    return add_gaussian_noise(blurred, spec.noise_sigma, spec.seed)


# Modified Shepp-Logan (Toft): intensity, semi-axis a, semi-axis b, x0, y0, phi (degrees)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def shepp_logan(n: int = 256) -> np.ndarray:
    """Ten-ellipse modified Shepp-Logan phantom on an ``n x n`` grid, 0-255 scale.

    Row 0 is the top of the head (y = +1), matching the usual display.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"phantom size must be a positive integer, got {n!r}")
    n = int(n)
    axis = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    x = axis[None, :]
    y = axis[::-1, None]
    p = np.zeros((n, n))
    for value, a, b, x0, y0, phi in _SHEPP_LOGAN:
        c, s = math.cos(math.radians(phi)), math.sin(math.radians(phi))
        xr = (x - x0) * c + (y - y0) * s
        yr = -(x - x0) * s + (y - y0) * c
        p[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return np.clip(p, 0.0, 1.0) * 255.0
