"""Image and kernel containers, raster I/O and channel handling.

Images are plain ``float64`` numpy arrays on the 0-255 intensity scale,
shaped ``(H, W)`` for grayscale or ``(H, W, C)`` for color.  Every
downstream module works on single-channel planes; color is handled by
splitting, processing each plane and merging back.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

__all__ = [
    "ImageIOError",
    "Kernel",
    "as_image",
    "load_image",
    "save_image",
    "split_channels",
    "merge_channels",
]

_SUPPORTED_SUFFIXES = {".pgm", ".ppm", ".pnm", ".png"}
_SUPPORTED_MODES = {"L", "RGB"}


class ImageIOError(OSError):
    """Raised when an image file cannot be read or written."""


def as_image(data, *, copy: bool = True) -> np.ndarray:
    """Validate ``data`` as an image and return it as a float64 array.

    Raises ``ValueError`` for zero-sized, non-2/3-D or non-finite input.
    """
    img = np.array(data, dtype=np.float64, copy=copy)
    if img.ndim not in (2, 3):
        raise ValueError(f"image must be 2-D or 3-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"zero-dimension image: shape {img.shape}")
    if img.ndim == 3 and img.shape[2] < 1:
        raise ValueError(f"image has no channels: shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains NaN or Inf values")
    return img


@dataclass(frozen=True, eq=False)
class Kernel:
    """Square, odd-sized, non-negative PSF whose taps sum to one.

    The taps array is copied and made read-only on construction.
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"kernel must be square 2-D, got shape {taps.shape}")
        if taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {taps.shape[0]}")
        if not np.all(np.isfinite(taps)) or np.any(taps < 0):
            raise ValueError("kernel taps must be finite and non-negative")
        total = taps.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"kernel taps must sum to 1, got {total!r}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def normalized(cls, weights) -> "Kernel":
        """Build a kernel from arbitrary non-negative weights by rescaling."""
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if not total > 0:
            raise ValueError("kernel weights must have a positive sum")
        return cls(weights / total)

    @classmethod
    def identity(cls) -> "Kernel":
        return cls(np.ones((1, 1)))

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    def __repr__(self):
        return f"Kernel(size={self.size})"


def load_image(path) -> np.ndarray:
    """Read a PGM/PPM (binary or ASCII, maxval 255) or PNG file.

    Byte value ``v`` maps to the real intensity ``v``.  Grayscale files
    give an ``(H, W)`` array, color files an ``(H, W, 3)`` array.
    """
    path = Path(path)
    if path.suffix.lower() not in _SUPPORTED_SUFFIXES:
        raise ImageIOError(f"unsupported format: {path}")
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode == "1":
                pil = pil.convert("L")
                mode = "L"
            if mode == "P":
                pil = pil.convert("RGB")
                mode = "RGB"
            if mode not in _SUPPORTED_MODES:
                raise ImageIOError(f"unsupported format: {path} (mode {mode})")
            data = np.asarray(pil, dtype=np.float64)
    except FileNotFoundError as exc:
        raise ImageIOError(f"unreadable file: {path}") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageIOError(f"unreadable file: {path}: {exc}") from exc
    if data.size == 0:
        raise ImageIOError(f"zero-dimension image: {path}")
    return data


def to_bytes(img) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to ``uint8``."""
    img = np.asarray(img, dtype=np.float64)
    # after clamping all values are >= 0, so floor(x + 0.5) rounds half away from zero
    return np.floor(np.clip(img, 0.0, 255.0) + 0.5).astype(np.uint8)


def save_image(img, path) -> None:
    """Write ``img`` as 8-bit PGM/PPM/PNG chosen by the file suffix."""
    img = as_image(img, copy=False)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in _SUPPORTED_SUFFIXES:
        raise ImageIOError(f"unsupported format: {path}")
    data = to_bytes(img)
    if data.ndim == 3:
        if data.shape[2] == 1:
            data = data[:, :, 0]
        elif data.shape[2] != 3:
            raise ValueError(f"cannot encode {data.shape[2]}-channel image")
    if suffix == ".pgm" and data.ndim == 3:
        raise ImageIOError(f"PGM cannot hold a color image: {path}")
    if suffix == ".ppm" and data.ndim == 2:
        data = np.repeat(data[:, :, None], 3, axis=2)
    pil = PILImage.fromarray(data, mode="L" if data.ndim == 2 else "RGB")
    try:
        pil.save(path)
    except OSError as exc:
        raise ImageIOError(f"unwritable path: {path}: {exc}") from exc


def split_channels(img) -> list[np.ndarray]:
    img = as_image(img, copy=False)
    if img.ndim == 2:
        return [img.copy()]
    return [img[:, :, c].copy() for c in range(img.shape[2])]


def merge_channels(planes) -> np.ndarray:
    """Inverse of :func:`split_channels`; a single plane stays 2-D."""
    planes = [as_image(p, copy=False) for p in planes]
    if not planes:
        raise ValueError("no planes to merge")
    shape = planes[0].shape
    for p in planes:
        if p.ndim != 2:
            raise ValueError(f"planes must be 2-D, got shape {p.shape}")
        if p.shape != shape:
            raise ValueError(f"dimension mismatch: {p.shape} vs {shape}")
    if len(planes) == 1:
        return planes[0].copy()
    return np.stack(planes, axis=2)
