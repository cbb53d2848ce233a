"""Periodic finite differences and circular convolution.

Gradient fields are stacked arrays of shape ``(2, H, W)``: index 0 holds
the difference along axis 0 (rows), index 1 along axis 1 (columns).
All operators wrap around the image border so that they are circulant
and diagonalised by the 2-D DFT.  The forward FFT is unnormalised; the
inverse carries the ``1/(H*W)`` factor (numpy's default).
"""

from __future__ import annotations

import numpy as np

from .image import Kernel

__all__ = [
    "grad",
    "div",
    "laplacian",
    "kernel_spectrum",
    "diff_spectra",
    "convolve_periodic",
    "convolve_spectrum",
]


def grad(u: np.ndarray) -> np.ndarray:
    """Forward differences with periodic wrap.

    ``g[0][i, j] = u[i+1, j] - u[i, j]`` and ``g[1][i, j] = u[i, j+1] - u[i, j]``,
    indices taken modulo the image size.
    """
    u = np.asarray(u, dtype=np.float64)
    return np.stack((np.roll(u, -1, axis=0) - u, np.roll(u, -1, axis=1) - u))


def div(p: np.ndarray) -> np.ndarray:
    """Discrete divergence, the negative adjoint of :func:`grad`."""
    p = np.asarray(p, dtype=np.float64)
    return (p[0] - np.roll(p[0], 1, axis=0)) + (p[1] - np.roll(p[1], 1, axis=1))


def laplacian(u: np.ndarray) -> np.ndarray:
    """Five-point periodic Laplacian, ``div(grad(u))``."""
    u = np.asarray(u, dtype=np.float64)
    return (
        np.roll(u, 1, axis=0) + np.roll(u, -1, axis=0)
        + np.roll(u, 1, axis=1) + np.roll(u, -1, axis=1)
        - 4.0 * u
    )


def _check_fits(kern: Kernel, h: int, w: int) -> None:
    if kern.size > min(h, w):
        raise ValueError(f"kernel of size {kern.size} is larger than the {h}x{w} image")


def kernel_spectrum(kern: Kernel, h: int, w: int) -> np.ndarray:
    """Transfer function of ``kern`` on an ``h x w`` periodic grid.

    The taps are zero-padded and circularly shifted so the kernel centre sits
    at index ``(0, 0)``; the result therefore carries no phase shift.
    ``np.conj`` of the returned array is the transfer function of the adjoint.
    """
    _check_fits(kern, h, w)
    half = kern.size // 2
    padded = np.zeros((h, w))
    padded[: kern.size, : kern.size] = kern.taps
    padded = np.roll(padded, (-half, -half), axis=(0, 1))
    return np.fft.fft2(padded)


def diff_spectra(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Transfer functions of the two periodic forward differences.

    ``fft2(grad(u)[0]) == dx * fft2(u)`` and likewise for ``dy``.
    """
    if h < 1 or w < 1:
        raise ValueError(f"invalid grid size {h}x{w}")
    wy = np.exp(2j * np.pi * np.fft.fftfreq(h)) - 1.0
    wx = np.exp(2j * np.pi * np.fft.fftfreq(w)) - 1.0
    dx = np.broadcast_to(wy[:, None], (h, w)).copy()
    dy = np.broadcast_to(wx[None, :], (h, w)).copy()
    return dx, dy


def convolve_spectrum(u: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    """Apply a precomputed transfer function to a real plane."""
    return np.real(np.fft.ifft2(np.fft.fft2(u) * spectrum))


def convolve_periodic(img: np.ndarray, kern: Kernel) -> np.ndarray:
    """Circular convolution of a 2-D plane or each channel of a 3-D image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return np.stack(
            [convolve_periodic(img[:, :, c], kern) for c in range(img.shape[2])], axis=2
        )
    h, w = img.shape
    if kern.size == 1:
        # a 1x1 kernel with unit sum is the identity; skip the FFT round-off
        _check_fits(kern, h, w)
        return img.copy()
    return convolve_spectrum(img, kernel_spectrum(kern, h, w))
