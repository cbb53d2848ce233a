"""Noise-level dependent choice of the fidelity weight, edge threshold and penalty.

Polynomials are only known for Gaussian blur.  Motion and average blur fall
back to the same polynomials unless an override table is supplied, so
results for those kernels use stand-in parameters.
"""

from __future__ import annotations

from typing import Mapping, NamedTuple

__all__ = ["Schedule", "Polynomials", "param_schedule", "GAUSSIAN", "PRESETS"]


class Schedule(NamedTuple):
    mu: float
    tau: float
    beta: float


class Polynomials(NamedTuple):
    """Coefficients, highest power first, for ``mu(sigma)``, ``tau(sigma)``, ``beta(sigma)``."""

    mu: tuple[float, ...]
    tau: tuple[float, ...]
    beta: tuple[float, ...]


def _horner(coeffs, x: float) -> float:
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


GAUSSIAN = Polynomials(
    mu=(1.8e2, -2.7e3, 1.1e4),
    tau=(3.4e-3, 0.9),
    beta=(-3.7e-4, 1.2e-1),
)

# Rounded triple often used for sigma = 3.  The polynomials give
# (4520, 0.9102, 0.11889) there instead; this is kept as an alternate preset.
PRESETS: dict[str, Schedule] = {
    "gaussian-sigma3-rounded": Schedule(5000.0, 0.9, 0.1),
}

DEFAULT_TABLE: dict[str, Polynomials] = {
    "gaussian": GAUSSIAN,
    "motion": GAUSSIAN,
    "average": GAUSSIAN,
}


def param_schedule(
    kernel_kind: str,
    sigma: float,
    table: Mapping[str, Polynomials] | None = None,
) -> Schedule:
    """Evaluate ``(mu, tau, beta)`` for a blur kind at noise level ``sigma``.

    ``sigma`` is the noise standard deviation on the 0-255 scale and must lie
    in ``(0, 100]``.
    """
    if not 0 < sigma <= 100:
        raise ValueError(f"sigma must lie in (0, 100], got {sigma!r}")
    table = DEFAULT_TABLE if table is None else {**DEFAULT_TABLE, **table}
    try:
        poly = table[kernel_kind]
    except KeyError:
        raise ValueError(f"no schedule for kernel kind {kernel_kind!r}") from None
    return Schedule(
        mu=_horner(poly.mu, sigma),
        tau=_horner(poly.tau, sigma),
        beta=_horner(poly.beta, sigma),
    )
