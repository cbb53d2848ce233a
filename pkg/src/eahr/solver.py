"""Semi-proximal ADMM for the edge adaptive hybrid (weighted TV + Tikhonov) model.

The model is

    min_u  sum a1 |grad u| + 1/2 sum a2 |grad u|^2 + mu/2 ||A*u - f||^2

with per-pixel weight maps ``a1``, ``a2`` derived from an edge map of the
current iterate.  Splitting ``k = grad u`` gives the iteration

    u <- argmin L(u, k, lam) + rho1/2 ||u - u_prev||^2      (FFT solve)
    k <- argmin L(u, k, lam) + rho2/2 ||k - k_prev||^2      (pixelwise shrink)
    lam <- lam + eta * beta * (k - grad u)

where ``L`` is the augmented Lagrangian with the inner product
``<lam, k - grad u>`` and penalty ``beta/2 ||k - grad u||^2``.

The closed-form k-step treats the Tikhonov term of pixel ``(i, j)`` as
``a2 |k|^2`` (twice the model's ``1/2 a2 |k|^2``); the limit of the
iteration therefore minimises the model with ``2 * a2``.  The objective
recorded in the history uses that effective weight so it tracks what the
iteration actually minimises.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .edges import WeightConfig, binarize_weights, edge_matrix
from .degrade import gaussian_kernel
from .image import Kernel, as_image, merge_channels, split_channels
from .operators import convolve_periodic, convolve_spectrum, diff_spectra, div, grad, kernel_spectrum
from .schedule import Polynomials, param_schedule

__all__ = [
    "ETA_MAX",
    "DEFAULT_WEIGHTS",
    "auto_config",
    "gaussian_prefilter",
    "SolverConfig",
    "SolverState",
    "IterationRecord",
    "Problem",
    "SolveResult",
    "SolverDivergence",
    "objective",
    "u_update",
    "shrink2",
    "k_update",
    "lambda_update",
    "terminated",
    "solve",
    "solve_channel",
    "convergence_report",
    "ConvergenceReport",
    "write_history_csv",
]

log = logging.getLogger(__name__)

ETA_MAX = (1.0 + math.sqrt(5.0)) / 2.0

# Restoration defaults: the full weight goes to flat regions (E >= tau) and
# theta * alpha to edges, with alpha1 = 2 on the [0, 1] working scale.
DEFAULT_WEIGHTS = WeightConfig(alpha1=2.0, alpha2=1.0, theta1=0.5, theta2=0.5, swap_branches=True)

Prefilter = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


class SolverDivergence(FloatingPointError):
    """Raised when an iterate becomes non-finite."""


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one run.

    ``data_range`` is the intensity of white: the observation is divided by
    it before iterating and the result multiplied back, so ``mu``, ``beta``,
    the weights and the edge threshold act on a [0, 1] image.  Use
    ``data_range=1`` to iterate on the raw values.
    """

    mu: float
    beta: float
    eta: float = 1.0
    rho1: float = 0.1
    rho2: float = 0.1
    tol: float = 5e-5
    max_iter: int = 500
    weights: WeightConfig = DEFAULT_WEIGHTS
    refresh_weights: bool = True
    refresh_every: int = 1
    refresh_until: int | None = None
    data_range: float = 255.0
    min_iter: int = 1

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not 0 < self.eta < ETA_MAX:
            raise ValueError(f"eta must lie in (0, (1+sqrt 5)/2) = (0, {ETA_MAX:.6f}), got {self.eta!r}")
        if not self.rho1 > 0 or not self.rho2 > 0:
            raise ValueError(f"rho1 and rho2 must be > 0, got {self.rho1!r}, {self.rho2!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if int(self.refresh_every) != self.refresh_every or self.refresh_every < 1:
            raise ValueError(f"refresh_every must be a positive integer, got {self.refresh_every!r}")
        if not self.data_range > 0:
            raise ValueError(f"data_range must be > 0, got {self.data_range!r}")
        if not isinstance(self.weights, WeightConfig):
            raise TypeError("weights must be a WeightConfig")

    def with_updates(self, **kwargs) -> "SolverConfig":
        """Copy with top-level or ``weights.*`` fields replaced."""
        wkeys = {k: kwargs.pop(k) for k in list(kwargs) if k in WeightConfig.__dataclass_fields__}
        weights = replace(self.weights, **wkeys) if wkeys else self.weights
        return replace(self, weights=weights, **kwargs)


def auto_config(
    kernel_kind: str,
    sigma: float,
    table: dict[str, Polynomials] | None = None,
    **overrides,
) -> SolverConfig:
    """Default configuration with ``mu``, ``beta`` and ``tau`` from the noise schedule.

    ``overrides`` may name any ``SolverConfig`` or ``WeightConfig`` field.
    """
    sch = param_schedule(kernel_kind, sigma, table)
    cfg = SolverConfig(mu=sch.mu, beta=sch.beta, weights=replace(DEFAULT_WEIGHTS, tau=sch.tau))
    return cfg.with_updates(**overrides) if overrides else cfg


def gaussian_prefilter(size: int, spread: float) -> Callable[[np.ndarray], np.ndarray]:
    """Periodic Gaussian smoothing of the observation, a cheap stand-in for a denoiser."""
    g = gaussian_kernel(size, spread)

    def apply(f: np.ndarray) -> np.ndarray:
        return convolve_periodic(f, g)

    return apply


@dataclass
class IterationRecord:
    iter: int
    primal_residual: float
    rel_u_change: float
    objective: float
    weights_flipped: int
    rel_primal_residual: float = float("nan")


@dataclass
class SolverState:
    u: np.ndarray
    k: np.ndarray
    lam: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    iter: int = 0
    history: list[IterationRecord] = field(default_factory=list)


class Problem:
    """Observation and the spectra reused by every iteration.

    ``f`` is the (possibly prefiltered, rescaled) single-channel observation.
    """

    def __init__(self, f: np.ndarray, kern: Kernel):
        f = as_image(f)
        if f.ndim != 2:
            raise ValueError(f"Problem expects a single-channel image, got shape {f.shape}")
        h, w = f.shape
        self.f = f
        self.kernel = kern
        self.a_hat = kernel_spectrum(kern, h, w)
        self.a_abs2 = np.abs(self.a_hat) ** 2
        dx, dy = diff_spectra(h, w)
        self.d_abs2 = np.abs(dx) ** 2 + np.abs(dy) ** 2
        self.at_f_hat = np.conj(self.a_hat) * np.fft.fft2(f)
        self.f_norm = float(np.linalg.norm(f))
        self.grad_f_norm = float(np.linalg.norm(grad(f)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.f.shape

    def blur(self, u: np.ndarray) -> np.ndarray:
        return convolve_spectrum(u, self.a_hat)

    def blur_adjoint(self, r: np.ndarray) -> np.ndarray:
        return convolve_spectrum(r, np.conj(self.a_hat))


def objective(u, f, kern: Kernel, mu: float, alpha1, alpha2, *, problem: Problem | None = None) -> float:
    """``sum a1 |grad u| + 1/2 sum a2 |grad u|^2 + mu/2 ||A*u - f||^2``.

    ``alpha1`` and ``alpha2`` may be scalars or per-pixel maps; ``|.|`` is the
    isotropic magnitude of the two-component gradient.
    """
    u = np.asarray(u, dtype=np.float64)
    g = grad(u)
    mag2 = g[0] ** 2 + g[1] ** 2
    if problem is None:
        residual = convolve_spectrum(u, kernel_spectrum(kern, *u.shape)) - f
    else:
        residual = problem.blur(u) - f
    return float(
        np.sum(alpha1 * np.sqrt(mag2))
        + 0.5 * np.sum(alpha2 * mag2)
        + 0.5 * mu * np.sum(residual**2)
    )


def u_update(state: SolverState, problem: Problem, cfg: SolverConfig) -> np.ndarray:
    """Exact minimiser of the u-subproblem by one FFT solve.

    Solves ``(mu A^T A + beta grad^T grad + rho1 I) u = mu A^T f
    + grad^T (lam + beta k) + rho1 u_prev``; ``grad^T = -div``.
    """
    rhs = (
        cfg.mu * problem.at_f_hat
        + np.fft.fft2(-div(state.lam + cfg.beta * state.k))
        + cfg.rho1 * np.fft.fft2(state.u)
    )
    denom = cfg.mu * problem.a_abs2 + cfg.beta * problem.d_abs2 + cfg.rho1
    return np.real(np.fft.ifft2(rhs / denom))


def shrink2(t, alpha, beta):
    """Minimiser of ``alpha |z| + beta/2 |z - t|^2`` over 2-vectors ``z``.

    ``t`` has its two components on the leading axis, so a single vector
    has shape ``(2,)`` and a field ``(2, H, W)``.  ``alpha`` may broadcast
    against the trailing axes.  Zero ``t`` maps to zero.
    """
    t = np.asarray(t, dtype=np.float64)
    norm = np.sqrt(t[0] ** 2 + t[1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norm > 0, 1.0 - np.asarray(alpha) / (beta * norm), 0.0)
    return np.maximum(factor, 0.0) * t


def k_update(
    state: SolverState,
    cfg: SolverConfig,
    alpha1: np.ndarray,
    alpha2: np.ndarray,
    grad_u: np.ndarray | None = None,
) -> np.ndarray:
    """Pixelwise closed-form k-step.

    With ``c = beta + 2 a2 + rho2`` and ``t = (beta grad u - lam + rho2 k_prev) / c``
    the new ``k`` is ``(1 - a1 / (c |t|))_+ t``.
    """
    if grad_u is None:
        grad_u = grad(state.u)
    c = cfg.beta + 2.0 * alpha2 + cfg.rho2
    t = (cfg.beta / c) * (grad_u - state.lam / cfg.beta + cfg.rho2 * state.k / cfg.beta)
    return shrink2(t, alpha1, c)


def lambda_update(state: SolverState, cfg: SolverConfig, grad_u: np.ndarray | None = None) -> np.ndarray:
    if grad_u is None:
        grad_u = grad(state.u)
    return state.lam + cfg.eta * cfg.beta * (state.k - grad_u)


def _ratio(num: float, den: float) -> float:
    # flat observation: fall back to the absolute norm
    return num / den if den > 0 else num


def terminated(state: SolverState, problem: Problem, cfg: SolverConfig) -> bool:
    """Stop when ``min(||u^n - u^{n-1}|| / ||f||, ||k^n - grad u^n|| / ||grad f||) <= tol``
    or the iteration budget is spent.
    """
    if state.iter < 1 or not state.history:
        raise ValueError("terminated() needs at least one completed iteration")
    if state.iter >= cfg.max_iter:
        return True
    if state.iter < cfg.min_iter:
        return False
    rec = state.history[-1]
    return min(rec.rel_u_change, rec.rel_primal_residual) <= cfg.tol


def _weight_maps(u: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    wc = cfg.weights
    return binarize_weights(edge_matrix(u, wc.g_size, wc.g_spread), wc)


def _check_finite(arr: np.ndarray, iteration: int, step: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise SolverDivergence(f"non-finite values at iteration {iteration} in the {step} step")


def _apply_prefilter(f: np.ndarray, prefilter: Prefilter) -> np.ndarray:
    if prefilter is None:
        return f
    if callable(prefilter):
        out = as_image(prefilter(f))
    else:
        out = as_image(prefilter)
    if out.shape != f.shape:
        raise ValueError(f"prefiltered image has shape {out.shape}, expected {f.shape}")
    return out


def solve_channel(
    f: np.ndarray,
    kern: Kernel,
    cfg: SolverConfig,
    *,
    weight_maps: tuple[np.ndarray, np.ndarray] | None = None,
    prefilter: Prefilter = None,
    callback: Callable[[SolverState], None] | None = None,
) -> SolverState:
    """Run the iteration on one channel and return the final state.

    ``weight_maps`` fixes ``(alpha1, alpha2)`` for the whole run (given on the
    same scale as ``cfg.weights``) and disables edge detection.  The returned
    state is on the original intensity scale; ``k`` and ``lam`` are scaled
    accordingly.
    """
    f = as_image(f)
    if f.ndim != 2:
        raise ValueError(f"solve_channel expects a 2-D image, got shape {f.shape}")
    scale = cfg.data_range
    f_work = _apply_prefilter(f, prefilter) / scale
    problem = Problem(f_work, kern)

    shape = f_work.shape
    if weight_maps is not None:
        a1 = np.broadcast_to(np.asarray(weight_maps[0], dtype=np.float64), shape).copy()
        a2 = np.broadcast_to(np.asarray(weight_maps[1], dtype=np.float64), shape).copy()
        refresh = False
    else:
        # u^0 = 0 would give E == 1 everywhere, so the first map comes from f
        a1, a2 = _weight_maps(f_work, cfg)
        refresh = cfg.refresh_weights

    state = SolverState(
        u=np.zeros(shape),
        k=np.zeros((2,) + shape),
        lam=np.zeros((2,) + shape),
        alpha1=a1,
        alpha2=a2,
    )

    while True:
        n = state.iter + 1
        flipped = 0
        if (
            refresh
            and n > 1
            and (n - 1) % cfg.refresh_every == 0
            and (cfg.refresh_until is None or n <= cfg.refresh_until)
        ):
            new_a1, new_a2 = _weight_maps(state.u, cfg)
            flipped = int(np.count_nonzero((new_a1 != state.alpha1) | (new_a2 != state.alpha2)))
            state.alpha1, state.alpha2 = new_a1, new_a2

        u_prev = state.u
        state.u = u_update(state, problem, cfg)
        _check_finite(state.u, n, "u")
        grad_u = grad(state.u)
        state.k = k_update(state, cfg, state.alpha1, state.alpha2, grad_u)
        _check_finite(state.k, n, "k")
        state.lam = lambda_update(state, cfg, grad_u)
        _check_finite(state.lam, n, "multiplier")
        state.iter = n

        primal = float(np.linalg.norm(state.k - grad_u))
        change = float(np.linalg.norm(state.u - u_prev))
        obj = objective(state.u, problem.f, kern, cfg.mu, state.alpha1, 2.0 * state.alpha2, problem=problem)
        state.history.append(
            IterationRecord(
                iter=n,
                primal_residual=primal * scale,
                rel_u_change=_ratio(change, problem.f_norm),
                objective=obj,
                weights_flipped=flipped,
                rel_primal_residual=_ratio(primal, problem.grad_f_norm),
            )
        )
        if callback is not None:
            callback(state)
        if terminated(state, problem, cfg):
            break

    log.debug("stopped after %d iterations", state.iter)
    state.u = state.u * scale
    state.k = state.k * scale
    # lam balances mu A^T(Au - f), which is linear in the intensity scale
    state.lam = state.lam * scale
    return state


@dataclass
class SolveResult:
    """Restored image plus the final state of each channel."""

    u: np.ndarray
    channels: list[SolverState]

    @property
    def history(self) -> list[IterationRecord]:
        """History of the first channel (the only one for grayscale input)."""
        return self.channels[0].history

    @property
    def iterations(self) -> list[int]:
        return [s.iter for s in self.channels]


def solve(
    f,
    kern: Kernel,
    cfg: SolverConfig,
    *,
    weight_maps: tuple[np.ndarray, np.ndarray] | None = None,
    prefilter: Prefilter = None,
) -> SolveResult:
    """Restore ``f`` (grayscale or color, channel by channel)."""
    f = as_image(f)
    planes = split_channels(f)
    pre = prefilter
    states = []
    for c, plane in enumerate(planes):
        if isinstance(prefilter, np.ndarray) and prefilter.ndim == 3:
            pre = prefilter[:, :, c]
        states.append(solve_channel(plane, kern, cfg, weight_maps=weight_maps, prefilter=pre))
    u = merge_channels([s.u for s in states])
    if f.ndim == 3 and u.ndim == 2:
        u = u[:, :, None]
    return SolveResult(u=u, channels=states)


@dataclass
class ConvergenceReport:
    iterations: int
    converged: bool
    records: list[IterationRecord]
    stationarity: float  # ||mu A^T(Au - f) - grad^T lam||
    inclusion: float  # distance of -lam from the subdifferential of the k-term at k
    feasibility: float  # ||grad u - k||
    grad_f_norm: float

    def summary(self) -> str:
        return (
            f"iterations={self.iterations} converged={self.converged} "
            f"r_stationarity={self.stationarity:.3e} r_inclusion={self.inclusion:.3e} "
            f"r_feasibility={self.feasibility:.3e}"
        )


def convergence_report(state: SolverState, f, kern: Kernel, cfg: SolverConfig, *, prefilter: Prefilter = None) -> ConvergenceReport:
    """Final KKT residuals of a finished single-channel run.

    Residuals are evaluated on the working ([0, 1]) scale used by the
    iteration, with the weight maps the run ended with.  With the
    multiplier convention above a KKT point satisfies
    ``mu A^T(Au - f) = grad^T lam``, ``-lam in dG(k)`` and ``k = grad u``.
    """
    scale = cfg.data_range
    problem = Problem(_apply_prefilter(as_image(f), prefilter) / scale, kern)
    u = state.u / scale
    k = state.k / scale
    lam = state.lam / scale
    r1 = float(np.linalg.norm(cfg.mu * problem.blur_adjoint(problem.blur(u) - problem.f) + div(lam)))
    r3 = float(np.linalg.norm(grad(u) - k))

    a1, a2 = state.alpha1, state.alpha2
    kmag = np.sqrt(k[0] ** 2 + k[1] ** 2)
    lmag = np.sqrt(lam[0] ** 2 + lam[1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(kmag > 0, k / kmag, 0.0)
    sub = a1 * unit + 2.0 * a2 * k
    gap = -lam - sub
    dist = np.where(kmag > 0, np.sqrt(gap[0] ** 2 + gap[1] ** 2), np.maximum(lmag - a1, 0.0))
    r2 = float(np.linalg.norm(dist))

    hist = state.history
    converged = bool(hist) and min(hist[-1].rel_u_change, hist[-1].rel_primal_residual) <= cfg.tol
    return ConvergenceReport(
        iterations=state.iter,
        converged=converged,
        records=list(hist),
        stationarity=r1,
        inclusion=r2,
        feasibility=r3,
        grad_f_norm=problem.grad_f_norm,
    )


HISTORY_COLUMNS = ("iter", "primal_residual", "rel_u_change", "objective", "weights_flipped")


def write_history_csv(path, histories: Sequence[Sequence[IterationRecord]]) -> None:
    """Write one row per iteration; a ``channel`` column is prepended for color runs."""
    multi = len(histories) > 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow((("channel",) if multi else ()) + HISTORY_COLUMNS)
        for c, hist in enumerate(histories):
            for rec in hist:
                row = (
                    rec.iter,
                    repr(rec.primal_residual),
                    repr(rec.rel_u_change),
                    repr(rec.objective),
                    rec.weights_flipped,
                )
                writer.writerow(((c,) if multi else ()) + row)
