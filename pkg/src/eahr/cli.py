"""Command line front end: ``degrade``, ``deblur``, ``eval`` and ``bench``.

Settings come from an optional flat ``key = value`` file (``--config``)
and are overridden by flags.  Every command that writes an image also
writes a sidecar ``<output>.cfg`` in the same format holding each
effective value, so a run can be repeated from its sidecar alone.

Exit status: 0 success, 1 runtime or per-case failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .degrade import DegradeSpec, KernelSpec, degrade, parse_kernel, shepp_logan
from .edges import WeightConfig
from .image import ImageIOError, load_image, save_image
from .metrics import format_psnr, quality
from .schedule import PRESETS, Schedule, param_schedule
from .solver import (
    DEFAULT_WEIGHTS,
    ETA_MAX,
    SolverConfig,
    SolverDivergence,
    gaussian_prefilter,
    solve,
    write_history_csv,
)

log = logging.getLogger("eahr")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Invalid arguments or configuration; reported with exit status 2."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


# key -> parser; the same table drives config files, flags and sidecars
DEGRADE_KEYS: dict[str, Callable[[str], object]] = {
    "kernel": str,
    "sigma": float,
    "seed": _parse_int,
}
SOLVER_KEYS: dict[str, Callable[[str], object]] = {
    "kernel": str,
    "sigma": float,
    "schedule": str,
    "mu": float,
    "tau": float,
    "beta": float,
    "eta": float,
    "rho1": float,
    "rho2": float,
    "tol": float,
    "max_iter": _parse_int,
    "alpha1": float,
    "alpha2": float,
    "theta1": float,
    "theta2": float,
    "g_size": _parse_int,
    "g_spread": float,
    "swap_branches": _parse_bool,
    "refresh_weights": _parse_bool,
    "refresh_every": _parse_int,
    "data_range": float,
    "prefilter": str,
    "history": str,
}
# written into sidecars for the record; ignored when a sidecar is read back
INFO_KEYS = ("input",)


def read_config(path, keys: dict[str, Callable]) -> dict[str, object]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in INFO_KEYS:
            continue
        if key not in keys:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = keys[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def write_sidecar(path, values: dict[str, object]) -> None:
    lines = [f"{k} = {_fmt(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _settings(args, keys) -> dict[str, object]:
    """Config-file values overridden by any flag given on the command line."""
    values = read_config(args.config, keys) if args.config else {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _kernel(values) -> KernelSpec:
    if "kernel" not in values:
        raise UsageError("a blur kernel is required (--kernel kind:size[:param])")
    try:
        return parse_kernel(str(values["kernel"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _schedule(values, kspec: KernelSpec) -> tuple[str, Schedule]:
    mode = str(values.get("schedule", "auto"))
    explicit = {k: values[k] for k in ("mu", "tau", "beta") if k in values}
    if mode == "auto":
        if "sigma" not in values:
            raise UsageError("--schedule auto needs the noise level --sigma")
        try:
            sch = param_schedule(kspec.kind, float(values["sigma"]))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        # values echoed by a sidecar are accepted as long as they agree
        clash = [k for k, v in explicit.items() if float(v) != getattr(sch, k)]
        if clash:
            raise UsageError(f"--schedule auto derives mu, tau and beta; drop {', '.join(clash)} or use explicit")
        return mode, sch
    if mode == "explicit":
        missing = [k for k in ("mu", "tau", "beta") if k not in explicit]
        if missing:
            raise UsageError(f"--schedule explicit needs {', '.join('--' + m for m in missing)}")
        return mode, Schedule(float(explicit["mu"]), float(explicit["tau"]), float(explicit["beta"]))
    if mode in PRESETS:
        return mode, PRESETS[mode]
    raise UsageError(f"unknown schedule {mode!r}; expected auto, explicit or one of {sorted(PRESETS)}")


def solver_config(values) -> tuple[SolverConfig, dict[str, object]]:
    """Build the solver config and the full table of effective settings."""
    kspec = _kernel(values)
    mode, sch = _schedule(values, kspec)
    wfields = {k: values[k] for k in WeightConfig.__dataclass_fields__ if k in values}
    sfields = {
        k: values[k]
        for k in ("eta", "rho1", "rho2", "tol", "max_iter", "refresh_weights", "refresh_every", "data_range")
        if k in values
    }
    try:
        weights = WeightConfig(**{**DEFAULT_WEIGHTS.__dict__, **wfields, "tau": sch.tau})
        cfg = SolverConfig(mu=sch.mu, beta=sch.beta, weights=weights, **sfields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    effective: dict[str, object] = {"kernel": str(kspec), "schedule": mode}
    if "sigma" in values:
        effective["sigma"] = float(values["sigma"])
    effective.update(mu=cfg.mu, tau=weights.tau, beta=cfg.beta)
    effective.update({k: getattr(cfg, k) for k in ("eta", "rho1", "rho2", "tol", "max_iter")})
    effective.update({k: getattr(weights, k) for k in ("alpha1", "alpha2", "theta1", "theta2", "g_size", "g_spread", "swap_branches")})
    effective.update({k: getattr(cfg, k) for k in ("refresh_weights", "refresh_every", "data_range")})
    effective["prefilter"] = str(values.get("prefilter", "none"))
    return cfg, effective


def _prefilter(text: str, shape):
    """``none``, ``gaussian:SIZE:SPREAD`` or ``file:PATH`` (a pre-denoised image)."""
    if text in ("", "none"):
        return None
    kind, _, rest = text.partition(":")
    if kind == "gaussian":
        try:
            size, spread = rest.split(":")
            return gaussian_prefilter(_parse_int(size), float(spread))
        except ValueError as exc:
            raise UsageError(f"invalid prefilter {text!r}: {exc}") from None
    if kind == "file":
        try:
            img = load_image(rest)
        except ImageIOError as exc:
            raise UsageError(f"prefilter: {exc}") from None
        if img.shape != tuple(shape):
            raise UsageError(f"prefilter image {rest} has shape {img.shape}, expected {tuple(shape)}")
        return img
    raise UsageError(f"invalid prefilter {text!r}; expected none, gaussian:SIZE:SPREAD or file:PATH")


def _load_input(path) -> np.ndarray:
    if str(path).startswith("phantom"):
        _, _, size = str(path).partition(":")
        try:
            return shepp_logan(_parse_int(size) if size else 256)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not Path(path).exists():
        raise UsageError(f"unreadable file: {path} (no such file)")
    return load_image(path)


def _sidecar_path(out) -> Path:
    return Path(str(out) + ".cfg")


def cmd_degrade(args) -> int:
    values = _settings(args, DEGRADE_KEYS)
    kspec = _kernel(values)
    try:
        spec = DegradeSpec(kspec, float(values.get("sigma", 0.0)), int(values.get("seed", 0)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    img = _load_input(args.input)
    out = degrade(img, spec)
    save_image(out, args.output)
    write_sidecar(
        _sidecar_path(args.output),
        {"input": args.input, "kernel": str(kspec), "sigma": spec.noise_sigma, "seed": spec.seed},
    )
    print(f"wrote {args.output} (kernel={kspec} sigma={spec.noise_sigma:g} seed={spec.seed})")
    return EXIT_OK


def cmd_deblur(args) -> int:
    values = _settings(args, SOLVER_KEYS)
    cfg, effective = solver_config(values)
    kern = KernelSpec.build(_kernel(values))
    f = _load_input(args.input)
    pre = _prefilter(effective["prefilter"], f.shape)
    print(f"mu={cfg.mu:.10g} tau={cfg.weights.tau:.10g} beta={cfg.beta:.10g}")
    result = solve(f, kern, cfg, prefilter=pre)
    save_image(result.u, args.output)
    history = values.get("history") or str(args.output) + ".history.csv"
    write_history_csv(history, [s.history for s in result.channels])
    write_sidecar(_sidecar_path(args.output), {"input": args.input, **effective, "history": history})
    for c, state in enumerate(result.channels):
        last = state.history[-1]
        tag = f"channel {c}: " if len(result.channels) > 1 else ""
        print(f"{tag}iterations={state.iter} primal_residual={last.primal_residual:.6e}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ref = _load_input(args.reference)
    test = _load_input(args.test)
    if ref.shape != test.shape:
        raise UsageError(f"dimension mismatch: {args.reference} is {ref.shape}, {args.test} is {test.shape}")
    rep = quality(ref, test)
    print(f"psnr={format_psnr(rep.psnr)} ssim={rep.ssim:.6f} mse={rep.mse:.6f}")
    for c, ch in enumerate(rep.channels):
        print(f"  channel {c}: psnr={format_psnr(ch.psnr)} ssim={ch.ssim:.6f} mse={ch.mse:.6f}")
    if args.csv:
        path = Path(args.csv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(("reference", "test", "psnr", "ssim", "mse"))
            w.writerow((args.reference, args.test, format_psnr(rep.psnr), repr(rep.ssim), repr(rep.mse)))
    return EXIT_OK


@dataclass
class BenchCase:
    image: str
    kernel: KernelSpec
    sigma: float
    seed: int


def read_manifest(path) -> list[BenchCase]:
    """One case per line: ``IMAGE KERNEL SIGMA [SEED]``; IMAGE may be ``phantom[:N]``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc.strerror or exc}") from None
    cases = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        fields = raw.split("#", 1)[0].split()
        if not fields:
            continue
        if len(fields) not in (3, 4):
            raise UsageError(f"{path}:{lineno}: expected IMAGE KERNEL SIGMA [SEED]")
        try:
            seed = _parse_int(fields[3]) if len(fields) == 4 else 0
            cases.append(BenchCase(fields[0], parse_kernel(fields[1]), float(fields[2]), seed))
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    if not cases:
        raise UsageError(f"manifest {path} lists no cases")
    return cases


BENCH_COLUMNS = (
    "case", "image", "kernel", "sigma", "seed",
    "degraded_psnr", "degraded_ssim", "restored_psnr", "restored_ssim",
    "iterations", "status",
)


def _run_case(case: BenchCase, base: dict[str, object]) -> dict[str, object]:
    img = _load_input(case.image)
    f = degrade(img, DegradeSpec(case.kernel, case.sigma, case.seed))
    values = {**base, "kernel": str(case.kernel)}
    if values.get("schedule", "auto") == "auto":
        values["sigma"] = case.sigma
    cfg, effective = solver_config(values)
    result = solve(f, case.kernel.build(), cfg, prefilter=_prefilter(effective["prefilter"], f.shape))
    deg = quality(img, f)
    res = quality(img, result.u)
    return {
        "degraded_psnr": deg.psnr,
        "degraded_ssim": deg.ssim,
        "restored_psnr": res.psnr,
        "restored_ssim": res.ssim,
        "iterations": max(result.iterations),
    }


def cmd_bench(args) -> int:
    base = read_config(args.config, SOLVER_KEYS) if args.config else {}
    cases = read_manifest(args.manifest)
    rows, failed = [], 0
    for i, case in enumerate(cases, 1):
        row = {"case": i, "image": case.image, "kernel": str(case.kernel), "sigma": case.sigma, "seed": case.seed}
        try:
            row.update(_run_case(case, base), status="ok")
        except (UsageError, ValueError, OSError, SolverDivergence) as exc:
            failed += 1
            row["status"] = f"failed: {exc}"
            log.error("case %d failed: %s", i, exc)
        rows.append(row)
        print(f"case {i}: {row['status']}")

    ok = [r for r in rows if r["status"] == "ok"]
    avg = {"case": "average", "status": f"{len(ok)}/{len(rows)} ok"}
    for col in ("degraded_psnr", "degraded_ssim", "restored_psnr", "restored_ssim", "iterations"):
        if ok:
            avg[col] = float(np.mean([r[col] for r in ok]))

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for row in rows + [avg]:
            w.writerow([_cell(row.get(c, "")) for c in BENCH_COLUMNS])
    print(f"wrote {args.output}")
    return EXIT_FAIL if failed else EXIT_OK


def _cell(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def _eta(text: str) -> float:
    v = float(text)
    if not 0 < v < ETA_MAX:
        raise argparse.ArgumentTypeError(f"eta must lie in (0, {ETA_MAX:.6f}), got {text}")
    return v


def _flag_type(parser_fn):
    def conv(text):
        try:
            return parser_fn(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eahr", description="Edge adaptive hybrid regularization deblurring.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("degrade", help="blur an image and add Gaussian noise")
    d.add_argument("input", help="image file or phantom[:N]")
    d.add_argument("output")
    d.add_argument("--config")
    d.add_argument("--kernel", help="gaussian:SIZE:SPREAD, motion:LENGTH:ANGLE or average:SIZE")
    d.add_argument("--sigma", type=_flag_type(float), help="noise standard deviation (0-255 scale)")
    d.add_argument("--seed", type=_flag_type(_parse_int))
    d.set_defaults(func=cmd_degrade)

    r = sub.add_parser("deblur", help="restore a blurred noisy image")
    r.add_argument("input", help="degraded image file or phantom[:N]")
    r.add_argument("output")
    r.add_argument("--config")
    for key, fn in SOLVER_KEYS.items():
        flag = "--" + key.replace("_", "-")
        r.add_argument(flag, dest=key, type=_eta if key == "eta" else _flag_type(fn))
    r.set_defaults(func=cmd_deblur)

    e = sub.add_parser("eval", help="PSNR/SSIM of a test image against a reference")
    e.add_argument("reference")
    e.add_argument("test")
    e.add_argument("--csv", help="append the result to this CSV")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="degrade, restore and score every case of a manifest")
    b.add_argument("manifest")
    b.add_argument("output", help="CSV report")
    b.add_argument("--config", help="solver settings shared by all cases")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageIOError, OSError, ValueError, SolverDivergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
