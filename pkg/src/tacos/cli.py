"""Command-line interface: ``tacos {generate,observe,solve,grid,bench}``.

Every flag can also be set through an environment variable named
``TACOS_<FLAG>`` (upper case, dashes as underscores), e.g. ``TACOS_SEED=7``.
Explicit flags win over the environment.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    ExperimentPlan,
    aggregate,
    grid_table,
    init_seed,
    records_frame,
    run_campaign,
    runtime_table,
    substream,
    write_csv,
)
from .forward import draw_mixing, read_bundle, sample_noise, whitened_observations, whitening_channels, write_bundle
from .signal import generate_signal, r_snr, read_signal_csv, write_signal_csv, write_track_csv
from .solver import SolverConfig, solve, write_trace_csv

logger = logging.getLogger("tacos")
ENV_PREFIX = "TACOS_"


class UsageError(Exception):
    pass


def _env(flag, cast=str, default=None):
    raw = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {ENV_PREFIX}{flag.upper()}: {raw!r}") from exc


def _write_manifest(out_dir: Path, command: str, params: dict, **extra):
    manifest = {"command": command, "version": __version__,
                "python": platform.python_version(), "numpy": np.__version__,
                "parameters": params, **extra}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_generate(args):
    if args.n < 64:
        raise UsageError(f"--n must be at least 64, got {args.n}")
    band = tuple(args.band) if args.band else None
    x, track = generate_signal(args.n, band=band, smoothness=args.smoothness,
                               rng_seed=substream(args.seed, "signal"))
    out = _out_dir(args.out)
    write_signal_csv(out / "signal.csv", x)
    write_track_csv(out / "track.csv", track)
    _write_manifest(out, "generate", {"n": args.n, "seed": args.seed, "band": band,
                                      "smoothness": args.smoothness},
                    outputs=["signal.csv", "track.csv"])
    logger.info("wrote %s", out / "signal.csv")


def cmd_observe(args):
    if args.sigma is None or not args.sigma > 0:
        raise UsageError("--sigma must be positive")
    x = read_signal_csv(args.signal)
    n = x.shape[0]
    mixing = draw_mixing(args.channels, substream(args.seed, "channels"))
    noise, spec = sample_noise(args.sigma, n, args.channels, substream(args.seed, "noise"))
    channels, n_clamped = whitening_channels(spec, mixing)
    y = whitened_observations(channels, x, noise)
    out = _out_dir(args.out)
    write_bundle(out, y, spec, mixing, seed=args.seed,
                 extra={"truth": str(Path(args.signal).resolve()), "n_clamped": n_clamped})
    _write_manifest(out, "observe", {"signal": args.signal, "sigma": args.sigma,
                                     "seed": args.seed, "channels": args.channels},
                    n_clamped=n_clamped)


def _resolve_config(args) -> SolverConfig:
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        values = SolverConfig.from_json(path).to_dict()
    overrides = {"lambda1": args.lambda1, "lambda2": args.lambda2, "rho": args.rho,
                 "max_outer_iters": args.max_iters, "primal_tol": args.primal_tol,
                 "dual_tol": args.dual_tol}
    values.update({k: v for k, v in overrides.items() if v is not None})
    if args.seed is not None:
        values["seed"] = init_seed(args.seed)
    return SolverConfig.from_dict(values)


def cmd_solve(args):
    config = _resolve_config(args)
    y, channels, bundle = read_bundle(args.bundle)
    result = solve(y, channels, config)
    out = _out_dir(args.out)
    write_signal_csv(out / "restored.csv", result.signal)
    write_trace_csv(out / "trace.csv", result.diagnostics["trace"])
    diag = {k: v for k, v in result.diagnostics.items() if k != "trace"}
    truth = args.truth
    snr = None
    if truth:
        snr = r_snr(read_signal_csv(truth), result.signal)
    if not diag["converged"]:
        logger.warning("solver did not converge in %d iterations", diag["iterations"])
    _write_manifest(out, "solve", {"bundle": args.bundle, "config": config.to_dict(),
                                   "seed": args.seed, "truth": truth},
                    label=config.label, diagnostics=diag, r_snr_db=snr,
                    outputs=["restored.csv", "trace.csv"])
    if snr is not None:
        print(f"r-SNR: {snr:.3f} dB")


def _load_plan(args) -> ExperimentPlan:
    plan = ExperimentPlan()
    if args.plan:
        path = Path(args.plan)
        if not path.is_file():
            raise UsageError(f"plan file not found: {path}")
        plan = ExperimentPlan.from_json(path)
    if args.seed is not None:
        plan.base_seed = args.seed
    solver = dict(plan.solver)
    for key, flag in [("rho", "rho"), ("max_outer_iters", "max_iters"),
                      ("primal_tol", "primal_tol"), ("dual_tol", "dual_tol")]:
        value = getattr(args, flag, None)
        if value is not None:
            solver[key] = value
    plan.solver = solver
    return plan


def cmd_grid(args):
    plan = _load_plan(args)
    if args.n is None or args.sigma is None:
        raise UsageError("grid needs --n and --sigma")
    from dataclasses import replace

    sub = replace(plan, n_values=(args.n,), sigma_values=(args.sigma,), configs=(args.config,))
    records = run_campaign(sub, parallel=args.parallel)
    best, table = grid_table(records_frame(records))
    out = _out_dir(args.out)
    write_csv(out / "results.csv", records_frame(records))
    write_csv(out / "grid.csv", table)
    _write_manifest(out, "grid", {"plan": sub.to_dict(), "parallel": args.parallel},
                    best={"lambda1": best[0], "lambda2": best[1]},
                    outputs=["results.csv", "grid.csv"])
    print(f"best lambda1={best[0]:g} lambda2={best[1]:g}")


def cmd_bench(args):
    plan = _load_plan(args)

    def progress(i, total, rec):
        logger.info("[%d/%d] %s n=%d sigma=%g l1=%g l2=%g r-SNR=%.2f dB (%.1fs)", i, total,
                    rec.config, rec.n, rec.sigma, rec.lambda1, rec.lambda2, rec.r_snr_db,
                    rec.runtime_s)

    records = run_campaign(plan, parallel=args.parallel, progress=progress)
    frame = records_frame(records)
    out = _out_dir(args.out)
    write_csv(out / "results.csv", frame)
    write_csv(out / "summary.csv", aggregate(frame))
    write_csv(out / "runtime.csv", runtime_table(frame))
    failed = int(frame["r_snr_db"].isna().sum())
    _write_manifest(out, "bench", {"plan": plan.to_dict(), "parallel": args.parallel},
                    n_records=len(frame), n_failed=failed,
                    outputs=["results.csv", "summary.csv", "runtime.csv"])


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacos", description="Time and covariance smoothing restoration of bivariate signals.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=_env("seed", int))
        if out:
            p.add_argument("--out", required=_env("out") is None, default=_env("out"))

    def solver_flags(p):
        p.add_argument("--rho", type=float, default=_env("rho", float))
        p.add_argument("--max-iters", type=int, default=_env("max_iters", int))
        p.add_argument("--primal-tol", type=float, default=_env("primal_tol", float))
        p.add_argument("--dual-tol", type=float, default=_env("dual_tol", float))

    p = sub.add_parser("generate", help="synthesize a polarized bivariate signal")
    common(p)
    p.add_argument("--n", type=int, default=_env("n", int, 1024))
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--smoothness", type=float)
    p.set_defaults(func=cmd_generate, seed_default=0)

    p = sub.add_parser("observe", help="simulate whitened D-channel observations of a signal")
    common(p)
    p.add_argument("--signal", required=True)
    p.add_argument("--sigma", type=float, default=_env("sigma", float, 1.0))
    p.add_argument("--channels", type=int, default=3)
    p.set_defaults(func=cmd_observe, seed_default=0)

    p = sub.add_parser("solve", help="restore a signal from an observation bundle")
    common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--config")
    p.add_argument("--truth", help="ground-truth signal CSV for r-SNR")
    p.add_argument("--lambda1", type=float, default=_env("lambda1", float))
    p.add_argument("--lambda2", type=float, default=_env("lambda2", float))
    solver_flags(p)
    p.set_defaults(func=cmd_solve, seed_default=None)

    p = sub.add_parser("grid", help="grid search of (lambda1, lambda2) at one (n, sigma)")
    common(p)
    p.add_argument("--plan")
    p.add_argument("--n", type=int, default=_env("n", int))
    p.add_argument("--sigma", type=float, default=_env("sigma", float))
    p.add_argument("--config", default="TACOS", choices=["MLE", "TS", "COS", "TACOS"])
    p.add_argument("--parallel", type=int, default=_env("parallel", int, 1))
    solver_flags(p)
    p.set_defaults(func=cmd_grid, seed_default=None)

    p = sub.add_parser("bench", help="run an experiment campaign")
    common(p)
    p.add_argument("--plan")
    p.add_argument("--parallel", type=int, default=_env("parallel", int, 1))
    solver_flags(p)
    p.set_defaults(func=cmd_bench, seed_default=None)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except UsageError as exc:
        print(f"tacos: error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.seed is None and args.seed_default is not None:
        args.seed = args.seed_default
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"tacos: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
