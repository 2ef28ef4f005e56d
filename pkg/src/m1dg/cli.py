"""Command-line entry points: scenario runs, the projection study, references.

Configuration is flat INI-style text with sections mirroring the flag
groups; every key is also a flag, and flags override the file. Exit codes:
0 success, 1 configuration error, 2 runtime blow-up.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from . import diagnostics as diag
from . import scenarios as sce
from .dg import BlowUpError
from .limiters import LimiterConfig

__all__ = ["main", "build_parser"]

OUTPUT_ROOT_ENV = "M1DG_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m1dg",
        description="Realizability-preserving DG solver for the 2D M1 moment model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark scenario")
    run.add_argument("--config", help="INI config file; flags override it")
    run.add_argument("--scenario", help=f"one of: {', '.join(sce.builtin_names())}")
    run.add_argument("--mesh", choices=["rect", "tri", "tri-two-way"], default=None)
    run.add_argument("--k", type=int, default=None, help="polynomial degree (0..2)")
    run.add_argument("--limiter", default=None,
                     help="combination label, e.g. SL0, CL22, SRL2, CRL0.2, SLinf")
    run.add_argument("--h", type=float, default=None, help="mesh size override")
    run.add_argument("--T", type=float, default=None, help="final time override")
    run.add_argument("--safety", type=float, default=None, help="CFL safety factor")
    run.add_argument("--samples", type=int, default=None, help="diagnostic sample count")
    run.add_argument("--seed", type=int, default=None, help="seed recorded in the manifest")
    run.add_argument("--workers", type=int, default=None,
                     help="worker count (results are worker-count independent)")
    run.add_argument("--out", default=None, help="output directory")

    study = sub.add_parser("study", help="projection-limiter convergence study")
    study.add_argument("--xi", type=float, required=True,
                       help="distance parameter of the study field (>= 0)")
    study.add_argument("--k", type=int, default=2)
    study.add_argument("--grids", default="5,10,20,40,80",
                       help="comma-separated ascending 1/h values")
    study.add_argument("--out", default=None, help="output CSV path")

    ref = sub.add_parser("reference", help="finite-volume reference solution")
    ref.add_argument("--scenario", required=True)
    ref.add_argument("--resolution", type=int, required=True)
    ref.add_argument("--T", type=float, default=None)
    ref.add_argument("--out", default=None, help="output CSV path")

    return parser


def _default_out(kind: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, "out")
    return os.path.join(root, kind)


def _load_config(path):
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    flat = {}
    for section in cfg.sections():
        for key, val in cfg.items(section):
            flat[key] = val
    return flat


def _merged_run_options(args):
    opts = {
        "scenario": None, "mesh": "rect", "k": 2, "limiter": "CRL0",
        "h": None, "t": None, "safety": 0.9, "samples": 20, "seed": 0,
        "workers": 1, "out": None,
    }
    if args.config:
        file_opts = _load_config(args.config)
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, val in file_opts.items():
            if key in ("scenario", "mesh", "limiter", "out"):
                opts[key] = val
            elif key in ("k", "samples", "seed", "workers"):
                opts[key] = int(val)
            else:
                opts[key] = float(val)
    for key in ("scenario", "mesh", "k", "limiter", "h", "safety", "samples",
                "seed", "workers", "out"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if args.T is not None:
        opts["t"] = args.T
    return opts


def cmd_run(args) -> int:
    opts = _merged_run_options(args)
    if not opts["scenario"]:
        raise ConfigError("missing key 'scenario'")
    try:
        scenario = sce.builtin(opts["scenario"])
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    try:
        limiter = LimiterConfig.from_label(opts["limiter"])
    except ValueError as exc:
        raise ConfigError(f"key 'limiter': {exc}") from None
    if opts["k"] not in (0, 1, 2):
        raise ConfigError("key 'k' must be 0, 1, or 2")
    if opts["workers"] < 1:
        raise ConfigError("key 'workers' must be positive")

    outdir = opts["out"] or _default_out(opts["scenario"])
    os.makedirs(outdir, exist_ok=True)

    dumps = []

    def on_sample(field, t):
        idx = len(dumps)
        path = os.path.join(outdir, f"field_{idx:03d}.csv")
        diag.write_field_csv(path, field)
        diag.write_vtk(os.path.join(outdir, f"field_{idx:03d}.vtk"), field)
        dumps.append((t, path))

    started = time.perf_counter()
    result = sce.run_scenario(
        scenario,
        mesh_kind=opts["mesh"],
        k=opts["k"],
        limiter=limiter,
        h=opts["h"],
        safety=opts["safety"],
        n_samples=opts["samples"],
        t_final=opts["t"],
        on_sample=on_sample,
    )
    wall = time.perf_counter() - started

    diag.write_stats_csv(os.path.join(outdir, "stats.csv"), result.stats)
    means = result.field.cell_means()
    summary = {
        "scenario": opts["scenario"],
        "mesh": opts["mesh"],
        "k": opts["k"],
        "limiter": limiter.label(),
        "h": opts["h"] if opts["h"] is not None else scenario.h,
        "seed": opts["seed"],
        "workers": opts["workers"],
        "dt": result.dt,
        "steps": result.steps,
        "final_time": result.final_time,
        "reached_steady": result.reached_steady,
        "final_total_density": float(
            np.sum(result.field.disc.cell_detb * means[:, 0])
        ),
        "final_max_density": float(means[:, 0].max()),
        "max_pct_cm_nonrealizable": max(
            s.pct_cm_nonrealizable for s in result.stats
        ),
        "max_pct_gp_nonrealizable": max(
            s.pct_gp_nonrealizable for s in result.stats
        ),
        "wall_seconds": wall,
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(dumps)} field dumps, stats.csv, summary.json to {outdir}")
    return EXIT_OK


def cmd_study(args) -> int:
    try:
        grids = tuple(int(g) for g in args.grids.split(","))
    except ValueError:
        raise ConfigError(f"key 'grids': not an integer list: {args.grids!r}") from None
    if args.xi < 0:
        raise ConfigError("key 'xi' must be nonnegative")
    if args.k not in (0, 1, 2):
        raise ConfigError("key 'k' must be 0, 1, or 2")
    try:
        cfg = sce.LimiterStudyConfig(xi=args.xi, k=args.k, grids=grids)
    except ValueError as exc:
        raise ConfigError(f"key 'grids': {exc}") from None
    rows = sce.run_limiter_study(cfg)
    out = args.out or _default_out(f"study_k{args.k}_xi{args.xi:g}.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    diag.write_study_csv(
        out,
        [(r.inv_h, r.e1, r.order1, r.einf, r.orderinf, r.theta_max) for r in rows],
    )
    print(f"wrote {len(rows)} study rows to {out}")
    return EXIT_OK


def cmd_reference(args) -> int:
    try:
        scenario = sce.builtin(args.scenario)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    if args.resolution < 1:
        raise ConfigError("key 'resolution' must be positive")
    grid = sce.reference_solution(scenario, args.resolution, t_final=args.T)
    out = args.out or _default_out(f"reference_{args.scenario}_{args.resolution}.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    xs, ys = grid.centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    u = grid.u.reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.hypot(u[:, 1], u[:, 2]) / u[:, 0]
    rows = np.column_stack([gx.ravel(), gy.ravel(), u, f])
    diag._write_rows(out, diag.FIELD_HEADER, rows)
    print(f"wrote {len(rows)} reference rows to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "study": cmd_study, "reference": cmd_reference}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
