"""Flag-style entry points for the rendering scripts."""

from __future__ import annotations

import argparse
import sys

from .render import PlotSpec, SchemaError, render_convergence, render_field, render_stats


def main_field(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="m1dg-plot-field", description="heatmap from a field CSV"
    )
    parser.add_argument("csv")
    parser.add_argument("--quantity", choices=["psi0_log", "f"], default="psi0_log")
    parser.add_argument("--out", required=True)
    parser.add_argument("--vmin", type=float, default=None)
    parser.add_argument("--vmax", type=float, default=None)
    parser.add_argument("--floor", type=float, default=1e-12,
                        help="clamp for the log-scale density plot")
    args = parser.parse_args(argv)
    spec = PlotSpec(csv_path=args.csv, quantity=args.quantity, output=args.out,
                    vmin=args.vmin, vmax=args.vmax, floor=args.floor)
    try:
        path = render_field(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


def main_convergence(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="m1dg-plot-convergence", description="log-log plot from a study CSV"
    )
    parser.add_argument("csv")
    parser.add_argument("--out", required=True)
    parser.add_argument("--k", type=int, default=None,
                        help="polynomial degree for the reference slope k+1")
    args = parser.parse_args(argv)
    spec = PlotSpec(csv_path=args.csv, quantity="convergence", output=args.out,
                    degree=args.k)
    try:
        path, slope = render_convergence(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path} (fitted E1 slope {slope:.2f})")
    return 0


def main_stats(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="m1dg-plot-stats", description="time series from a stats CSV"
    )
    parser.add_argument("csv")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    spec = PlotSpec(csv_path=args.csv, quantity="stats", output=args.out)
    try:
        path = render_stats(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0
