#!/usr/bin/env python3
"""Regenerate the projection-limiter convergence tables.

Runs the study for k in {1, 2} at xi = 1e-4 and xi = 0, writes the CSVs,
prints the tables, and (when the plots package is installed) renders the
log-log figures next to them.
"""

import argparse
import os
import sys

from m1dg import diagnostics as diag
from m1dg import scenarios as sce


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/tables")
    parser.add_argument(
        "--grids", default="5,10,20,40,80",
        help="ascending 1/h values (full-scale: 5,10,20,40,80,160,320)",
    )
    args = parser.parse_args()
    grids = tuple(int(g) for g in args.grids.split(","))
    os.makedirs(args.out, exist_ok=True)

    for xi in (1e-4, 0.0):
        for k in (1, 2):
            rows = sce.run_limiter_study(
                sce.LimiterStudyConfig(xi=xi, k=k, grids=grids)
            )
            path = os.path.join(args.out, f"study_k{k}_xi{xi:g}.csv")
            diag.write_study_csv(
                path,
                [(r.inv_h, r.e1, r.order1, r.einf, r.orderinf, r.theta_max)
                 for r in rows],
            )
            print(f"\nk={k}, xi={xi:g}  ({path})")
            print(f"{'1/h':>5} {'E1':>12} {'ord':>5} {'Einf':>12} {'ord':>5} {'theta':>10}")
            for r in rows:
                print(
                    f"{r.inv_h:>5} {r.e1:>12.3e} {r.order1:>5.2f} "
                    f"{r.einf:>12.3e} {r.orderinf:>5.2f} {r.theta_max:>10.3e}"
                )
            try:
                from m1plots.render import PlotSpec, render_convergence

                png = path.replace(".csv", ".png")
                render_convergence(PlotSpec(path, "convergence", png, degree=k))
                print(f"figure: {png}")
            except ImportError:
                pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
