"""Heatmap and convergence-figure rendering from solver CSV files.

Field CSVs carry ``x,y,psi0,psi1x,psi1y,f`` rows on a structured lattice;
densities are drawn on a log10 scale with a floor clamp, normalized-moment
plots get the black/white realizability-loss overlay. Study CSVs
(``inv_h,E1,order1,Einf,orderinf,theta_max``) become log-log error plots
with reference slopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .overlay import BLACK, WHITE, classify_overlay

FIELD_COLUMNS = ("x", "y", "psi0", "psi1x", "psi1y", "f")
STUDY_COLUMNS = ("inv_h", "E1", "order1", "Einf", "orderinf", "theta_max")
STATS_COLUMNS = ("time", "pct_gp", "pct_cm", "theta_max")


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    csv_path: str
    quantity: str  # "psi0_log" | "f" | "stats" | "convergence"
    output: str
    vmin: float | None = None
    vmax: float | None = None
    floor: float = 1e-12
    degree: int | None = None  # reference slope k+1 for convergence plots


def read_csv(path, expected):
    with open(path) as fh:
        header = fh.readline().strip()
    names = tuple(header.split(","))
    missing = [c for c in expected if c not in names]
    if missing:
        raise SchemaError(f"{path}: missing column {missing[0]!r} (header {header!r})")
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.size == 0 or data.shape[1] != len(names):
        raise SchemaError(f"{path}: no data rows")
    return {name: data[:, i] for i, name in enumerate(names)}


def _to_lattice(x, y, values):
    """Pivot scattered structured samples into an (nx, ny) array."""
    xs = np.unique(np.round(x, 12))
    ys = np.unique(np.round(y, 12))
    nx, ny = len(xs), len(ys)
    if nx * ny != len(values):
        raise SchemaError(
            f"rows do not form a lattice ({len(values)} rows vs {nx} x {ny})"
        )
    ix = np.searchsorted(xs, np.round(x, 12))
    iy = np.searchsorted(ys, np.round(y, 12))
    grid = np.full((nx, ny), np.nan)
    grid[ix, iy] = values
    return xs, ys, grid


def render_field(spec: PlotSpec) -> str:
    cols = read_csv(spec.csv_path, FIELD_COLUMNS)
    if spec.quantity == "psi0_log":
        xs, ys, grid = _to_lattice(
            cols["x"], cols["y"], np.log10(np.maximum(cols["psi0"], spec.floor))
        )
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        im = ax.pcolormesh(xs, ys, grid.T, cmap="viridis",
                           vmin=spec.vmin, vmax=spec.vmax, shading="nearest")
        fig.colorbar(im, ax=ax, label="log10 density")
    elif spec.quantity == "f":
        codes = classify_overlay(cols["psi0"], cols["f"])
        xs, ys, grid = _to_lattice(cols["x"], cols["y"], cols["f"])
        _, _, cgrid = _to_lattice(cols["x"], cols["y"], codes.astype(float))
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        im = ax.pcolormesh(
            xs, ys, np.clip(grid, 0.0, 1.0).T, cmap="magma",
            vmin=spec.vmin if spec.vmin is not None else 0.0,
            vmax=spec.vmax if spec.vmax is not None else 1.0,
            shading="nearest",
        )
        overlay = np.zeros(cgrid.shape + (4,))
        overlay[cgrid == BLACK] = (0.0, 0.0, 0.0, 1.0)
        overlay[cgrid == WHITE] = (1.0, 1.0, 1.0, 1.0)
        ax.imshow(
            np.swapaxes(overlay, 0, 1),
            origin="lower",
            extent=(xs[0], xs[-1], ys[0], ys[-1]),
            interpolation="nearest",
            aspect="auto",
        )
        fig.colorbar(im, ax=ax, label="|phi1|")
    else:
        raise SchemaError(f"unknown field quantity {spec.quantity!r}")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def fit_slope(inv_h, err):
    """Least-squares slope of log(err) vs log(h) in the asymptotic regime.

    Coarse grids sit above the asymptotic line and bias the fit, so only
    the finer half of the rows (at least two) enters.
    """
    h = 1.0 / np.asarray(inv_h, dtype=float)
    err = np.asarray(err, dtype=float)
    order = np.argsort(h)
    keep = order[: max(2, len(h) // 2 + 1)]
    mask = err[keep] > 0.0
    return float(np.polyfit(np.log(h[keep][mask]), np.log(err[keep][mask]), 1)[0])


def render_convergence(spec: PlotSpec) -> tuple[str, float]:
    """Log-log error plot; returns (path, fitted E1 slope)."""
    cols = read_csv(spec.csv_path, STUDY_COLUMNS)
    if len(cols["inv_h"]) < 2:
        raise SchemaError(f"{spec.csv_path}: need at least two study rows")
    h = 1.0 / cols["inv_h"]
    slope = fit_slope(cols["inv_h"], cols["E1"])
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    ax.loglog(h, cols["E1"], "o-", label="E1")
    ax.loglog(h, cols["Einf"], "s--", label="Einf")
    if spec.degree is not None:
        p = spec.degree + 1
        anchor = cols["E1"][-1]
        ax.loglog(h, anchor * (h / h[-1]) ** p, ":", color="gray",
                  label=f"slope {p}")
    ax.annotate(
        f"fitted slope {slope:.2f}",
        xy=(h[len(h) // 2], cols["E1"][len(h) // 2]),
        xytext=(0.05, 0.9), textcoords="axes fraction",
    )
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output, slope


def render_stats(spec: PlotSpec) -> str:
    cols = read_csv(spec.csv_path, STATS_COLUMNS)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    ax.plot(cols["time"], cols["pct_gp"], label="% nodes non-realizable")
    ax.plot(cols["time"], cols["pct_cm"], label="% means non-realizable")
    ax2 = ax.twinx()
    ax2.plot(cols["time"], cols["theta_max"], color="gray", ls=":",
             label="max theta")
    ax.set_xlabel("time")
    ax.set_ylabel("percent")
    ax2.set_ylabel("max theta")
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output
