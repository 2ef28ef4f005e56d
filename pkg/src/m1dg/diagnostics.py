"""Realizability statistics, error norms, reference comparison, writers.

The realizability statistics use the exact cone predicate with no tolerance,
so runs backed by the preservation theorems report exactly zero. All writers
are deterministic: identical inputs give byte-identical files. CSV numbers
are written with 17 significant digits (full double round-trip).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import basis as bas
from . import closure as cl
from .dg import DGField

__all__ = [
    "RealizabilityStats",
    "realizability_stats",
    "error_norms",
    "convergence_order",
    "log_sobolev_error",
    "sample_field_rows",
    "write_field_csv",
    "write_stats_csv",
    "write_study_csv",
    "write_vtk",
]

FIELD_HEADER = "x,y,psi0,psi1x,psi1y,f"
STATS_HEADER = "time,pct_gp,pct_cm,theta_max"
STUDY_HEADER = "inv_h,E1,order1,Einf,orderinf,theta_max"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass(frozen=True)
class RealizabilityStats:
    time: float
    pct_gp_nonrealizable: float  # over all admissibility nodes
    pct_cm_nonrealizable: float  # over cell means
    theta_max: float


def realizability_stats(field: DGField, time: float = 0.0, theta_max: float = 0.0) -> RealizabilityStats:
    """Percentages of non-realizable cell means and admissibility nodes."""
    means = field.cell_means()
    cm_bad = np.count_nonzero(~cl.is_realizable(means))
    nodes = field.eval_table(field.disc.srk_phi)
    gp_bad = np.count_nonzero(~cl.is_realizable(nodes))
    return RealizabilityStats(
        time=time,
        pct_gp_nonrealizable=100.0 * gp_bad / nodes.shape[0] / nodes.shape[1],
        pct_cm_nonrealizable=100.0 * cm_bad / len(means),
        theta_max=theta_max,
    )


def error_norms(field: DGField, exact, n_quad: int = 5, component: int = 0):
    """(E1, Einf) of one component against ``exact(x, y)``.

    E1 integrates the absolute error with an ``n_quad`` x ``n_quad`` tensor
    Gauss rule per cell; Einf is the max over the same nodes.
    """
    disc = field.disc
    nodes, weights = bas.error_quadrature(disc.mesh.kind, n_quad)
    pts = disc.physical_points(nodes)
    vals = field.eval_table(disc.basis.evaluate(nodes))[..., component]
    ref = np.asarray(exact(pts[..., 0], pts[..., 1]), dtype=float)
    err = np.abs(vals - ref)
    e1 = float(np.einsum("q,cq,c->", weights, err, disc.cell_detb))
    return e1, float(err.max())


def convergence_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    return float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine))


def log_sobolev_error(field: DGField, ref_psi0: np.ndarray, ref_grid) -> tuple[float, bool]:
    """Graded comparison of log10(psi0) against a reference-grid field.

    ``ref_grid`` provides cell centers (x, y arrays) and spacings. Both the
    value mismatch and the mismatch of grad(log10 psi0) enter, each as an L2
    norm integrated by the rectangle rule on the reference points; the DG
    gradient comes from the polynomial, the reference gradient from centered
    differences. Non-positive densities are clamped at 1e-14 and flagged.
    """
    from .fv import grid_gradients

    xs, ys, dx, dy = ref_grid
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    cells = _locate_cells(field.disc, pts)
    vals = field.eval_at(cells, pts)
    grads = _gradients_at(field, cells, pts)

    flagged = False
    dg0 = vals[:, 0]
    if np.any(dg0 <= 0.0) or np.any(ref_psi0 <= 0.0):
        flagged = True
    dg0 = np.maximum(dg0, 1e-14)
    rf0 = np.maximum(np.asarray(ref_psi0, dtype=float).ravel(), 1e-14)

    ln10 = np.log(10.0)
    diff = np.log10(dg0) - np.log10(rf0)
    rgx, rgy = grid_gradients(np.asarray(ref_psi0, dtype=float), dx, dy)
    dgrad = grads[:, 0, :] / (dg0 * ln10)[:, None]
    rgrad = np.stack([rgx.ravel(), rgy.ravel()], axis=-1) / (rf0 * ln10)[:, None]
    gdiff = dgrad - rgrad

    cellw = dx * dy
    l2 = float(np.sqrt(cellw * np.sum(diff * diff)))
    h1 = float(np.sqrt(cellw * np.sum(gdiff * gdiff)))
    return l2 + h1, flagged


def _locate_cells(disc, pts: np.ndarray) -> np.ndarray:
    """Containing-cell lookup; structured meshes by index math, else KD-tree."""
    mesh = disc.mesh
    s = mesh.structured
    if s:
        x0, y0 = s["origin"]
        i = np.clip(((pts[:, 0] - x0) / s["dx"]).astype(int), 0, s["nx"] - 1)
        j = np.clip(((pts[:, 1] - y0) / s["dy"]).astype(int), 0, s["ny"] - 1)
        rect_cell = i * s["ny"] + j
        if mesh.kind == "rect":
            return rect_cell
        if s.get("split") == "two-way":
            base = 2 * rect_cell
            xl = (pts[:, 0] - x0) / s["dx"] - i
            yl = (pts[:, 1] - y0) / s["dy"] - j
            return base + (yl > xl)
        if s.get("split") == "four-way":
            base = 4 * rect_cell
            xl = (pts[:, 0] - x0) / s["dx"] - i - 0.5
            yl = (pts[:, 1] - y0) / s["dy"] - j - 0.5
            ang = np.arctan2(yl, xl)
            sector = np.floor((ang + 0.75 * np.pi) / (0.5 * np.pi)).astype(int) % 4
            return base + sector
    from scipy.spatial import cKDTree

    tree = cKDTree(mesh.centroids)
    _, idx = tree.query(pts, k=min(8, mesh.n_cells))
    idx = np.atleast_2d(idx)
    ref = disc.reference_coords(idx, pts[:, None, :])
    if mesh.kind == "tri":
        ok = (
            (ref[..., 0] > -1e-10)
            & (ref[..., 1] > -1e-10)
            & (ref[..., 0] + ref[..., 1] < 1.0 + 1e-10)
        )
    else:
        ok = np.all(np.abs(ref) <= 0.5 + 1e-10, axis=-1)
    first = np.argmax(ok, axis=1)
    return idx[np.arange(len(pts)), first]


def _gradients_at(field: DGField, cells: np.ndarray, pts: np.ndarray) -> np.ndarray:
    disc = field.disc
    ref = disc.reference_coords(cells, pts)
    gref = disc.basis.gradient(ref)  # (npts, nm, 2)
    gcoef = np.einsum("pin,pnd->pid", field.coef[cells], gref)
    return np.einsum("pdj,pij->pid", disc.cell_binvt[cells], gcoef)


def sample_field_rows(field: DGField, sampling: str = "means"):
    """(x, y, psi0, psi1x, psi1y, f) rows in deterministic cell order."""
    if sampling != "means":
        raise ValueError(f"unknown sampling {sampling!r}")
    mesh = field.disc.mesh
    means = field.cell_means()
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.hypot(means[:, 1], means[:, 2]) / means[:, 0]
    return np.column_stack([mesh.centroids, means, f])


def write_field_csv(path, field: DGField, sampling: str = "means") -> None:
    rows = sample_field_rows(field, sampling)
    _write_rows(path, FIELD_HEADER, rows)


def write_stats_csv(path, series) -> None:
    rows = [
        (s.time, s.pct_gp_nonrealizable, s.pct_cm_nonrealizable, s.theta_max)
        for s in series
    ]
    _write_rows(path, STATS_HEADER, np.asarray(rows, dtype=float))


def write_study_csv(path, rows) -> None:
    """Rows: (inv_h, e1, order1, einf, orderinf, theta_max); orders may be nan."""
    _write_rows(path, STUDY_HEADER, np.asarray(rows, dtype=float))


def read_stats_csv(path):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return [RealizabilityStats(*row) for row in data]


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def write_vtk(path, field: DGField, title: str = "moment field") -> None:
    """Legacy ASCII unstructured-grid dump.

    Cell data carries the means (psi0, psi1x, psi1y, f); point data carries
    vertex samples averaged over the cells sharing each vertex.
    """
    mesh = field.disc.mesh
    means = field.cell_means()
    with np.errstate(divide="ignore", invalid="ignore"):
        fmean = np.hypot(means[:, 1], means[:, 2]) / means[:, 0]

    nvert = len(mesh.vertices)
    acc = np.zeros((nvert, 3))
    cnt = np.zeros(nvert)
    nv_cell = mesh.cells.shape[1]
    if mesh.kind == "tri":
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    else:
        corners = bas.RECT_VERTICES
    corner_vals = field.eval_table(field.disc.basis.evaluate(corners))
    for loc in range(nv_cell):
        np.add.at(acc, mesh.cells[:, loc], corner_vals[:, loc, :])
        np.add.at(cnt, mesh.cells[:, loc], 1.0)
    point_vals = acc / cnt[:, None]

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nvert} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    nc = mesh.n_cells
    lines.append(f"CELLS {nc} {nc * (nv_cell + 1)}")
    lines += [
        f"{nv_cell} " + " ".join(str(v) for v in cell) for cell in mesh.cells
    ]
    lines.append(f"CELL_TYPES {nc}")
    ctype = "5" if mesh.kind == "tri" else "9"
    lines += [ctype] * nc
    lines.append(f"CELL_DATA {nc}")
    for name, arr in (
        ("psi0", means[:, 0]),
        ("psi1x", means[:, 1]),
        ("psi1y", means[:, 2]),
        ("f", fmean),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in arr]
    lines.append(f"POINT_DATA {nvert}")
    for name, arr in (
        ("psi0", point_vals[:, 0]),
        ("psi1x", point_vals[:, 1]),
        ("psi1y", point_vals[:, 2]),
    ):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in arr]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
