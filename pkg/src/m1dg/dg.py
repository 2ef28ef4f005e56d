"""Semi-discrete DG operator: projection, fluxes, sources, ghost cells.

A :class:`Discretization` freezes everything shared by all fields on one
mesh: the orthonormal reference basis, the quadrature sets, basis tables at
all node families, and the per-cell affine maps. Because the basis is
orthonormal on the reference element, the mass matrix of cell ``K`` is
``|det B_K| * I`` and applying its inverse is a division.

The operator reads its input immutably and writes disjoint per-cell blocks;
edge fluxes are computed once per edge and scattered to both sides with
opposite signs, in a fixed order, so results are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import basis as bas
from . import closure as cl
from .mesh import Mesh

__all__ = [
    "Discretization",
    "DGField",
    "SourceTerms",
    "BoundaryRule",
    "GhostPolicy",
    "GhostError",
    "DataError",
    "BlowUpError",
    "dirichlet",
    "vacuum",
    "reflective",
    "ghost_state",
    "lax_friedrichs_flux",
    "project_initial",
    "evaluate_operator",
]

VACUUM_FLOOR = (1e-10, 0.0, 0.0)
FIX_EPS = 1e-12


class GhostError(KeyError):
    """A boundary tag has no configured rule."""


class DataError(ValueError):
    """User-supplied data (initial condition, boundary value) is invalid."""


class BlowUpError(RuntimeError):
    """The numerical solution produced non-finite values."""

    def __init__(self, message: str, cells=None, stage: str = ""):
        super().__init__(message)
        self.cells = [] if cells is None else list(cells)
        self.stage = stage


@dataclass(frozen=True)
class Discretization:
    mesh: Mesh
    k: int
    basis: bas.ReferenceBasis
    quad: bas.QuadratureSet
    vol_phi: np.ndarray  # (Lv, nm)
    vol_grad: np.ndarray  # (Lv, nm, 2)
    edge_phi: np.ndarray  # (n_local_edges, nG, nm)
    srk_phi: np.ndarray  # (Ms, nm)
    lim_phi: np.ndarray  # (Ml, nm)
    cellmean_phi: np.ndarray  # (D, nm)
    grad_at_center: np.ndarray  # (nm, 2) reference gradient at the centroid
    cell_origin: np.ndarray  # (nc, 2)
    cell_bmat: np.ndarray  # (nc, 2, 2)
    cell_binvt: np.ndarray  # (nc, 2, 2) inverse-transpose of bmat
    cell_detb: np.ndarray  # (nc,)

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def physical_points(self, ref_pts: np.ndarray) -> np.ndarray:
        """Map reference points into every cell; shape (nc, L, 2)."""
        return self.cell_origin[:, None, :] + np.einsum(
            "cij,lj->cli", self.cell_bmat, ref_pts
        )

    def reference_coords(self, cells: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Pull physical points back to the reference frame of given cells."""
        rel = pts - self.cell_origin[cells]
        binv = np.swapaxes(self.cell_binvt[cells], -1, -2)
        return np.einsum("...ij,...j->...i", binv, rel)


def build_discretization(mesh: Mesh, k: int) -> Discretization:
    rb = bas.reference_basis(mesh.kind, k)
    quad = bas.reference_quadrature(mesh.kind, k)
    if mesh.kind == "tri":
        v0 = mesh.vertices[mesh.cells[:, 0]]
        bmat = np.stack(
            [
                mesh.vertices[mesh.cells[:, 1]] - v0,
                mesh.vertices[mesh.cells[:, 2]] - v0,
            ],
            axis=-1,
        )
        center = np.array([1.0 / 3.0, 1.0 / 3.0])
    else:
        dx = mesh.structured["dx"]
        dy = mesh.structured["dy"]
        v0 = mesh.centroids
        bmat = np.broadcast_to(np.diag([dx, dy]), (mesh.n_cells, 2, 2)).copy()
        center = np.zeros(2)
    detb = bmat[:, 0, 0] * bmat[:, 1, 1] - bmat[:, 0, 1] * bmat[:, 1, 0]
    inv = np.empty_like(bmat)
    inv[:, 0, 0] = bmat[:, 1, 1]
    inv[:, 0, 1] = -bmat[:, 0, 1]
    inv[:, 1, 0] = -bmat[:, 1, 0]
    inv[:, 1, 1] = bmat[:, 0, 0]
    inv /= detb[:, None, None]
    return Discretization(
        mesh=mesh,
        k=k,
        basis=rb,
        quad=quad,
        vol_phi=rb.evaluate(quad.volume_nodes),
        vol_grad=rb.gradient(quad.volume_nodes),
        edge_phi=np.stack([rb.evaluate(e) for e in quad.edge_nodes]),
        srk_phi=rb.evaluate(quad.srk_nodes),
        lim_phi=rb.evaluate(quad.limiter_nodes),
        cellmean_phi=rb.evaluate(quad.cellmean_nodes),
        grad_at_center=rb.gradient(center),
        cell_origin=v0,
        cell_bmat=bmat,
        cell_binvt=np.swapaxes(inv, -1, -2),
        cell_detb=detb,
    )


@dataclass
class DGField:
    """Per-cell modal coefficients for the three moment components."""

    disc: Discretization
    coef: np.ndarray  # (nc, 3, n_modes)

    def copy(self) -> "DGField":
        return DGField(self.disc, self.coef.copy())

    def cell_means(self) -> np.ndarray:
        return self.disc.basis.mean_value * self.coef[:, :, 0]

    def eval_table(self, phi: np.ndarray) -> np.ndarray:
        """Values at tabulated reference nodes; shape (nc, L, 3)."""
        return np.swapaxes(self.coef @ phi.T, 1, 2)

    def eval_at(self, cells: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Values at arbitrary physical points inside the given cells."""
        ref = self.disc.reference_coords(cells, pts)
        phi = self.disc.basis.evaluate(ref)
        return np.einsum("...in,...n->...i", self.coef[cells], phi)


@dataclass(frozen=True)
class SourceTerms:
    """Cellwise-constant absorption, scattering, and source moments."""

    sigma_a: np.ndarray  # (nc,)
    sigma_s: np.ndarray  # (nc,)
    q0: np.ndarray  # (nc,)
    q1: np.ndarray  # (nc, 2)

    @classmethod
    def zeros(cls, n_cells: int) -> "SourceTerms":
        return cls(
            sigma_a=np.zeros(n_cells),
            sigma_s=np.zeros(n_cells),
            q0=np.zeros(n_cells),
            q1=np.zeros((n_cells, 2)),
        )

    def max_total_sigma(self) -> float:
        return float(np.max(self.sigma_a + self.sigma_s, initial=0.0))


@dataclass(frozen=True)
class BoundaryRule:
    kind: str  # "dirichlet" | "vacuum" | "reflective"
    value: Callable | np.ndarray | None = None
    floor: tuple = VACUUM_FLOOR


def dirichlet(value) -> BoundaryRule:
    return BoundaryRule(kind="dirichlet", value=value)


def vacuum(floor=VACUUM_FLOOR) -> BoundaryRule:
    state = np.asarray(floor, dtype=float)
    if not cl.is_strictly_realizable(state):
        raise DataError("vacuum floor state must be strictly realizable")
    return BoundaryRule(kind="vacuum", floor=tuple(state))


def reflective() -> BoundaryRule:
    return BoundaryRule(kind="reflective")


@dataclass(frozen=True)
class GhostPolicy:
    """Boundary rules keyed by mesh tag name."""

    rules: dict

    def rule_for(self, tag: str) -> BoundaryRule:
        try:
            return self.rules[tag]
        except KeyError:
            raise GhostError(f"no boundary rule configured for tag {tag!r}") from None

    @classmethod
    def uniform(cls, mesh_tags, rule: BoundaryRule) -> "GhostPolicy":
        return cls({t: rule for t in mesh_tags if t != "interior"})


def ghost_state(inner, rule: BoundaryRule, normal, x, y, t: float):
    """Exterior trace used by boundary edge fluxes."""
    inner = np.asarray(inner, dtype=float)
    if rule.kind == "dirichlet":
        if callable(rule.value):
            out = np.asarray(rule.value(x, y, t), dtype=float)
            return np.broadcast_to(out, inner.shape).copy()
        return np.broadcast_to(np.asarray(rule.value, dtype=float), inner.shape).copy()
    if rule.kind == "vacuum":
        return np.broadcast_to(np.asarray(rule.floor, dtype=float), inner.shape).copy()
    if rule.kind == "reflective":
        normal = np.asarray(normal, dtype=float)
        pdotn = inner[..., 1] * normal[..., 0] + inner[..., 2] * normal[..., 1]
        out = inner.copy()
        out[..., 1] -= 2.0 * pdotn * normal[..., 0]
        out[..., 2] -= 2.0 * pdotn * normal[..., 1]
        return out
    raise DataError(f"unknown boundary rule kind {rule.kind!r}")


def fix_invalid(u: np.ndarray, eps: float = FIX_EPS) -> np.ndarray:
    """Repair only states outside the cone; valid states pass untouched.

    The local repair exists so fluxes stay evaluable on runs without the
    realizability limiter. Applying its density floor to valid states of
    smaller magnitude would inflate their outflow and break the convex
    structure behind the cell-mean realizability proof, so valid states are
    never modified here.
    """
    u = np.asarray(u, dtype=float)
    ok = cl.is_realizable(u)
    if bool(np.all(ok)):
        return u
    return np.where(ok[..., None], u, cl.realizability_fix(u, eps))


def lax_friedrichs_flux(a, b, normal, alpha: float = 1.0) -> np.ndarray:
    """Global Lax-Friedrichs numerical flux in direction ``normal``.

    Consistent (H(u,u,n) = F(u).n) and conservative (H(a,b,n) = -H(b,a,-n));
    ``alpha`` must dominate every characteristic speed, and 1 does.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    normal = np.asarray(normal, dtype=float)
    fa, ga = cl.flux(a)
    fb, gb = cl.flux(b)
    nx = normal[..., 0:1]
    ny = normal[..., 1:2]
    return 0.5 * (fa * nx + ga * ny + fb * nx + gb * ny - alpha * (b - a))


def project_initial(f, disc: Discretization) -> DGField:
    """Cellwise L2 projection of ``f(x, y) -> (psi0, psi1x, psi1y)``.

    Uses the assembly volume rule, hence exact for data of degree <= k.
    """
    pts = disc.physical_points(disc.quad.volume_nodes)  # (nc, Lv, 2)
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    if vals.shape != pts.shape[:2] + (3,):
        raise DataError(
            f"initial condition returned shape {vals.shape}, "
            f"expected {pts.shape[:2] + (3,)}"
        )
    if not np.all(np.isfinite(vals)):
        bad = np.flatnonzero(~np.isfinite(vals).all(axis=(1, 2)))
        raise DataError(f"initial condition not finite in cells {bad[:10].tolist()}")
    coef = np.einsum("q,cqi,qn->cin", disc.quad.volume_weights, vals, disc.vol_phi)
    return DGField(disc, coef)


def project_cellwise(f, disc: Discretization) -> DGField:
    """Mesh-resolved projection: each cell takes the centroid value of ``f``.

    Used for indicator-shaped initial states (disks, boxes); their pointwise
    L2 projection overshoots the cone at cells crossed by the jump, while
    the mesh-resolved variant is realizable wherever ``f`` is.
    """
    cen = disc.mesh.centroids
    vals = np.asarray(f(cen[:, 0], cen[:, 1]), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = np.flatnonzero(~np.isfinite(vals).all(axis=-1))
        raise DataError(f"initial condition not finite in cells {bad[:10].tolist()}")
    coef = np.zeros((disc.mesh.n_cells, 3, disc.n_modes))
    coef[:, :, 0] = vals / disc.basis.mean_value
    return DGField(disc, coef)


def _edge_point_coords(mesh: Mesh, n_gauss: int) -> np.ndarray:
    """Physical edge Gauss nodes in the left cell's traversal order."""
    t, _ = bas.gauss_rule(n_gauss)
    a = mesh.vertices[mesh.edge_vertices[:, 0]]
    b = mesh.vertices[mesh.edge_vertices[:, 1]]
    mid = 0.5 * (a + b)
    return mid[:, None, :] + t[None, :, None] * (b - a)[:, None, :]


def evaluate_operator(
    field: DGField,
    t: float,
    ghosts: GhostPolicy,
    sources: SourceTerms,
    alpha: float = 1.0,
    fix_eps: float = FIX_EPS,
) -> np.ndarray:
    """Right-hand side of the modal ODE system, as a coefficient array.

    Volume and edge flux evaluations repair non-realizable values locally so
    the closure stays defined even when the stored polynomial dips out of
    the cone; the stored solution itself is never altered. Sources are
    evaluated on the raw polynomial, keeping the operator linear in the
    source moments.
    """
    disc = field.disc
    mesh = disc.mesh
    quad = disc.quad

    if not np.all(np.isfinite(field.coef)):
        bad = np.flatnonzero(~np.isfinite(field.coef).all(axis=(1, 2)))
        raise BlowUpError(
            f"non-finite solution coefficients in {len(bad)} cells "
            f"(first: {bad[:10].tolist()})",
            cells=bad,
            stage=f"t={t:.6g}",
        )

    # volume flux term: int_K F(U) . grad(phi_i)
    uvol = field.eval_table(disc.vol_phi)  # (nc, Lv, 3)
    fx, gy = cl.flux(fix_invalid(uvol, fix_eps))
    g0 = disc.vol_grad[..., 0]  # (Lv, nm) reference-frame gradients
    g1 = disc.vol_grad[..., 1]
    binvt = disc.cell_binvt
    gpx = binvt[:, 0, 0, None, None] * g0 + binvt[:, 0, 1, None, None] * g1
    gpy = binvt[:, 1, 0, None, None] * g0 + binvt[:, 1, 1, None, None] * g1
    wq = quad.volume_weights[None, :, None]
    vol = np.swapaxes(fx * wq, 1, 2) @ gpx + np.swapaxes(gy * wq, 1, 2) @ gpy
    vol *= disc.cell_detb[:, None, None]

    # edge traces per local edge, for all cells at once
    n_gauss = quad.edge_nodes.shape[1]
    traces = np.stack(
        [field.eval_table(disc.edge_phi[i]) for i in range(quad.n_edges)]
    )  # (n_local, nc, nG, 3)

    left_cells = mesh.edge_cells[:, 0]
    right_cells = mesh.edge_cells[:, 1]
    u_left = traces[mesh.edge_local[:, 0], left_cells]  # (ne, nG, 3)
    u_right = np.empty_like(u_left)
    interior = right_cells >= 0
    u_right[interior] = traces[
        mesh.edge_local[interior, 1], right_cells[interior]
    ][:, ::-1]

    u_left = fix_invalid(u_left, fix_eps)
    boundary = ~interior
    if np.any(boundary):
        coords = _edge_point_coords(mesh, n_gauss)
        for tag_id in np.unique(mesh.edge_tags[boundary]):
            rule = ghosts.rule_for(mesh.tag_names[tag_id])
            sel = np.flatnonzero(boundary & (mesh.edge_tags == tag_id))
            u_right[sel] = ghost_state(
                u_left[sel],
                rule,
                mesh.edge_normals[sel][:, None, :],
                coords[sel][..., 0],
                coords[sel][..., 1],
                t,
            )
    u_right = fix_invalid(u_right, fix_eps)

    hflux = lax_friedrichs_flux(
        u_left, u_right, mesh.edge_normals[:, None, :], alpha
    )  # (ne, nG, 3)
    hflux_w = hflux * (quad.edge_weights[None, :, None] * mesh.edge_lengths[:, None, None])

    edge_term = np.zeros_like(field.coef)
    for loc in range(quad.n_edges):
        phi = disc.edge_phi[loc]  # (nG, nm)
        sel = mesh.edge_local[:, 0] == loc
        if np.any(sel):
            contrib = np.swapaxes(hflux_w[sel], 1, 2) @ phi
            np.add.at(edge_term, left_cells[sel], contrib)
        sel = interior & (mesh.edge_local[:, 1] == loc)
        if np.any(sel):
            # right side sees the reversed traversal and the negated normal
            contrib = np.swapaxes(hflux_w[sel][:, ::-1], 1, 2) @ phi
            np.add.at(edge_term, right_cells[sel], -contrib)

    # sources on the raw trace: S = (-sa psi0 + q0, -(ss+sa) psi1 + q1)
    s_at = np.empty_like(uvol)
    s_at[..., 0] = -sources.sigma_a[:, None] * uvol[..., 0] + sources.q0[:, None]
    st = (sources.sigma_s + sources.sigma_a)[:, None]
    s_at[..., 1] = -st * uvol[..., 1] + sources.q1[:, None, 0]
    s_at[..., 2] = -st * uvol[..., 2] + sources.q1[:, None, 1]
    src = np.swapaxes(s_at * wq, 1, 2) @ disc.vol_phi
    src *= disc.cell_detb[:, None, None]

    rate = (vol - edge_term + src) / disc.cell_detb[:, None, None]
    if not np.all(np.isfinite(rate)):
        bad = np.flatnonzero(~np.isfinite(rate).all(axis=(1, 2)))
        raise BlowUpError(
            f"non-finite DG rate in {len(bad)} cells (first: {bad[:10].tolist()})",
            cells=bad,
            stage=f"t={t:.6g}",
        )
    return rate
