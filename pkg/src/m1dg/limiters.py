"""Slope limiting and the scaling realizability limiter.

Both limiters are per-cell maps reading only neighbor means, so they are
order-independent and deterministic. The slope limiter is the TVB-modified
minmod of Cockburn-Shu, applied either componentwise ("primitive") or in the
characteristic variables of the directional Jacobian built at the cell mean.
The realizability limiter damps all higher-order modes by (1 - theta) until
the polynomial is admissible at every enforcement node; theta per node comes
from intersecting the segment toward the cell mean with the cone boundary,
which reduces to the largest root of a quadratic in [0, 1].

When both are active the slope limiter runs first: slope limiting can push
point values back out of the cone, the scaling limiter repairs that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import closure as cl
from .dg import DGField, GhostPolicy, ghost_state

__all__ = [
    "LimiterConfig",
    "LimiterError",
    "ThetaReport",
    "tvb_minmod",
    "slope_limit",
    "realizability_theta",
    "apply_realizability_limiter",
]

# Re-tightening step when roundoff leaks past the quadratic theta.
THETA_BUMP = 1e-10
# Relative admissibility margin targeted by the post-verification pass; keeps
# downstream convex combinations of node values realizable in floating point.
NODE_MARGIN = 1e-12


class LimiterError(RuntimeError):
    """Limiter preconditions violated (non-realizable cell means)."""


@dataclass(frozen=True)
class LimiterConfig:
    slope_mode: str = "characteristic"  # "off" | "primitive" | "characteristic"
    m_tvb: float = 0.0
    realizability: bool = True
    eps_fix: float = 1e-12

    def __post_init__(self):
        if self.slope_mode not in ("off", "primitive", "characteristic"):
            raise ValueError(f"unknown slope_mode {self.slope_mode!r}")
        if self.slope_mode != "off" and not np.isfinite(self.m_tvb):
            raise ValueError("the TVB constant must be finite when slope limiting")
        if not 0.0 < self.eps_fix < 1e-6:
            raise ValueError("eps_fix must lie in (0, 1e-6)")

    @classmethod
    def from_label(cls, label: str) -> "LimiterConfig":
        """Parse combination labels like SL0, CL22, SRL2, CRL0.2, SLinf."""
        text = label.strip()
        for prefix, (mode, realz) in (
            ("CRL", ("characteristic", True)),
            ("SRL", ("primitive", True)),
            ("CL", ("characteristic", False)),
            ("SL", ("primitive", False)),
        ):
            if text.upper().startswith(prefix):
                mtext = text[len(prefix):]
                try:
                    m = np.inf if mtext.lower() in ("inf", "") else float(mtext)
                except ValueError:
                    raise ValueError(_label_help(label)) from None
                if m < 0:
                    raise ValueError(_label_help(label))
                if np.isinf(m):
                    return cls(slope_mode="off", m_tvb=0.0, realizability=realz)
                return cls(slope_mode=mode, m_tvb=m, realizability=realz)
        raise ValueError(_label_help(label))

    def label(self) -> str:
        prefix = {"primitive": "SL", "characteristic": "CL", "off": "SL"}[self.slope_mode]
        if self.realizability:
            prefix = prefix[0] + "RL"
        m = "inf" if self.slope_mode == "off" else f"{self.m_tvb:g}"
        return prefix + m


def _label_help(label: str) -> str:
    return (
        f"unknown limiter label {label!r}; valid labels are SL/CL/SRL/CRL "
        "followed by a nonnegative TVB constant or 'inf' (e.g. SL0, CL22, "
        "SRL2, CRL0.2, SLinf)"
    )


@dataclass
class ThetaReport:
    theta: np.ndarray  # (nc,)
    theta_max: float
    activations: int
    char_fallbacks: int = 0


def _minmod_stack(args: np.ndarray, m_tvb: float, dx) -> np.ndarray:
    """TVB minmod along axis 0 of ``args``; dx broadcasts over the rest."""
    a1 = args[0]
    signs = np.sign(args)
    unanimous = np.all(signs == signs[0], axis=0) & (signs[0] != 0.0)
    minabs = np.min(np.abs(args), axis=0)
    limited = np.where(unanimous, signs[0] * minabs, 0.0)
    return np.where(np.abs(a1) < m_tvb * dx * dx, a1, limited)


def tvb_minmod(*args, m_tvb: float = 0.0, dx: float = 1.0) -> float:
    """Scalar TVB-modified minmod of two or more one-sided differences."""
    if len(args) < 2:
        raise ValueError("tvb_minmod needs at least two arguments")
    return float(_minmod_stack(np.array(args, dtype=float), m_tvb, dx))


def _char_limit(means_fixed, normal, raw_args, m_tvb, dx):
    """Limit minmod argument sets in characteristic variables.

    ``raw_args`` has shape (nargs, nc, 3). Returns the limited first argument
    mapped back to conserved variables, a changed mask, and the fallback mask
    of cells whose eigenvector matrix was unusable (those fall back to
    primitive limiting).
    """
    lam, right, left, cond, ok = cl.eigensystem(means_fixed, normal)
    char = np.einsum("cij,acj->aci", left, raw_args)
    limited_char = _minmod_stack(char, m_tvb, dx)
    changed = np.any(limited_char != char[0], axis=-1)
    back = np.einsum("cij,cj->ci", right, limited_char)
    prim = _minmod_stack(raw_args, m_tvb, dx)
    changed_prim = np.any(prim != raw_args[0], axis=-1)
    out = np.where(ok[:, None], back, prim)
    changed = np.where(ok, changed, changed_prim)
    return out, changed, ~ok


def _ghost_mean(ghosts, mesh, rule_tags, means, cells, edges, t):
    """Boundary-neighbor means seen through the ghost policy."""
    out = np.empty((len(cells), 3))
    mids = 0.5 * (
        mesh.vertices[mesh.edge_vertices[edges, 0]]
        + mesh.vertices[mesh.edge_vertices[edges, 1]]
    )
    normals = mesh.edge_normals[edges]
    centroids = mesh.centroids[cells]
    # mirror the centroid across the edge line
    dist = np.einsum("ij,ij->i", mids - centroids, normals)
    gpos = centroids + 2.0 * dist[:, None] * normals
    for tag_id in np.unique(rule_tags):
        rule = ghosts.rule_for(mesh.tag_names[tag_id])
        sel = rule_tags == tag_id
        out[sel] = ghost_state(
            means[cells[sel]], rule, normals[sel], gpos[sel, 0], gpos[sel, 1], t
        )
    return out


def _slope_limit_rect(field, cfg, ghosts, t):
    disc = field.disc
    mesh = disc.mesh
    nx, ny = mesh.structured["nx"], mesh.structured["ny"]
    dx, dy = mesh.structured["dx"], mesh.structured["dy"]
    means = field.cell_means()
    grid = means.reshape(nx, ny, 3)

    padded = np.empty((nx + 2, ny + 2, 3))
    padded[1:-1, 1:-1] = grid
    sides = {
        "left": (padded[0, 1:-1], grid[0], np.array([-1.0, 0.0]), 0),
        "right": (padded[-1, 1:-1], grid[-1], np.array([1.0, 0.0]), 0),
        "bottom": (padded[1:-1, 0], grid[:, 0], np.array([0.0, -1.0]), 1),
        "top": (padded[1:-1, -1], grid[:, -1], np.array([0.0, 1.0]), 1),
    }
    x0, y0 = mesh.structured["origin"]
    xc = x0 + dx * (np.arange(nx) + 0.5)
    yc = y0 + dy * (np.arange(ny) + 0.5)
    for name, (dest, inner, normal, axis) in sides.items():
        rule = ghosts.rule_for(name)
        if axis == 0:
            gx = np.full(ny, x0 - 0.5 * dx if name == "left" else x0 + (nx + 0.5) * dx)
            gy = yc
        else:
            gx = xc
            gy = np.full(nx, y0 - 0.5 * dy if name == "bottom" else y0 + (ny + 0.5) * dy)
        dest[:] = ghost_state(inner, rule, normal, gx, gy, t)

    fwd_x = (padded[2:, 1:-1] - grid).reshape(-1, 3)
    bwd_x = (grid - padded[:-2, 1:-1]).reshape(-1, 3)
    fwd_y = (padded[1:-1, 2:] - grid).reshape(-1, 3)
    bwd_y = (grid - padded[1:-1, :-2]).reshape(-1, 3)

    slopes = np.einsum("cin,nd->cid", field.coef, disc.grad_at_center)
    sx, sy = slopes[..., 0], slopes[..., 1]

    fallbacks = 0
    if cfg.slope_mode == "primitive":
        lim_x = _minmod_stack(np.stack([sx, fwd_x, bwd_x]), cfg.m_tvb, dx)
        lim_y = _minmod_stack(np.stack([sy, fwd_y, bwd_y]), cfg.m_tvb, dy)
        changed = np.any(lim_x != sx, axis=-1) | np.any(lim_y != sy, axis=-1)
    else:
        means_fixed = cl.realizability_fix(means, cfg.eps_fix)
        lim_x, ch_x, fb_x = _char_limit(
            means_fixed, np.array([1.0, 0.0]), np.stack([sx, fwd_x, bwd_x]),
            cfg.m_tvb, dx,
        )
        lim_y, ch_y, fb_y = _char_limit(
            means_fixed, np.array([0.0, 1.0]), np.stack([sy, fwd_y, bwd_y]),
            cfg.m_tvb, dy,
        )
        changed = ch_x | ch_y
        fallbacks = int(np.count_nonzero(fb_x | fb_y))

    if not np.any(changed):
        return field, 0, fallbacks

    out = field.copy()
    glin = disc.grad_at_center[1:3, :]  # (2 modes, 2 dirs), diagonal by parity
    coeff_xy = np.linalg.solve(
        glin.T, np.stack([lim_x[changed], lim_y[changed]], axis=-2)
    )  # (ncc, 2, 3): the two linear-mode coefficients per component
    out.coef[changed, :, 1:] = 0.0
    out.coef[changed, :, 1] = coeff_xy[:, 0, :]
    out.coef[changed, :, 2] = coeff_xy[:, 1, :]
    return out, int(np.count_nonzero(changed)), fallbacks


def _slope_limit_tri(field, cfg, ghosts, t):
    disc = field.disc
    mesh = disc.mesh
    nc = mesh.n_cells
    means = field.cell_means()

    nbr_means = np.empty((nc, 3, 3))
    nbrs = mesh.cell_neighbors
    inside = nbrs >= 0
    nbr_means[inside] = means[nbrs[inside]]
    nbr_pos = np.empty((nc, 3, 2))
    nbr_pos[inside] = mesh.centroids[nbrs[inside]]

    bcells, bloc = np.nonzero(~inside)
    if len(bcells):
        edges = mesh.cell_edges[bcells, bloc]
        tags = mesh.edge_tags[edges]
        nbr_means[bcells, bloc] = _ghost_mean(
            ghosts, mesh, tags, means, bcells, edges, t
        )
        mids = 0.5 * (
            mesh.vertices[mesh.edge_vertices[edges, 0]]
            + mesh.vertices[mesh.edge_vertices[edges, 1]]
        )
        normals = mesh.edge_normals[edges]
        cen = mesh.centroids[bcells]
        dist = np.einsum("ij,ij->i", mids - cen, normals)
        nbr_pos[bcells, bloc] = cen + 2.0 * dist[:, None] * normals

    dvec = nbr_pos - mesh.centroids[:, None, :]  # (nc, 3, 2)
    dlen = np.hypot(dvec[..., 0], dvec[..., 1])
    deltas = nbr_means - means[:, None, :]  # (nc, 3dir, 3comp)

    ref_grad = np.einsum("cin,nd->cid", field.coef, disc.grad_at_center)
    grad_phys = np.einsum("cdj,cij->cid", disc.cell_binvt, ref_grad)
    dirslope = np.einsum("cid,ced->cei", grad_phys, dvec)  # (nc, 3dir, 3comp)

    fallbacks = 0
    if cfg.slope_mode == "primitive":
        args = np.stack([dirslope, deltas])  # (2, nc, 3dir, 3comp)
        limited = _minmod_stack(args, cfg.m_tvb, dlen[..., None])
        changed = np.any(limited != dirslope, axis=(-2, -1))
    else:
        means_fixed = cl.realizability_fix(means, cfg.eps_fix)
        limited = np.empty_like(dirslope)
        changed = np.zeros(nc, dtype=bool)
        fb_total = np.zeros(nc, dtype=bool)
        for d in range(3):
            ndir = dvec[:, d, :] / dlen[:, d, None]
            lim, ch, fb = _char_limit(
                means_fixed, ndir,
                np.stack([dirslope[:, d, :], deltas[:, d, :]]),
                cfg.m_tvb, dlen[:, d, None],
            )
            limited[:, d, :] = lim
            changed |= ch
            fb_total |= fb
        fallbacks = int(np.count_nonzero(fb_total))

    if not np.any(changed):
        return field, 0, fallbacks

    # least-squares gradient from the limited directional differences,
    # then re-expand as a linear polynomial about the centroid
    sel = np.flatnonzero(changed)
    dmat = dvec[sel]  # (s, 3, 2)
    dtd = np.einsum("sdi,sdj->sij", dmat, dmat)
    rhs = np.einsum("sdi,sdc->sic", dmat, limited[sel])
    grad = np.linalg.solve(dtd, rhs)  # (s, 2, 3comp)

    quad = disc.quad
    centers = np.array([1.0 / 3.0, 1.0 / 3.0])
    rel = quad.volume_nodes - centers  # reference offsets
    offsets = np.einsum("sij,qj->sqi", disc.cell_bmat[sel], rel)
    dev = np.einsum("sqi,sic->sqc", offsets, grad)
    proj = np.einsum("q,sqc,qn->scn", quad.volume_weights, dev, disc.vol_phi)

    out = field.copy()
    out.coef[sel, :, 1:] = proj[:, :, 1:]
    return out, len(sel), fallbacks


def slope_limit(field: DGField, cfg: LimiterConfig, ghosts: GhostPolicy, t: float = 0.0):
    """TVBM slope limiting; returns (field, limited_cells, char_fallbacks).

    Cells whose minmod decision keeps every component take their full
    degree-k polynomial through unchanged; limited cells collapse to the
    limited linear reconstruction. Cell means are preserved. In
    characteristic mode the transformation matrices are built from the cell
    means after the realizability fix, and cells with defective matrices are
    limited in primitive variables instead (counted in the third return).
    """
    if cfg.slope_mode == "off":
        return field, 0, 0
    if field.disc.mesh.kind == "rect":
        return _slope_limit_rect(field, cfg, ghosts, t)
    return _slope_limit_tri(field, cfg, ghosts, t)


def _theta_quadratic(mean: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Largest root in [0, 1] of the boundary-intersection quadratic.

    The segment theta*mean + (1-theta)*point crosses the forward cone
    psi0 = |psi1| where r(theta) = a theta^2 + b theta + c vanishes; the
    larger admissible root is the entry point into the psi0 >= 0 cone.
    """
    m0, m1, m2 = mean[..., 0], mean[..., 1], mean[..., 2]
    p0, p1, p2 = point[..., 0], point[..., 1], point[..., 2]
    a = -((m0 - p0) ** 2) + (m1 - p1) ** 2 + (m2 - p2) ** 2
    b = 2.0 * (p0 * p0 - m0 * p0 - p1 * p1 + m1 * p1 - p2 * p2 + m2 * p2)
    c = -p0 * p0 + p1 * p1 + p2 * p2

    disc = b * b - 4.0 * a * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    quad = np.abs(a) > 1e-300
    # stable form: q = -(b + sign(b) sqrt(disc))/2, roots q/a and c/q
    qq = -0.5 * (b + np.copysign(sq, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        root_qa = qq / np.where(quad, a, 1.0)
        root_cq = np.where(qq != 0.0, c / np.where(qq == 0.0, 1.0, qq), root_qa)
        root_lin = np.where(np.abs(b) > 0.0, -c / np.where(b == 0.0, 1.0, b), np.nan)
    r1 = np.where(quad, np.where(disc >= 0.0, root_qa, np.nan), root_lin)
    r2 = np.where(quad, np.where(disc >= 0.0, root_cq, np.nan), root_lin)

    tol = 1e-12
    valid1 = (r1 >= -tol) & (r1 <= 1.0 + tol)
    valid2 = (r2 >= -tol) & (r2 <= 1.0 + tol)
    cand = np.fmax(
        np.where(valid1, r1, -np.inf), np.where(valid2, r2, -np.inf)
    )
    theta = np.clip(cand, 0.0, 1.0)
    # no admissible root can only come from roundoff on already-feasible
    # inputs; fall back to the safe endpoint
    theta = np.where(np.isfinite(theta), theta, 1.0)
    return theta


def realizability_theta(mean, point) -> float:
    """Smallest damping theta for which the blended point is realizable."""
    mean = np.asarray(mean, dtype=float)
    point = np.asarray(point, dtype=float)
    if not np.all(cl.is_strictly_realizable(mean)):
        raise LimiterError("realizability limiter requires a strictly realizable mean")
    if bool(np.all(cl.is_realizable(point))):
        return 0.0
    return float(_theta_quadratic(mean, point))


def apply_realizability_limiter(field: DGField):
    """Damp higher-order modes until all enforcement nodes are realizable.

    theta per cell is the max over node thetas; the constant mode is left
    bit-identical. A post-verification pass re-tightens theta in +1e-10
    steps if roundoff leaks past the quadratic solution or a node sits
    closer to the cone boundary than a small relative margin.
    """
    disc = field.disc
    means = field.cell_means()
    bad = ~cl.is_strictly_realizable(means)
    if np.any(bad):
        ids = np.flatnonzero(bad)
        raise LimiterError(
            f"{len(ids)} cell means are not strictly realizable "
            f"(first: {ids[:10].tolist()}); the scheme guarantee failed upstream"
        )

    vals = field.eval_table(disc.lim_phi)  # (nc, M, 3)
    theta_nodes = np.zeros(vals.shape[:2])
    needs = ~cl.is_realizable(vals)
    if np.any(needs):
        idx = np.nonzero(needs)
        theta_nodes[idx] = _theta_quadratic(means[idx[0]], vals[idx])
    theta = theta_nodes.max(axis=1)

    out = field.copy()
    out.coef[:, :, 1:] = field.coef[:, :, 1:] * (1.0 - theta)[:, None, None]

    # post-verify against the exact predicate plus a relative margin
    active = np.flatnonzero(theta > 0.0)
    check = active
    for _ in range(64):
        if len(check) == 0:
            break
        v = out.eval_table(disc.lim_phi)[check]
        scale = np.abs(v[..., 0]) + np.hypot(v[..., 1], v[..., 2])
        short = np.any(
            cl.distance_to_boundary(v) < NODE_MARGIN * scale, axis=1
        ) | np.any(v[..., 0] <= 0.0, axis=1)
        short &= theta[check] < 1.0
        if not np.any(short):
            break
        cells = check[short]
        theta[cells] = np.minimum(1.0, theta[cells] + THETA_BUMP)
        out.coef[cells, :, 1:] = field.coef[cells, :, 1:] * (
            1.0 - theta[cells]
        )[:, None, None]
        check = cells

    report = ThetaReport(
        theta=theta,
        theta_max=float(theta.max(initial=0.0)),
        activations=int(np.count_nonzero(theta)),
    )
    return out, report
