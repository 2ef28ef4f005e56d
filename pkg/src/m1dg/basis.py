"""Reference-element bases and the quadrature machinery of the scheme.

Two reference elements are used: the unit triangle with vertices (0,0), (1,0),
(0,1) and the square [-1/2, 1/2]^2. Bases are monomials orthonormalized
against the reference mass matrix (Cholesky), so the per-cell mass matrix of
any affine cell is ``|det B| * I`` and the constant mode alone carries the
cell mean.

Each shape/degree pair gets a :class:`QuadratureSet` bundling

* the volume rule used for operator assembly and projections,
* the per-edge Gauss rule used for numerical fluxes,
* the decomposition of the cell mean into a convex combination of edge-layer
  and interior point values (the identity behind the realizability-preserving
  CFL bounds), and
* the admissibility node sets where point realizability is enforced/checked.

For triangles the decomposition comes from pushing a Gauss x Gauss-Lobatto
tensor rule through the three degenerate maps of the square onto the
triangle; the Gauss-Lobatto endpoint layers land on the edges, where each
edge is covered twice and the two coverings merge into a single set of edge
Gauss nodes with combined weight (2/3) * w_gl1 * w_beta. For rectangles the
mean is the average of the two mixed (Gauss-Lobatto x Gauss) tensor rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "ReferenceBasis",
    "QuadratureSet",
    "gauss_rule",
    "gauss_lobatto_rule",
    "reference_quadrature",
    "triangle_cellmean_set",
    "rect_node_set",
    "error_quadrature",
    "TRI_VERTICES",
    "RECT_VERTICES",
]

TRI_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
RECT_VERTICES = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])

# First weight of the 3-point Gauss-Lobatto rule; enters every CFL bound.
GL3_FIRST_WEIGHT = 1.0 / 6.0


def gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1/2, 1/2]; weights sum to one."""
    if not 1 <= n <= 5:
        raise ValueError("gauss_rule supports 1..5 points")
    x, w = leggauss(n)
    return 0.5 * x, 0.5 * w


def gauss_lobatto_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto rule on [-1/2, 1/2] including both endpoints."""
    if n == 3:
        return (
            np.array([-0.5, 0.0, 0.5]),
            np.array([1.0, 4.0, 1.0]) / 6.0,
        )
    if n == 4:
        s = 0.5 / np.sqrt(5.0)
        return (
            np.array([-0.5, -s, s, 0.5]),
            np.array([1.0, 5.0, 5.0, 1.0]) / 12.0,
        )
    raise ValueError("gauss_lobatto_rule supports 3 or 4 points")


def _monomial_exponents(shape: str, degree: int) -> list[tuple[int, int]]:
    # Total-degree space P_k on both shapes: N_k = (k+1)(k+2)/2 modes. The
    # third-order convergence tables are only reproduced with P_2; a tensor
    # Q_2 space approximates noticeably better and lands well below them.
    if shape not in ("tri", "rect"):
        raise ValueError(f"unknown reference shape {shape!r}")
    return [(px, d - px) for d in range(degree + 1) for px in range(d, -1, -1)]


def _monomial_gram(shape: str, exps) -> np.ndarray:
    from math import factorial

    n = len(exps)
    gram = np.empty((n, n))
    for i, (pi, qi) in enumerate(exps):
        for j, (pj, qj) in enumerate(exps):
            p, q = pi + pj, qi + qj
            if shape == "rect":
                ix = 0.0 if p % 2 else 0.5**p / (p + 1)
                iy = 0.0 if q % 2 else 0.5**q / (q + 1)
                gram[i, j] = ix * iy
            else:
                gram[i, j] = factorial(p) * factorial(q) / factorial(p + q + 2)
    return gram


@dataclass(frozen=True)
class ReferenceBasis:
    """Orthonormal modal basis on a reference element."""

    shape: str
    degree: int
    exponents: tuple
    coeff: np.ndarray  # phi_i = sum_j coeff[i, j] * x^p_j y^q_j
    mean_value: float  # value of the constant mode; cell mean = mean_value * a_0

    @property
    def n_modes(self) -> int:
        return len(self.exponents)

    def _monomials(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([x**p * y**q for p, q in self.exponents], axis=-1)

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        """Basis values at reference points; shape (..., n_modes)."""
        return self._monomials(pts) @ self.coeff.T

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        """Reference-frame gradients at points; shape (..., n_modes, 2)."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        dx = np.stack(
            [p * x ** max(p - 1, 0) * y**q for p, q in self.exponents], axis=-1
        )
        dy = np.stack(
            [q * x**p * y ** max(q - 1, 0) for p, q in self.exponents], axis=-1
        )
        return np.stack([dx @ self.coeff.T, dy @ self.coeff.T], axis=-1)


def reference_basis(shape: str, degree: int) -> ReferenceBasis:
    if not 0 <= degree <= 2:
        raise ValueError("polynomial degree must be in {0, 1, 2}")
    exps = _monomial_exponents(shape, degree)
    gram = _monomial_gram(shape, exps)
    chol = np.linalg.cholesky(gram)
    coeff = np.linalg.inv(chol)
    # Drop roundoff fill-in above the diagonal so parities stay exact.
    coeff = np.tril(coeff)
    return ReferenceBasis(
        shape=shape,
        degree=degree,
        exponents=tuple(exps),
        coeff=coeff,
        mean_value=float(coeff[0, 0]),
    )


def _dedupe(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = points[order]
    keep = [pts[0]]
    for p in pts[1:]:
        if max(abs(p[0] - keep[-1][0]), abs(p[1] - keep[-1][1])) > tol:
            keep.append(p)
    return np.array(keep)


@dataclass(frozen=True)
class QuadratureSet:
    """All node/weight sets of one reference shape and degree.

    Weights are area-relative: volume weights sum to the reference area, the
    cell-mean decomposition weights sum to one, and edge weights sum to one
    (an edge integral is ``length * sum_b w_b g(x_b)``). ``cellmean_nodes``
    starts with ``cellmean_edge_count`` edge-layer nodes, ordered edge-major,
    whose weights are exactly the convex-combination coefficients that appear
    in the CFL proof.
    """

    shape: str
    degree: int
    volume_nodes: np.ndarray
    volume_weights: np.ndarray
    edge_nodes: np.ndarray  # (n_edges, k+1, 2)
    edge_weights: np.ndarray  # (k+1,)
    cellmean_nodes: np.ndarray
    cellmean_weights: np.ndarray
    cellmean_edge_count: int
    srk_nodes: np.ndarray  # admissibility node set checked by diagnostics
    limiter_nodes: np.ndarray  # srk plus all decomposition nodes

    @property
    def n_edges(self) -> int:
        return 3 if self.shape == "tri" else 4


def _edge_gauss_nodes(vertices: np.ndarray, n: int) -> np.ndarray:
    t, _ = gauss_rule(n)
    nv = len(vertices)
    nodes = np.empty((nv, n, 2))
    for i in range(nv):
        a, b = vertices[i], vertices[(i + 1) % nv]
        mid = 0.5 * (a + b)
        nodes[i] = mid[None, :] + t[:, None] * (b - a)[None, :]
    return nodes


def _tri_volume_rule() -> tuple[np.ndarray, np.ndarray]:
    """7-point degree-5 rule on the unit triangle (barycentric, positive)."""
    s15 = np.sqrt(15.0)
    a1 = (6.0 - s15) / 21.0
    a2 = (6.0 + s15) / 21.0
    w1 = (155.0 - s15) / 1200.0
    w2 = (155.0 + s15) / 1200.0
    bary = [(1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0)]
    for a, w in ((a1, w1), (a2, w2)):
        bary += [(a, a, w), (1 - 2 * a, a, w), (a, 1 - 2 * a, w)]
    nodes = np.array([[b[0], b[1]] for b in bary])
    weights = 0.5 * np.array([b[2] for b in bary])  # reference area 1/2
    return nodes, weights


def _tri_cellmean(k: int):
    """Cell-mean decomposition on the unit triangle.

    Edge layer: the (k+1) Gauss nodes of each edge with merged weight
    (2/3) * (1/6) * w_beta (each edge is covered by two of the three
    collapsed tensor rules). Interior: the Gauss-Lobatto midline of each
    projection, at barycentric ((1/2+v), (1/2-v)/2, (1/2-v)/2) cycled over
    the vertices, with weight (2/3) * (4/6) * (1/2 - v) * w_beta.
    """
    t, w = gauss_rule(k + 1)
    edge_nodes = _edge_gauss_nodes(TRI_VERTICES, k + 1)
    nodes = [edge_nodes.reshape(-1, 2)]
    weights = [np.tile((2.0 / 3.0) * GL3_FIRST_WEIGHT * w, 3)]
    inner_nodes = []
    inner_weights = []
    for i in range(3):
        v0 = TRI_VERTICES[i]
        v1 = TRI_VERTICES[(i + 1) % 3]
        v2 = TRI_VERTICES[(i + 2) % 3]
        lam = 0.5 + t
        pts = (
            lam[:, None] * v0[None, :]
            + (0.5 * (0.5 - t))[:, None] * (v1 + v2)[None, :]
        )
        inner_nodes.append(pts)
        inner_weights.append((2.0 / 3.0) * (4.0 / 6.0) * (0.5 - t) * w)
    nodes.append(np.concatenate(inner_nodes))
    weights.append(np.concatenate(inner_weights))
    all_nodes = np.concatenate(nodes)
    all_weights = np.concatenate(weights)
    return all_nodes, all_weights, 3 * (k + 1)


def _rect_cellmean(k: int):
    """Average of the two mixed GL3 x Gauss tensor rules on the square."""
    t, w = gauss_rule(k + 1)
    glx, glw = gauss_lobatto_rule(3)
    nodes = []
    weights = []
    # edge layers, edge-major in the local order bottom, right, top, left
    for edge, (fixed, axis) in enumerate(
        [(-0.5, 1), (0.5, 0), (0.5, 1), (-0.5, 0)]
    ):
        pts = np.empty((k + 1, 2))
        pts[:, axis] = fixed
        pts[:, 1 - axis] = t
        nodes.append(pts)
        weights.append(0.5 * glw[0] * w)
    edge_count = 4 * (k + 1)
    for axis, fixed in ((0, 0.0), (1, 0.0)):
        pts = np.empty((k + 1, 2))
        pts[:, axis] = fixed
        pts[:, 1 - axis] = t
        nodes.append(pts)
        weights.append(0.5 * glw[1] * w)
    all_nodes = np.concatenate(nodes)
    all_weights = np.concatenate(weights)
    return all_nodes, all_weights, edge_count


def reference_quadrature(shape: str, k: int) -> QuadratureSet:
    if not 0 <= k <= 2:
        raise ValueError("degree must be in {0, 1, 2}")
    if shape == "tri":
        vol_nodes, vol_weights = _tri_volume_rule()
        edge_nodes = _edge_gauss_nodes(TRI_VERTICES, k + 1)
        cm_nodes, cm_weights, cm_edges = _tri_cellmean(k)
        srk = _dedupe(cm_nodes)
        limiter = srk
    elif shape == "rect":
        x, w = gauss_lobatto_rule(4)
        gx, gy = np.meshgrid(x, x, indexing="ij")
        vol_nodes = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        vol_weights = np.outer(w, w).ravel()
        edge_nodes = _edge_gauss_nodes(RECT_VERTICES, k + 1)
        cm_nodes, cm_weights, cm_edges = _rect_cellmean(k)
        srk = _dedupe(np.concatenate([vol_nodes, edge_nodes.reshape(-1, 2)]))
        limiter = _dedupe(np.concatenate([srk, cm_nodes]))
    else:
        raise ValueError(f"unknown reference shape {shape!r}")
    _, edge_w = gauss_rule(k + 1)
    return QuadratureSet(
        shape=shape,
        degree=k,
        volume_nodes=vol_nodes,
        volume_weights=vol_weights,
        edge_nodes=edge_nodes,
        edge_weights=edge_w,
        cellmean_nodes=cm_nodes,
        cellmean_weights=cm_weights,
        cellmean_edge_count=cm_edges,
        srk_nodes=srk,
        limiter_nodes=limiter,
    )


def _map_affine(nodes: np.ndarray, origin: np.ndarray, bmat: np.ndarray) -> np.ndarray:
    return origin[None, :] + nodes @ bmat.T


def triangle_cellmean_set(k: int, vertices: np.ndarray) -> QuadratureSet:
    """Reference quadrature mapped onto a physical triangle.

    Weights are area-relative and therefore unchanged by the affine map;
    only node positions move.
    """
    vertices = np.asarray(vertices, dtype=float)
    bmat = np.stack([vertices[1] - vertices[0], vertices[2] - vertices[0]], axis=-1)
    det = np.linalg.det(bmat)
    if det <= 0.0:
        raise ValueError("triangle is degenerate or not counterclockwise")
    ref = reference_quadrature("tri", k)
    v0 = vertices[0]
    return QuadratureSet(
        shape="tri",
        degree=k,
        volume_nodes=_map_affine(ref.volume_nodes, v0, bmat),
        volume_weights=ref.volume_weights,
        edge_nodes=np.stack(
            [_map_affine(e, v0, bmat) for e in ref.edge_nodes]
        ),
        edge_weights=ref.edge_weights,
        cellmean_nodes=_map_affine(ref.cellmean_nodes, v0, bmat),
        cellmean_weights=ref.cellmean_weights,
        cellmean_edge_count=ref.cellmean_edge_count,
        srk_nodes=_map_affine(ref.srk_nodes, v0, bmat),
        limiter_nodes=_map_affine(ref.limiter_nodes, v0, bmat),
    )


def rect_node_set(k: int, center: np.ndarray, dx: float, dy: float) -> QuadratureSet:
    """Reference quadrature mapped onto an axis-aligned rectangle."""
    if dx <= 0.0 or dy <= 0.0:
        raise ValueError("rectangle extents must be positive")
    center = np.asarray(center, dtype=float)
    bmat = np.diag([dx, dy])
    ref = reference_quadrature("rect", k)
    return QuadratureSet(
        shape="rect",
        degree=k,
        volume_nodes=_map_affine(ref.volume_nodes, center, bmat),
        volume_weights=ref.volume_weights,
        edge_nodes=np.stack([_map_affine(e, center, bmat) for e in ref.edge_nodes]),
        edge_weights=ref.edge_weights,
        cellmean_nodes=_map_affine(ref.cellmean_nodes, center, bmat),
        cellmean_weights=ref.cellmean_weights,
        cellmean_edge_count=ref.cellmean_edge_count,
        srk_nodes=_map_affine(ref.srk_nodes, center, bmat),
        limiter_nodes=_map_affine(ref.limiter_nodes, center, bmat),
    )


def error_quadrature(shape: str, n: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """High-order reference rule for error norms (n x n tensor Gauss).

    On the triangle the tensor rule is collapsed through one of the
    degenerate square-to-triangle maps, picking up the (1/2 - v) area factor.
    Weights sum to the reference area.
    """
    t, w = leggauss(n)
    t, w = 0.5 * t, 0.5 * w
    if shape == "rect":
        gx, gy = np.meshgrid(t, t, indexing="ij")
        nodes = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        weights = np.outer(w, w).ravel()
        return nodes, weights
    if shape == "tri":
        u, v = np.meshgrid(t, t, indexing="ij")
        lam1 = 0.5 + v
        lam2 = (0.5 + u) * (0.5 - v)
        nodes = np.stack(
            [
                lam1 * TRI_VERTICES[0, 0] + lam2 * TRI_VERTICES[1, 0]
                + (1 - lam1 - lam2) * TRI_VERTICES[2, 0],
                lam1 * TRI_VERTICES[0, 1] + lam2 * TRI_VERTICES[1, 1]
                + (1 - lam1 - lam2) * TRI_VERTICES[2, 1],
            ],
            axis=-1,
        ).reshape(-1, 2)
        weights = (np.outer(w, w) * (0.5 - v[0][None, :])).ravel()
        return nodes, weights
    raise ValueError(f"unknown reference shape {shape!r}")
