"""Algebra of the M1 moment system.

Moment states live in arrays whose last axis holds ``(psi0, psi1x, psi1y)``:
the particle density and the two in-plane components of the first moment.
Everything here broadcasts over leading axes and is free of mutable state, so
all functions may be called concurrently.

The model is closed with the Levermore (maximum-entropy) Eddington factor.
The second moment is the full 3x3 tensor of the underlying angular density;
its out-of-plane diagonal ``zz`` never enters the 2D fluxes but is carried so
that the trace identity ``trace(psi2) = psi0`` can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RealizabilityError",
    "ConditioningError",
    "PressureTensor",
    "EigenDecomposition",
    "eddington_chi",
    "eddington_chi_prime",
    "first_moment_norm",
    "normalized_flux",
    "is_realizable",
    "is_strictly_realizable",
    "distance_to_boundary",
    "realizability_fix",
    "closure_pressure",
    "flux",
    "directional_jacobian",
    "eigensystem",
    "eigendecomposition",
]

# Below this normalized flux the rank-one part of the closure is replaced by
# its isotropic limit; the m m^T factor is 0/0 at f = 0 while its coefficient
# vanishes, so the switch changes values only at roundoff level.
F_ISOTROPIC = 1e-14

# Transformation matrices with a 1-norm condition estimate beyond this are
# treated as numerically defective (the system degenerates as f -> 1).
COND_LIMIT = 1e13


class RealizabilityError(ValueError):
    """Raised when input moments violate what an operation requires."""


class ConditioningError(RuntimeError):
    """Raised when an eigenvector matrix is numerically defective."""

    def __init__(self, message: str, condition_estimate: float = np.inf):
        super().__init__(message)
        self.condition_estimate = condition_estimate


@dataclass(frozen=True)
class PressureTensor:
    """Second moment of the closing angular density.

    ``xx, xy, yy`` form the symmetric in-plane block used by the fluxes;
    ``zz`` is the out-of-plane diagonal. All entries broadcast like the
    moments they were computed from.
    """

    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray
    zz: np.ndarray

    def trace(self) -> np.ndarray:
        return self.xx + self.yy + self.zz


@dataclass(frozen=True)
class EigenDecomposition:
    """Real eigensystem of a directional flux Jacobian.

    ``eigenvalues`` are sorted ascending; columns of ``right_matrix`` are the
    matching right eigenvectors and ``left_matrix`` is its inverse.
    """

    eigenvalues: np.ndarray
    right_matrix: np.ndarray
    left_matrix: np.ndarray
    condition_estimate: float


def first_moment_norm(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.hypot(u[..., 1], u[..., 2])


def normalized_flux(u: np.ndarray) -> np.ndarray:
    """f = |psi1| / psi0, the distance-controlling anisotropy parameter."""
    u = np.asarray(u, dtype=float)
    return first_moment_norm(u) / u[..., 0]


def is_realizable(u: np.ndarray) -> np.ndarray:
    """Exact closed-cone predicate: psi0 > 0 and |psi1| <= psi0.

    Deliberately tolerance-free; all slack lives in ``realizability_fix`` and
    in test assertions.
    """
    u = np.asarray(u, dtype=float)
    return (u[..., 0] > 0.0) & (first_moment_norm(u) <= u[..., 0])


def is_strictly_realizable(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return (u[..., 0] > 0.0) & (first_moment_norm(u) < u[..., 0])


def distance_to_boundary(u: np.ndarray) -> np.ndarray:
    """psi0 - |psi1|; negative outside the realizable cone."""
    u = np.asarray(u, dtype=float)
    return u[..., 0] - first_moment_norm(u)


def realizability_fix(u: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Locally repair a state so it is strictly realizable.

    First the density is floored at ``eps``; then, if the normalized first
    moment exceeds ``1 - eps``, the first moment is rescaled onto that shell.
    Idempotent, and the identity on states with margin. Used wherever fluxes
    or transformation matrices must be evaluated on possibly invalid data;
    the stored solution itself is never modified through this.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    out = np.array(u, dtype=float, copy=True)
    psi0 = np.maximum(out[..., 0], eps)
    out[..., 0] = psi0
    # The rescale target can land an ulp above 1 - eps; bias subsequent passes
    # down so the fixed point is exact and the map bitwise idempotent.
    shrink = 1.0
    for _ in range(8):
        r = np.hypot(out[..., 1], out[..., 2])
        over = r > (1.0 - eps) * psi0
        if not np.any(over):
            break
        scale = np.where(
            over, shrink * (1.0 - eps) * psi0 / np.where(r > 0.0, r, 1.0), 1.0
        )
        out[..., 1] *= scale
        out[..., 2] *= scale
        shrink = 1.0 - 4e-16
    return out


def eddington_chi(f: np.ndarray) -> np.ndarray:
    """Eddington factor chi(f) = (3 + 4 f^2) / (5 + 2 sqrt(4 - 3 f^2)).

    Maps [0, 1] onto [1/3, 1], monotone, with chi'(0) = 0.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0.0) or np.any(f > 1.0):
        raise RealizabilityError("Eddington factor argument outside [0, 1]")
    return (3.0 + 4.0 * f * f) / (5.0 + 2.0 * np.sqrt(4.0 - 3.0 * f * f))


def eddington_chi_prime(f: np.ndarray) -> np.ndarray:
    """Analytic derivative of the Eddington factor on [0, 1]."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0.0) or np.any(f > 1.0):
        raise RealizabilityError("Eddington factor argument outside [0, 1]")
    s = np.sqrt(4.0 - 3.0 * f * f)
    den = 5.0 + 2.0 * s
    return (8.0 * f * den + 6.0 * f * (3.0 + 4.0 * f * f) / s) / (den * den)


def _closure_parts(u: np.ndarray):
    """Common factors of the closure: f, direction cosines, chi weights."""
    u0 = u[..., 0]
    r = np.hypot(u[..., 1], u[..., 2])
    f = np.minimum(r / u0, 1.0)
    small = f < F_ISOTROPIC
    safe_r = np.where(small, 1.0, r)
    m1 = np.where(small, 0.0, u[..., 1] / safe_r)
    m2 = np.where(small, 0.0, u[..., 2] / safe_r)
    chi = eddington_chi(f)
    return u0, f, small, m1, m2, chi


def closure_pressure(u: np.ndarray) -> PressureTensor:
    """Close the system: psi2 = D(psi1/psi0) * psi0.

    ``D`` interpolates between the isotropic tensor id/3 at f = 0 and the
    free-streaming rank-one tensor n n^T at f = 1. Requires a realizable
    state; at f = 0 the rank-one term is replaced by its vanishing limit.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(is_realizable(u)):
        raise RealizabilityError("closure evaluated on a non-realizable state")
    u0, _, small, m1, m2, chi = _closure_parts(u)
    a = 0.5 * (1.0 - chi)
    b = 0.5 * (3.0 * chi - 1.0)
    xx = u0 * np.where(small, 1.0 / 3.0, a + b * m1 * m1)
    yy = u0 * np.where(small, 1.0 / 3.0, a + b * m2 * m2)
    xy = u0 * np.where(small, 0.0, b * m1 * m2)
    zz = u0 * np.where(small, 1.0 / 3.0, a)
    return PressureTensor(xx=xx, xy=xy, yy=yy, zz=zz)


def flux(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Physical fluxes (F, G) of the balance law, stacked on the last axis."""
    u = np.asarray(u, dtype=float)
    p = closure_pressure(u)
    fx = np.stack([u[..., 1], p.xx, p.xy], axis=-1)
    gy = np.stack([u[..., 2], p.xy, p.yy], axis=-1)
    return fx, gy


def _check_unit_normal(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(np.hypot(n[..., 0], n[..., 1]) - 1.0) > 1e-12):
        raise ValueError("direction must be a unit vector")
    return n


def directional_jacobian(u: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Exact Jacobian of the flux in direction ``n`` with respect to the state.

    Assembled from the analytic chi' via the chain rule through the
    normalized first moment; the derivative of the rank-one closure term is
    direction-dependent on the cone boundary, so strict realizability is
    required.
    """
    u = np.asarray(u, dtype=float)
    n = _check_unit_normal(n)
    if not np.all(is_strictly_realizable(u)):
        raise RealizabilityError(
            "directional Jacobian is singular on the realizability boundary"
        )
    u0, f, small, m1, m2, chi = _closure_parts(u)
    chip = eddington_chi_prime(f)
    a = 0.5 * (1.0 - chi)
    b = 0.5 * (3.0 * chi - 1.0)
    ap = -0.5 * chip
    bp = 1.5 * chip

    safe_f = np.where(small, 1.0, f)
    bof = np.where(small, 0.0, b / safe_f)
    # d psi2_ij / d psi0 = (a - f a') delta_ij + (b - f b') m_i m_j
    alpha0 = a - f * ap
    beta0 = b - f * bp
    dxx_0 = np.where(small, 1.0 / 3.0, alpha0 + beta0 * m1 * m1)
    dyy_0 = np.where(small, 1.0 / 3.0, alpha0 + beta0 * m2 * m2)
    dxy_0 = np.where(small, 0.0, beta0 * m1 * m2)
    # d psi2_ij / d psi1_k = a' m_k delta_ij + b' m_k m_i m_j
    #                        + (b/f)(delta_ik m_j + delta_jk m_i - 2 m_i m_j m_k)
    z = np.zeros_like(u0)
    dxx_1 = np.where(small, z, ap * m1 + bp * m1**3 + 2.0 * bof * m1 * m2 * m2)
    dxx_2 = np.where(small, z, ap * m2 + bp * m1 * m1 * m2 - 2.0 * bof * m1 * m1 * m2)
    dyy_1 = np.where(small, z, ap * m1 + bp * m1 * m2 * m2 - 2.0 * bof * m1 * m2 * m2)
    dyy_2 = np.where(small, z, ap * m2 + bp * m2**3 + 2.0 * bof * m1 * m1 * m2)
    dxy_1 = np.where(small, z, bp * m1 * m1 * m2 + bof * m2 * (1.0 - 2.0 * m1 * m1))
    dxy_2 = np.where(small, z, bp * m1 * m2 * m2 + bof * m1 * (1.0 - 2.0 * m2 * m2))

    nx = n[..., 0]
    ny = n[..., 1]
    one = np.ones_like(u0)
    jac = np.empty(np.broadcast(u0, nx).shape + (3, 3), dtype=float)
    jac[..., 0, 0] = 0.0
    jac[..., 0, 1] = nx * one
    jac[..., 0, 2] = ny * one
    jac[..., 1, 0] = nx * dxx_0 + ny * dxy_0
    jac[..., 1, 1] = nx * dxx_1 + ny * dxy_1
    jac[..., 1, 2] = nx * dxx_2 + ny * dxy_2
    jac[..., 2, 0] = nx * dxy_0 + ny * dyy_0
    jac[..., 2, 1] = nx * dxy_1 + ny * dyy_1
    jac[..., 2, 2] = nx * dxy_2 + ny * dyy_2
    return jac


def _inv3(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched analytic 3x3 inverse; returns (inverse, determinant)."""
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 0, 2]
    d = m[..., 1, 0]
    e = m[..., 1, 1]
    f = m[..., 1, 2]
    g = m[..., 2, 0]
    h = m[..., 2, 1]
    i = m[..., 2, 2]
    ca = e * i - f * h
    cb = c * h - b * i
    cc = b * f - c * e
    cd = f * g - d * i
    ce = a * i - c * g
    cf = c * d - a * f
    cg = d * h - e * g
    ch = b * g - a * h
    ci = a * e - b * d
    det = a * ca + b * cd + c * cg
    inv = np.empty_like(m)
    safe = np.where(det == 0.0, 1.0, det)
    inv[..., 0, 0] = ca / safe
    inv[..., 0, 1] = cb / safe
    inv[..., 0, 2] = cc / safe
    inv[..., 1, 0] = cd / safe
    inv[..., 1, 1] = ce / safe
    inv[..., 1, 2] = cf / safe
    inv[..., 2, 0] = cg / safe
    inv[..., 2, 1] = ch / safe
    inv[..., 2, 2] = ci / safe
    return inv, det


def eigensystem(u: np.ndarray, n: np.ndarray):
    """Batched eigensystem of the directional Jacobian.

    Returns ``(eigenvalues, right, left, cond, ok)`` with eigenvalues sorted
    ascending and a per-state ``ok`` flag instead of raising, so callers that
    sweep whole meshes can fall back cell by cell. Eigenvector columns are
    2-norm normalized with the largest-magnitude component made positive,
    which keeps the decomposition deterministic.
    """
    jac = directional_jacobian(u, n)
    w, v = np.linalg.eig(jac)
    scale = np.maximum(1.0, np.abs(w.real).max(axis=-1))
    real_ok = np.abs(w.imag).max(axis=-1) <= 1e-9 * scale
    lam = w.real
    vec = v.real

    order = np.argsort(lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    vec = np.take_along_axis(vec, order[..., None, :], axis=-1)

    norms = np.sqrt(np.sum(vec * vec, axis=-2, keepdims=True))
    ok = real_ok & np.all(norms[..., 0, :] > 0.0, axis=-1)
    vec = vec / np.where(norms == 0.0, 1.0, norms)
    lead = np.argmax(np.abs(vec), axis=-2)
    sign = np.sign(np.take_along_axis(vec, lead[..., None, :], axis=-2))[..., 0, :]
    vec = vec * np.where(sign == 0.0, 1.0, sign)[..., None, :]

    left, det = _inv3(vec)
    det_ok = np.abs(det) > 1e-300
    cond = np.abs(vec).sum(axis=-2).max(axis=-1) * np.abs(left).sum(axis=-2).max(axis=-1)
    cond = np.where(det_ok, cond, np.inf)
    ok = ok & det_ok & (cond <= COND_LIMIT) & np.isfinite(lam).all(axis=-1)
    return lam, vec, left, cond, ok


def eigendecomposition(u: np.ndarray, n: np.ndarray) -> EigenDecomposition:
    """Eigensystem of the directional Jacobian for a single state.

    Raises ``ConditioningError`` (carrying the condition estimate) when the
    eigenvector matrix is numerically defective, which happens as f -> 1
    where all characteristic speeds collapse.
    """
    u = np.asarray(u, dtype=float)
    lam, right, left, cond, ok = eigensystem(u, n)
    if lam.ndim != 1:
        raise ValueError("eigendecomposition expects a single state; use eigensystem")
    if not ok:
        raise ConditioningError(
            "directional Jacobian is numerically defective "
            f"(condition estimate {float(cond):.3e})",
            condition_estimate=float(cond),
        )
    return EigenDecomposition(
        eigenvalues=lam,
        right_matrix=right,
        left_matrix=left,
        condition_estimate=float(cond),
    )
