"""Benchmark scenario definitions, the projection-limiter study, M selection.

The five benchmarks (line source, homogeneous disk, flash, shadow, two
beams) are transcribed with their published parameters. Where the two
available descriptions of a case disagree (flash disk radius 0.5 vs 5,
homogeneous-disk final time 3.00 vs 3.75, background density 1e-10 vs 0),
the defaults follow the primary description and the alternate is exposed
under a ``-addendum`` suffix. Background densities of exactly zero are not
realizable; those initial conditions pass through the standard local fix,
which floors the density at 1e-12.

Absorption, scattering, and source coefficients are cellwise constant,
sampled at centroids, so disk- and box-shaped coefficients become
mesh-resolved indicators.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np

from . import closure as cl
from . import diagnostics as diag
from . import stepping
from .dg import (
    GhostPolicy,
    SourceTerms,
    build_discretization,
    dirichlet,
    reflective,
    vacuum,
)
from .fv import FVGrid, fv_run
from .limiters import LimiterConfig, apply_realizability_limiter
from .mesh import build_rect_mesh, build_tri_mesh_from_rect

__all__ = [
    "ScenarioConfig",
    "LimiterStudyConfig",
    "StudyRow",
    "M_GRID",
    "builtin",
    "builtin_names",
    "sample_sources",
    "make_ghosts",
    "run_scenario",
    "reference_solution",
    "limiter_study_field",
    "run_limiter_study",
    "select_m",
]

# the fixed, roughly log-spaced TVB constants swept by the M selection
M_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 10.0, 22.0, 46.0, 100.0, 150.0)


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float
    inside: float
    outside: float = 0.0

    def sample(self, x, y):
        inside = (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.radius**2
        return np.where(inside, self.inside, self.outside)


@dataclass(frozen=True)
class Box:
    x0: float
    x1: float
    y0: float
    y1: float
    inside: float
    outside: float = 0.0

    def sample(self, x, y):
        inside = (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)
        return np.where(inside, self.inside, self.outside)


@dataclass(frozen=True)
class Const:
    value: float = 0.0

    def sample(self, x, y):
        return np.full_like(np.asarray(x, dtype=float), self.value)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    domain: tuple  # (x0, x1, y0, y1)
    h: float
    t_final: float
    sigma_a: object = Const(0.0)
    sigma_s: object = Const(0.0)
    q0: object = Const(0.0)
    q1x: object = Const(0.0)
    q1y: object = Const(0.0)
    ic: Callable = None
    bc: dict = dc_field(default_factory=dict)
    steady: bool = False
    steady_tol: float = 1e-8
    steady_t_max: float = 30.0
    ic_cellwise: bool = False  # mesh-resolved indicator initial state


@dataclass(frozen=True)
class LimiterStudyConfig:
    xi: float
    k: int
    grids: tuple  # ascending 1/h values
    beam_axis: tuple = (1.0, 0.0)  # first-moment direction of the bright state
    cross_axis: tuple = (0.0, 1.0)  # direction of the faint state

    def __post_init__(self):
        if self.xi < 0.0:
            raise ValueError("xi must be nonnegative")
        if list(self.grids) != sorted(self.grids):
            raise ValueError("grids must be ascending")


@dataclass
class StudyRow:
    inv_h: int
    e1: float
    order1: float
    einf: float
    orderinf: float
    theta_max: float


def _moment_field(psi0, psi1x, psi1y):
    return np.stack(
        [np.asarray(psi0, dtype=float), np.broadcast_to(psi1x, np.shape(psi0)),
         np.broadcast_to(psi1y, np.shape(psi0))],
        axis=-1,
    )


def _line_source_ic(x, y):
    sigma = 0.02
    psi0 = np.maximum(np.exp(-10.0 * (x * x + y * y) / sigma**2), 1e-4)
    return _moment_field(psi0, 0.0, 0.0)


def _disk_ic(radius, inside, outside):
    """Pointwise disk indicator initial state, run through the local fix."""

    def ic(x, y):
        mask = x * x + y * y <= radius * radius
        u = np.zeros(np.shape(x) + (3,))
        u[..., 0] = np.where(mask, inside[0], outside[0])
        u[..., 1] = np.where(mask, inside[1], outside[1])
        u[..., 2] = np.where(mask, inside[2], outside[2])
        return cl.realizability_fix(u)

    return ic


def _constant_ic(state):
    state = np.asarray(state, dtype=float)

    def ic(x, y):
        return np.broadcast_to(state, np.shape(x) + (3,)).copy()

    return ic


def _two_beams_left(x, y, t):
    inlet = (y >= 3.0) & (y <= 4.0)
    return _moment_field(
        np.where(inlet, 100.0, 1e-4), np.where(inlet, 99.9, 0.0), 0.0
    )


def _two_beams_bottom(x, y, t):
    inlet = (x >= 3.0) & (x <= 4.0)
    return _moment_field(
        np.where(inlet, 100.0, 1e-4), 0.0, np.where(inlet, 99.9, 0.0)
    )


def _builtins() -> dict:
    scenarios = {}

    ls_bc = dirichlet(lambda x, y, t: _line_source_ic(x, y))
    scenarios["line_source"] = ScenarioConfig(
        name="line_source",
        domain=(-0.5, 0.5, -0.5, 0.5),
        h=0.004,
        t_final=0.45,
        ic=_line_source_ic,
        bc={s: ls_bc for s in ("left", "right", "bottom", "top")},
    )

    floor = np.array([1e-10, 0.0, 0.0])
    disk_bc = dirichlet(floor)
    scenarios["homogeneous_disk"] = ScenarioConfig(
        name="homogeneous_disk",
        domain=(-5.0, 5.0, -5.0, 5.0),
        h=0.05,
        t_final=3.0,
        sigma_a=Disk(0.0, 0.0, 1.0, 10.0),
        q0=Disk(0.0, 0.0, 1.0, 1.0),
        ic=_constant_ic(floor),
        bc={s: disk_bc for s in ("left", "right", "bottom", "top")},
    )
    scenarios["homogeneous_disk-addendum"] = replace(
        scenarios["homogeneous_disk"],
        name="homogeneous_disk-addendum",
        t_final=3.75,
        ic=_constant_ic(cl.realizability_fix(np.zeros(3))),
        bc={s: vacuum() for s in ("left", "right", "bottom", "top")},
    )

    scenarios["flash"] = ScenarioConfig(
        name="flash",
        domain=(-10.0, 10.0, -10.0, 10.0),
        h=0.06,
        t_final=6.0,
        ic=_disk_ic(0.5, (1.0, 0.9, 0.0), (1e-10, 0.0, 0.0)),
        bc={s: vacuum() for s in ("left", "right", "bottom", "top")},
        ic_cellwise=True,
    )
    scenarios["flash-addendum"] = replace(
        scenarios["flash"],
        name="flash-addendum",
        ic=_disk_ic(5.0, (1.0, 0.9, 0.0), (0.0, 0.0, 0.0)),
    )

    scenarios["shadow"] = ScenarioConfig(
        name="shadow",
        domain=(0.0, 12.0, 0.0, 6.0),
        h=0.04,
        t_final=30.0,
        sigma_a=Box(2.0, 3.0, 0.0, 2.0, 50.0),
        ic=_constant_ic(cl.realizability_fix(np.zeros(3))),
        bc={
            "left": dirichlet(np.array([1.0, 0.99, 0.0])),
            "right": vacuum(),
            "top": reflective(),
            "bottom": reflective(),
        },
        steady=True,
    )

    background = np.array([1e-4, 0.0, 0.0])
    scenarios["two_beams"] = ScenarioConfig(
        name="two_beams",
        domain=(0.0, 7.0, 0.0, 7.0),
        h=0.05,
        t_final=7.0,
        ic=_constant_ic(background),
        bc={
            "left": dirichlet(_two_beams_left),
            "bottom": dirichlet(_two_beams_bottom),
            "right": dirichlet(background),
            "top": dirichlet(background),
        },
    )
    return scenarios


def builtin_names() -> tuple:
    return tuple(sorted(_builtins()))


def builtin(name: str) -> ScenarioConfig:
    try:
        return _builtins()[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(builtin_names())}"
        ) from None


def sample_sources(sc: ScenarioConfig, mesh) -> SourceTerms:
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    return SourceTerms(
        sigma_a=sc.sigma_a.sample(cx, cy),
        sigma_s=sc.sigma_s.sample(cx, cy),
        q0=sc.q0.sample(cx, cy),
        q1=np.stack([sc.q1x.sample(cx, cy), sc.q1y.sample(cx, cy)], axis=-1),
    )


def make_ghosts(sc: ScenarioConfig) -> GhostPolicy:
    return GhostPolicy(dict(sc.bc))


def build_mesh(sc: ScenarioConfig, mesh_kind: str, h: float | None = None):
    h = sc.h if h is None else h
    if mesh_kind == "rect":
        return build_rect_mesh(sc.domain, h)
    if mesh_kind in ("tri", "tri-two-way"):
        split = "two-way" if mesh_kind.endswith("two-way") else "four-way"
        return build_tri_mesh_from_rect(sc.domain, h, split)
    raise ValueError(f"unknown mesh kind {mesh_kind!r}")


def run_scenario(
    sc: ScenarioConfig,
    mesh_kind: str = "rect",
    k: int = 2,
    limiter: LimiterConfig | str = "CRL0",
    h: float | None = None,
    safety: float = 0.9,
    n_samples: int = 20,
    t_final: float | None = None,
    on_sample=None,
) -> stepping.RunResult:
    """Wire a scenario into the solver and march it to its final time."""
    if isinstance(limiter, str):
        limiter = LimiterConfig.from_label(limiter)
    mesh = build_mesh(sc, mesh_kind, h)
    disc = build_discretization(mesh, k)
    return stepping.run(
        disc,
        sc.ic,
        make_ghosts(sc),
        sample_sources(sc, mesh),
        sc.t_final if t_final is None else t_final,
        limiter,
        safety=safety,
        n_samples=n_samples,
        steady_tol=sc.steady_tol if sc.steady else None,
        steady_t_max=sc.steady_t_max,
        on_sample=on_sample,
        ic_cellwise=sc.ic_cellwise,
    )


def reference_solution(
    sc: ScenarioConfig, resolution: int, t_final: float | None = None
) -> FVGrid:
    """Monotone finite-volume reference on an equidistant grid."""
    x0, x1, y0, y1 = sc.domain
    nx = resolution
    ny = max(1, round(resolution * (y1 - y0) / (x1 - x0)))
    grid0 = FVGrid(
        origin=(x0, y0),
        dx=(x1 - x0) / nx,
        dy=(y1 - y0) / ny,
        u=np.zeros((nx, ny, 3)),
    )
    xs, ys = grid0.centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    sources = SourceTerms(
        sigma_a=sc.sigma_a.sample(gx, gy).ravel(),
        sigma_s=sc.sigma_s.sample(gx, gy).ravel(),
        q0=sc.q0.sample(gx, gy).ravel(),
        q1=np.stack(
            [sc.q1x.sample(gx, gy).ravel(), sc.q1y.sample(gx, gy).ravel()], axis=-1
        ),
    )
    return fv_run(
        sc.ic,
        sc.domain,
        (nx, ny),
        sc.t_final if t_final is None else t_final,
        sources,
        make_ghosts(sc),
    )


def limiter_study_field(
    xi: float, beam_axis=(1.0, 0.0), cross_axis=(0.0, 1.0)
) -> Callable:
    """Smooth moment field sweeping along a chord of the realizable cone.

    Blends a bright state with normalized flux 1 - xi along ``beam_axis``
    and a faint state (1e-6 of the density) with the same flux along
    ``cross_axis``; every value is a convex combination of realizable
    states, with distance to the cone boundary controlled by xi.
    """
    bx, by = beam_axis
    cxx, cxy = cross_axis
    u0 = np.array([1.0, (1.0 - xi) * bx, (1.0 - xi) * by])
    u1 = 1e-6 * np.array([1.0, (1.0 - xi) * cxx, (1.0 - xi) * cxy])

    def field(x, y):
        lam = 0.5 * (np.cos(2.0 * (np.asarray(x) + np.asarray(y)) * np.pi) + 1.0)
        return (1.0 - lam)[..., None] * u0 + lam[..., None] * u1

    return field


def run_limiter_study(cfg: LimiterStudyConfig) -> list[StudyRow]:
    """Project the study field, limit it, and tabulate errors per grid."""
    target = limiter_study_field(cfg.xi, cfg.beam_axis, cfg.cross_axis)
    exact0 = lambda x, y: target(x, y)[..., 0]
    rows: list[StudyRow] = []
    prev = None
    for inv_h in cfg.grids:
        mesh = build_rect_mesh((0.0, 1.0, 0.0, 1.0), 1.0 / inv_h)
        disc = build_discretization(mesh, cfg.k)
        from .dg import project_initial

        fld = project_initial(target, disc)
        fld, report = apply_realizability_limiter(fld)
        e1, einf = diag.error_norms(fld, exact0)
        if prev is None:
            o1 = oinf = float("nan")
        else:
            o1 = diag.convergence_order(prev.e1, e1, 1.0 / prev.inv_h, 1.0 / inv_h)
            oinf = diag.convergence_order(
                prev.einf, einf, 1.0 / prev.inv_h, 1.0 / inv_h
            )
        row = StudyRow(
            inv_h=inv_h, e1=e1, order1=o1, einf=einf, orderinf=oinf,
            theta_max=report.theta_max,
        )
        rows.append(row)
        prev = row
    return rows


def select_m(
    sc: ScenarioConfig,
    reference: FVGrid,
    mesh_kind: str = "rect",
    k: int = 2,
    h: float | None = None,
    characteristic: bool = True,
    realizability: bool = True,
    t_final: float | None = None,
    return_errors: bool = False,
):
    """Sweep the fixed TVB-constant grid and return the best by graded error.

    Each candidate runs the full scenario; a blow-up counts as infinite
    error rather than aborting the sweep.
    """
    xs, ys = reference.centers()
    ref_grid = (xs, ys, reference.dx, reference.dy)
    mode = "characteristic" if characteristic else "primitive"
    errors = {}
    for m in M_GRID:
        limiter = LimiterConfig(slope_mode=mode, m_tvb=m, realizability=realizability)
        try:
            result = run_scenario(
                sc, mesh_kind=mesh_kind, k=k, limiter=limiter, h=h, t_final=t_final
            )
            err, _ = diag.log_sobolev_error(
                result.field, reference.u[..., 0], ref_grid
            )
        except Exception:
            err = float("inf")
        errors[m] = err
    best = min(M_GRID, key=lambda m: errors[m])
    if return_errors:
        return best, errors
    return best
