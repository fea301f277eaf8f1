"""Finite-difference solver for ``Delta u = chi_{|grad u| != 0}`` on the 2D half-ball.

The discrete problem is posed as the complementarity system

    u >= c,   Delta_h u <= 1,   (u - c) (1 - Delta_h u) = 0,

with ``c = min(0, min of the Dirichlet data)``. Its solutions have
``Delta_h u = 1`` on the non-coincidence set and a flat patch ``u = c``
elsewhere, and they solve the free boundary problem. The system is solved by
a primal-dual active-set iteration whose linear Dirichlet subproblems are
handled by red-black SOR.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Optional, Union

import numpy as np

from . import catalog
from ._sor import InnerDivergence, sor_solve
from .grid import (Grid, Label, ProblemClass, RegionDecomposition, ScalarField, _shift,
                   decompose_regions, grad_norm)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Wedge:
    """Boundary data ``((x1 - c|x2| - b)_+)^2 / 2``; with ``b = 0`` its
    support is a wedge with vertex at the origin."""

    c: float
    b: float = 0.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        t = X[..., 0] - self.c * np.abs(X[..., 1]) - self.b
        return 0.5 * np.maximum(t, 0.0) ** 2


@dataclass(frozen=True)
class Pinch:
    """Boundary data ``(x1^2/2 + alpha x1 - k x1 x2^2)_+``, even in ``x2``.

    For ``alpha`` near its critical value the coincidence set consists of
    two thin strips along the plane that pinch off at the origin, so the
    origin is a contact point. ``k = 4, alpha = 0.515`` is critical to
    within a grid cell for ``h`` in {1/128, 1/256}.
    """

    k: float = 4.0
    alpha: float = 0.515

    def __call__(self, X: np.ndarray) -> np.ndarray:
        x1, x2 = X[..., 0], X[..., 1]
        return np.maximum(0.5 * x1 * x1 + self.alpha * x1 - self.k * x1 * x2 * x2, 0.0)


BoundaryData = Union[catalog.GlobalSolution, Wedge, Pinch, ScalarField]


def boundary_values(data: BoundaryData, grid: Grid) -> np.ndarray:
    """Dirichlet data evaluated at every active node (callers use the boundary part)."""
    if isinstance(data, catalog.GlobalSolution):
        return catalog.sample(data, grid).values
    if isinstance(data, ScalarField):
        if data.grid != grid:
            raise ValueError("boundary data field lives on a different grid")
        return data.values.copy()
    return ScalarField.from_function(grid, data).values


@dataclass
class ProblemSpec:
    grid: Grid
    boundary_data: BoundaryData
    eps_g: Optional[float] = None
    theta: float = 1.0
    tol: Optional[float] = None
    max_outer: int = 200
    max_inner: int = 50000

    def __post_init__(self):
        if self.grid.domain_kind != "half_ball" or self.grid.n != 2:
            raise ValueError("the solver works on the 2D half-ball only")
        if self.eps_g is None:
            self.eps_g = self.grid.h
        if self.tol is None:
            self.tol = default_tol(self.grid.h)
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        g = boundary_values(self.boundary_data, self.grid)
        ends = [self.grid.nearest_index((0.0, s)) for s in (-1.0, 1.0)]
        if any(abs(g[k]) > 1e-12 for k in ends):
            raise ValueError("boundary data must vanish where the circle meets x1 = 0")


def default_tol(h: float) -> float:
    """Fixed-point tolerance, two orders below the h^2 truncation scale."""
    return 1e-2 * h * h


@dataclass
class SolveReport:
    field: ScalarField
    regions: RegionDecomposition
    outer_iters: int
    mask_changes: list
    residuals: list
    final_residual: float
    converged: bool
    patch_level: float = 0.0
    inner_sweeps: list = dc_field(default_factory=list)

    @property
    def omega_mask(self) -> np.ndarray:
        return self.regions.mask(Label.OMEGA)


def solve(spec: ProblemSpec, initial: Optional[ScalarField] = None) -> SolveReport:
    """Active-set fixed point for the half-ball problem.

    Starts from the full mask (``Delta_h v = 1`` at every interior node) unless
    ``initial`` is given, in which case the first mask is computed from it.
    Each outer step fixes the patch nodes at ``c``, solves the Dirichlet
    problem on the rest, damps with ``theta`` and recomputes the mask. Stops
    when the mask is unchanged and the sup-norm update is at most ``tol``.
    """
    grid = spec.grid
    h = grid.h
    act = grid.active
    interior = grid.interior
    data = boundary_values(spec.boundary_data, grid)
    fixed = act & ~interior
    c = min(0.0, float(np.min(data[fixed])))

    u = np.zeros(grid.shape)
    u[fixed] = data[fixed]
    u[grid.on_plane] = 0.0
    ones = np.where(interior, 1.0, 0.0)
    inner_tol = spec.tol / 10
    gamma = 4.0 / (h * h)

    sweeps_log = []
    if initial is None:
        patch = np.zeros(grid.shape, dtype=bool)
        sweeps, _ = sor_solve(u, interior.copy(), ones, h, inner_tol, spec.max_inner)
        sweeps_log.append(sweeps)
    else:
        if initial.grid != grid:
            raise ValueError("initial field lives on a different grid")
        u[interior] = initial.values[interior]
        patch = None

    mask_changes, residuals = [], []
    converged = False
    it = 0
    for it in range(1, spec.max_outer + 1):
        lam = 1.0 - _lap(u, h)
        new_patch = interior & (lam + gamma * (c - u) > 0)
        changes = int(np.sum(new_patch != patch)) if patch is not None else 0
        patch = new_patch

        v = u.copy()
        v[patch] = c
        free = interior & ~patch
        sweeps, _ = sor_solve(v, free, ones, h, inner_tol, spec.max_inner)
        sweeps_log.append(sweeps)
        new_u = (1.0 - spec.theta) * u + spec.theta * v
        delta = float(np.max(np.abs(new_u - u)[act]))
        u = new_u
        mask_changes.append(changes)
        residuals.append(delta)
        log.debug("outer %d: mask changes %d, update %.3e, sweeps %d", it, changes, delta, sweeps)
        if changes == 0 and delta <= spec.tol:
            converged = True
            break

    vals = np.where(act, u, np.nan)
    fld = ScalarField(grid, vals)
    regions = decompose_regions(fld, spec.eps_g)
    return SolveReport(fld, regions, it, mask_changes, residuals,
                       residuals[-1] if residuals else 0.0, converged, c, sweeps_log)


def _lap(u: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = (u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
                       - 4.0 * u[1:-1, 1:-1]) / (h * h)
    return out


# --- membership -----------------------------------------------------------

@dataclass
class MembershipVerdict:
    items: dict

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.items.values())

    def failed(self) -> list:
        return [k for k, (ok, _) in self.items.items() if not ok]


def origin_on_gamma(regions: RegionDecomposition, tol_cells: float = 2.0) -> bool:
    """A free-boundary node within ``2h`` of the origin."""
    g = regions.grid
    pts = regions.gamma_points()
    if len(pts) == 0:
        return False
    return bool(np.min(np.linalg.norm(pts, axis=1)) <= tol_cells * g.h * (1 + 1e-12))


def default_residual_tol(h: float) -> float:
    """Weak-residual budget, linear in h (the chi term is only O(h) accurate)."""
    return 0.25 * h


def verify_membership(field: ScalarField, cls: ProblemClass, eps_g: Optional[float] = None,
                      regions: Optional[RegionDecomposition] = None) -> MembershipVerdict:
    """Itemised check of the class conditions on ``B_r^+``."""
    grid = field.grid
    if eps_g is None:
        eps_g = grid.h
    X = grid.coords()
    act = grid.active
    items = {}

    plane = grid.on_plane
    trace = float(np.max(np.abs(field.values[plane]))) if plane.any() else 0.0
    items["trace"] = (trace <= 1e-10, trace)

    inside = act & (np.sum(X**2, axis=-1) <= cls.r**2 * (1 + 1e-12))
    sup = float(np.max(np.abs(field.values[inside])))
    items["sup_norm"] = (sup <= cls.M, sup)

    tol = cls.residual_tol if cls.residual_tol is not None else default_residual_tol(grid.h)
    res = catalog.residual_check(field, test_bumps=catalog.default_bumps(cls.r, grid.n))
    items["equation"] = (res <= tol, res)

    if cls.requires_origin_on_gamma:
        if regions is None:
            regions = decompose_regions(field, eps_g)
        items["origin_on_gamma"] = (origin_on_gamma(regions), 0.0)
    return MembershipVerdict(items)


REACH = 2.0


def extract_free_boundary(report: SolveReport) -> np.ndarray:
    """Free-boundary points: contact nodes on the plane plus sub-grid points.

    Near the free boundary ``u - c`` behaves like ``d^2/2`` (``c`` the patch
    level, ``d`` the distance), so ``sqrt(2(u - c))`` is linear in the
    distance along any lattice direction. For each edge from a non-OMEGA
    node to an OMEGA node ``b`` it is extrapolated from ``b`` and the next
    OMEGA node to its zero; the point is kept when the zero lies at most
    ``REACH`` cells behind ``b``, otherwise the edge does not cross the free
    boundary. Without a second OMEGA node the point falls back to the
    ``|grad_h u| = eps_g`` crossing on the edge.
    """
    regions = report.regions
    g = regions.grid
    X = g.coords()
    if not regions.gamma.any():
        return np.zeros((0, g.n))
    act = g.active
    gn = regions.grad_norm
    if gn is None:
        gn = grad_norm(report.field)
    gn = np.where(act, gn, 0.0)
    u = np.where(act, report.field.values, report.patch_level)
    dist = np.sqrt(2.0 * np.maximum(u - report.patch_level, 0.0))
    eps = regions.eps_g
    om = regions.mask(Label.OMEGA)
    lam = act & ~om
    pts = [X[regions.mask(Label.GAMMA_STAR)]]
    for ax in range(g.n):
        for step in (1, -1):
            edge = lam & _shift(om, ax, step, False)
            if not edge.any():
                continue
            xb = X[edge]
            xb[:, ax] += step * g.h
            d1 = _shift(dist, ax, step, 0.0)[edge]
            d2 = _shift(dist, ax, 2 * step, 0.0)[edge]
            far = _shift(om, ax, 2 * step, False)[edge] & (d2 > d1)
            with np.errstate(divide="ignore", invalid="ignore"):
                back = np.where(far, d1 / (d2 - d1), np.inf)
            keep = far & (back <= REACH)
            p = xb[keep].copy()
            p[:, ax] -= step * g.h * back[keep]
            if g.half:
                p[:, 0] = np.maximum(p[:, 0], 0.0)
            pts.append(p)
            # fallback: threshold crossing between the two edge nodes
            rest = ~far
            if rest.any():
                ga = gn[edge][rest]
                gb = _shift(gn, ax, step, 0.0)[edge][rest]
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.clip(np.where(gb > ga, (eps - ga) / (gb - ga), 0.0), 0.0, 1.0)
                q = X[edge][rest].copy()
                q[:, ax] += step * g.h * t
                pts.append(q)
    return np.concatenate(pts, axis=0)
