"""Weighted Dirichlet integrals and the two-phase monotonicity functional

    I(r, v, x0) = int_{B(x0, r)} |grad v|^2 / |x - x0|^(n-2) dx
    phi(r)      = I(r, h1, x0) I(r, h2, x0) / r^4

for complementary nonnegative pairs (h1, h2), typically the positive and
negative parts of a tangential derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Grid, GridError, ScalarField, gradient

COMPLEMENTARITY_SHARE = 1e-3


def full_grid(grid: Grid) -> Grid:
    """The full-ball grid with the same spacing as ``grid``."""
    return Grid(grid.n, grid.N, "full_ball")


def extend_to_full(field: ScalarField) -> ScalarField:
    """Copy a half-domain field onto the full ball, zero for ``x1 < 0``."""
    g = field.grid
    if not g.half:
        return field
    if g.domain_kind != "half_ball":
        raise GridError("only half_ball fields can be extended to the full ball")
    fg = full_grid(g)
    vals = np.where(fg.active, 0.0, np.nan)
    vals[g.N:][g.active] = field.values[g.active]
    return ScalarField(fg, vals)


def split_directional(field: ScalarField, e) -> tuple:
    """Positive and negative parts of ``D_e u`` on the full ball.

    On a half domain ``e`` must be orthogonal to ``e1``: then both parts
    vanish on the plane and are extended by zero to ``x1 < 0``.
    """
    e = np.asarray(e, dtype=float)
    g = field.grid
    if e.shape != (g.n,):
        raise ValueError(f"direction must have {g.n} components")
    if abs(float(np.linalg.norm(e)) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    if g.half and abs(e[0]) > 1e-12:
        raise ValueError("direction must be orthogonal to e1 on a half domain")
    du = gradient(field) @ e
    pos = ScalarField(g, np.where(g.active, np.maximum(du, 0.0), np.nan))
    neg = ScalarField(g, np.where(g.active, np.maximum(-du, 0.0), np.nan))
    return extend_to_full(pos), extend_to_full(neg)


@dataclass
class _Cells:
    """Cell-centre data: squared gradient from the corner differences."""

    grid: Grid
    centers: np.ndarray   # (..., n) for every cell (lower-corner indexed)
    grad2: np.ndarray     # NaN where a corner is inactive


def _cells(v: ScalarField) -> _Cells:
    g = v.grid
    n = g.n
    u = v.values
    cshape = tuple(s - 1 for s in g.shape)
    grad2 = np.zeros(cshape)
    for ax in range(n):
        # average over the 2^(n-1) edges parallel to ax
        acc = np.zeros(cshape)
        others = [a for a in range(n) if a != ax]
        for corner in range(2 ** (n - 1)):
            sl_lo = [None] * n
            sl_hi = [None] * n
            for bit, a in enumerate(others):
                o = (corner >> bit) & 1
                sl_lo[a] = sl_hi[a] = slice(o, o + cshape[a])
            sl_lo[ax] = slice(0, cshape[ax])
            sl_hi[ax] = slice(1, 1 + cshape[ax])
            acc += u[tuple(sl_hi)] - u[tuple(sl_lo)]
        d = acc / (2 ** (n - 1) * g.h)
        grad2 += d * d
    centers = g.coords()[tuple(slice(0, s) for s in cshape)] + 0.5 * g.h
    return _Cells(g, centers, grad2)


def _check_ball(grid: Grid, x0, r: float):
    x0 = np.asarray(x0, dtype=float)
    if r <= 0:
        raise ValueError("radius must be positive")
    if float(np.linalg.norm(x0)) + r > 1.0 + 1e-12:
        raise GridError("ball out of domain")
    if grid.half and x0[0] - r < -1e-12:
        raise GridError("ball out of domain")


def _integral(cells: _Cells, x0: np.ndarray, r: float) -> float:
    g = cells.grid
    d = cells.centers - x0
    dist2 = np.sum(d * d, axis=-1)
    inside = dist2 <= r * r
    if g.n == 3:
        inside &= ~np.all(np.abs(d) <= 0.5 * g.h * (1 + 1e-9), axis=-1)
    vals = cells.grad2[inside]
    if np.any(np.isnan(vals)):
        raise GridError("ball out of domain")
    if g.n == 2:
        w = np.ones_like(vals)
    else:
        w = 1.0 / np.sqrt(dist2[inside])
    return float(np.sum(vals * w)) * g.h ** g.n


def weighted_dirichlet(v: ScalarField, x0, r: float) -> float:
    """Midpoint rule for ``I(r, v, x0)`` over cells whose centre lies in the ball.

    In 3D the cell having ``x0`` in its closure is skipped, which drops an
    ``O(h^2)`` contribution when ``|grad v|`` is bounded.
    """
    _check_ball(v.grid, x0, r)
    return _integral(_cells(v), np.asarray(x0, dtype=float), r)


@dataclass
class MonotonicityScan:
    center: tuple
    radii: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    phi: np.ndarray
    n: int

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")


def phi(h1: ScalarField, h2: ScalarField, x0, radii: Sequence[float],
        eps_g: Optional[float] = None) -> MonotonicityScan:
    """Scan ``phi(r) = I1 I2 / r^4`` over increasing radii."""
    g = h1.grid
    if h2.grid != g:
        raise GridError("fields live on different grids")
    if eps_g is None:
        eps_g = g.h
    act = g.active
    a, b = h1.values[act], h2.values[act]
    if min(a.min(), b.min()) < -1e-12:
        raise ValueError("parts must be nonnegative")
    if np.count_nonzero(a * b > eps_g * eps_g) > COMPLEMENTARITY_SHARE * a.size:
        raise ValueError("not complementary")
    x0 = np.asarray(x0, dtype=float)
    k = g.nearest_index(x0)
    if max(abs(h1.values[k]), abs(h2.values[k])) > eps_g:
        raise ValueError("parts must vanish at the center")
    radii = np.asarray(radii, dtype=float)
    for r in radii:
        _check_ball(g, x0, r)
    c1, c2 = _cells(h1), _cells(h2)
    I1 = np.array([_integral(c1, x0, r) for r in radii])
    I2 = np.array([_integral(c2, x0, r) for r in radii])
    return MonotonicityScan(tuple(float(c) for c in x0), radii, I1, I2, I1 * I2 / radii**4, g.n)


@dataclass(frozen=True)
class MonotoneVerdict:
    monotone: bool
    index: Optional[int] = None

    def __str__(self):
        return "MONOTONE" if self.monotone else f"VIOLATION at index {self.index}"


def monotone_verdict(scan: MonotonicityScan, slack: Optional[float] = None) -> MonotoneVerdict:
    """First index ``k`` with ``phi[k+1] < phi[k] - slack``, if any."""
    p = scan.phi
    if slack is None:
        slack = 0.02 * float(np.max(p)) if len(p) else 0.0
    for k in range(len(p) - 1):
        if p[k + 1] < p[k] - slack:
            return MonotoneVerdict(False, k)
    return MonotoneVerdict(True)


def write_scan_csv(path, scan: MonotonicityScan):
    with open(path, "w") as fh:
        fh.write("r,I1,I2,phi\n")
        for row in zip(scan.radii, scan.I1, scan.I2, scan.phi):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
