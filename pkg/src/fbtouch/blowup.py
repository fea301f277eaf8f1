"""Rescaling, odd reflection and the pointwise growth checks on free-boundary nodes."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .grid import (Grid, GridError, Label, RegionDecomposition, ScalarField,
                   ball_window)

STRICT_TOL = 1e-12


def dyadic_radii(h: float, j_max: int = 12, floor_cells: float = 2.0) -> list:
    """``2^-j`` for ``j >= 1`` down to ``floor_cells * h``."""
    return [2.0 ** -j for j in range(1, j_max + 1) if 2.0 ** -j >= floor_cells * h - 1e-15]


# --- rescaling ---------------------------------------------------------------

def interpolate(field: ScalarField, P: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at points ``P`` of shape ``(m, n)``.

    Raises :class:`GridError` when a corner with nonzero weight is inactive.
    """
    g = field.grid
    q = P / g.h + np.asarray(g.origin_index)
    snapped = np.rint(q)
    q = np.where(np.abs(q - snapped) < 1e-9, snapped, q)
    base = np.floor(q).astype(int)
    frac = q - base
    out = np.zeros(len(P))
    hi = np.asarray(g.shape) - 1
    for corner in range(2 ** g.n):
        off = np.array([(corner >> a) & 1 for a in range(g.n)])
        w = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        idx = base + off
        need = w > 0
        outside = np.any((idx < 0) | (idx > hi), axis=1)
        if np.any(need & outside):
            raise GridError("rescaled domain leaves the source grid")
        idx = np.clip(idx, 0, hi)
        vals = field.values[tuple(idx.T)]
        if np.any(need & ~g.active[tuple(idx.T)]):
            raise GridError("rescaled domain leaves the source grid")
        out += np.where(need, w * np.nan_to_num(vals), 0.0)
    return out


def rescale(field: ScalarField, x0, r: float, target: Grid) -> ScalarField:
    """``u_r(x) = (u(r x + x0) - u(x0)) / r^2`` sampled on ``target``."""
    g = field.grid
    x0 = np.asarray(x0, dtype=float)
    k = g.nearest_index(x0)
    if (not all(0 <= a < s for a, s in zip(k, g.shape)) or not g.active[k]
            or np.max(np.abs(g.coord(k) - x0)) > 1e-9 * g.h):
        raise GridError("base point must be an active node")
    if r <= 0:
        raise ValueError("r must be positive")
    base = float(field.values[k])
    act = target.active
    vals = np.full(target.shape, np.nan)
    vals[act] = (interpolate(field, r * target.coords()[act] + x0) - base) / (r * r)
    return ScalarField(target, vals, base_value=base)


def odd_reflect(field: ScalarField) -> ScalarField:
    """Extend a half-ball field to the full ball by ``u(-x1, x') = -u(x1, x')``."""
    g = field.grid
    if g.domain_kind != "half_ball":
        raise GridError("odd reflection needs a half_ball field")
    trace = field.values[g.on_plane]
    if np.any(np.abs(trace) > 1e-12):
        raise ValueError("boundary condition violated")
    fg = Grid(g.n, g.N, "full_ball")
    vals = np.full(fg.shape, np.nan)
    vals[g.N:] = field.values
    vals[:g.N + 1] = -field.values[::-1]
    vals[g.N] = field.values[0] * 0.0
    vals = np.where(fg.active, vals, np.nan)
    return ScalarField(fg, vals)


# --- growth checks -------------------------------------------------------------

def _gamma_nodes(regions: RegionDecomposition) -> np.ndarray:
    return np.argwhere(regions.gamma)


def _sup_ball(field: ScalarField, center, r, half) -> Optional[float]:
    sl, m = ball_window(field.grid, center, r, half)
    if not m.any():
        return None
    return float(np.max(field.values[sl][m]))


def _fits(grid: Grid, x0: np.ndarray, r: float) -> bool:
    return float(np.linalg.norm(x0)) + r <= 1.0 + 1e-12


@dataclass
class MarginReport:
    rows: list = dc_field(default_factory=list)   # (index tuple, r, margin)

    @property
    def min_margin(self) -> Optional[float]:
        return min((m for _, _, m in self.rows), default=None)

    @property
    def witness(self):
        if not self.rows:
            return None
        return min(self.rows, key=lambda row: row[2])

    def violations(self, tol: float = STRICT_TOL) -> list:
        return [row for row in self.rows if row[2] <= tol]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x0_i,x0_j,r,margin\n")
            for idx, r, m in self.rows:
                fh.write(f"{idx[0]},{idx[1]},{format(r, '.17g')},{format(m, '.17g')}\n")


def nondegeneracy_check(field: ScalarField, regions: RegionDecomposition, radii: Sequence[float],
                        c_pos: Optional[float] = None, c_neg: Optional[float] = None) -> MarginReport:
    """Margins ``sup_{B+(x0,r)} u - u(x0) - c r^2`` at free-boundary nodes.

    Nodes with ``u(x0) >= 0`` use ``c_pos = 1/(2n)`` over the open half ball;
    nodes with ``u(x0) < 0`` use ``c_neg = 1/(4n)`` and only radii whose full
    ball stays inside the half ball.
    """
    g = field.grid
    n = g.n
    c_pos = 1.0 / (2 * n) if c_pos is None else c_pos
    c_neg = 1.0 / (4 * n) if c_neg is None else c_neg
    report = MarginReport()
    for k in _gamma_nodes(regions):
        idx = tuple(int(v) for v in k)
        x0 = g.coord(idx)
        u0 = float(field.values[idx])
        for r in radii:
            if not _fits(g, x0, r):
                continue
            if u0 >= 0:
                s = _sup_ball(field, x0, r, "open" if g.half else None)
                c = c_pos
            else:
                if g.half and x0[0] - r < -1e-12:
                    continue
                s = _sup_ball(field, x0, r, None)
                c = c_neg
            if s is None:
                continue
            report.rows.append((idx, float(r), s - u0 - c * r * r))
    return report


def patch_growth_check(field: ScalarField, regions: RegionDecomposition, r: float) -> MarginReport:
    """Margins ``sup_{B+(x0,r)} u - u(x0)``; a margin at most 1e-12 is a violation."""
    g = field.grid
    report = MarginReport()
    for k in _gamma_nodes(regions):
        idx = tuple(int(v) for v in k)
        x0 = g.coord(idx)
        s = _sup_ball(field, x0, r, "open" if g.half else None)
        if s is None:
            continue
        report.rows.append((idx, float(r), s - float(field.values[idx])))
    return report


@dataclass
class DyadicGrowthReport:
    z: tuple
    levels: list
    S: list
    M: float
    C0_fit: float
    violations: list

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("j,S_j\n")
            for j, s in zip(self.levels, self.S):
                fh.write(f"{j},{format(s, '.17g')}\n")


def dyadic_growth(field: ScalarField, z, j_max: Optional[int] = None, M: Optional[float] = None,
                  C0: float = 10.0, min_nodes: int = 10) -> DyadicGrowthReport:
    """``S_j = max_{B_{2^-j}(z)} |u - u(z)|`` and the two-branch growth test.

    ``C0_fit`` is the smallest constant for which every level with
    ``S_{j+1} > S_j / 4`` satisfies ``S_{j+1} <= C0 M 4^-j``. Half-ball fields
    are odd-reflected first so that balls may cross the plane.
    """
    g = field.grid
    full = odd_reflect(field) if g.domain_kind == "half_ball" else field
    fg = full.grid
    z = np.asarray(z, dtype=float)
    if not _fits(fg, z, 0.5):
        raise GridError("ball out of domain")
    if M is None:
        M = full.sup_abs()
    uz = float(full.values[fg.nearest_index(z)])
    levels, S = [], []
    j = 1
    while j_max is None or j <= j_max:
        sl, m = ball_window(fg, z, 2.0 ** -j)
        if m.sum() < min_nodes:
            break
        levels.append(j)
        S.append(float(np.max(np.abs(full.values[sl][m] - uz))))
        j += 1
    fit = 0.0
    bad = []
    for k in range(len(S) - 1):
        j = levels[k]
        quarter = S[k] / 4.0
        if S[k + 1] > quarter * (1 + 1e-12) + 1e-300:
            if M > 0:
                fit = max(fit, S[k + 1] * 4.0 ** j / M)
            if S[k + 1] > C0 * M * 4.0 ** -j:
                bad.append(j + 1)
    return DyadicGrowthReport(tuple(float(c) for c in z), levels, S, float(M), fit, bad)


def quadratic_growth_check(field: ScalarField, regions: RegionDecomposition, M: Optional[float] = None,
                           reach: float = 0.25, radius: float = 0.5) -> tuple:
    """``C_fit = max |u(x) - u(z)| / (M d^2)`` over nodes of ``B_radius`` with
    ``0 < d <= reach``, ``z`` the nearest free-boundary node and ``d`` its distance.

    Returns ``(C_fit, witness_index)``.
    """
    g = field.grid
    gam = _gamma_nodes(regions)
    if len(gam) == 0:
        return 0.0, None
    if M is None:
        M = field.sup_abs()
    if M == 0:
        return 0.0, None
    X = g.coords()
    cand = g.active & (np.sum(X * X, axis=-1) <= radius * radius * (1 + 1e-12)) & ~regions.gamma
    idx = np.argwhere(cand)
    P = X[cand]
    tree = cKDTree(X[regions.gamma])
    d, near = tree.query(P)
    ok = (d > 0) & (d <= reach)
    if not ok.any():
        return 0.0, None
    gv = field.values[regions.gamma]
    ratio = np.abs(field.values[cand][ok] - gv[near[ok]]) / (M * d[ok] ** 2)
    k = int(np.argmax(ratio))
    return float(ratio[k]), tuple(int(v) for v in idx[ok][k])


def hessian_bound_check(field: ScalarField, radius: float = 0.5) -> float:
    """Largest second-difference quotient over nodes of ``B+_radius`` off the plane."""
    g = field.grid
    if g.h > 1.0 / 64 + 1e-15:
        raise GridError("hessian check needs h <= 1/64")
    X = g.coords()
    u = field.values
    h = g.h
    sel = g.active & (np.sum(X * X, axis=-1) <= radius * radius * (1 + 1e-12))
    if g.half:
        sel &= X[..., 0] > 0
    best = 0.0
    n = g.n
    for a in range(n):
        for b in range(a, n):
            q = np.full(g.shape, np.nan)
            core = [slice(1, -1)] * n
            if a == b:
                lo, hi = list(core), list(core)
                lo[a] = slice(0, -2)
                hi[a] = slice(2, None)
                q[tuple(core)] = (u[tuple(hi)] - 2 * u[tuple(core)] + u[tuple(lo)]) / (h * h)
            else:
                def sl(sa, sb):
                    s = list(core)
                    s[a] = slice(1 + sa, g.shape[a] - 1 + sa)
                    s[b] = slice(1 + sb, g.shape[b] - 1 + sb)
                    return tuple(s)
                q[tuple(core)] = (u[sl(1, 1)] - u[sl(1, -1)] - u[sl(-1, 1)] + u[sl(-1, -1)]) / (4 * h * h)
            vals = q[sel]
            vals = vals[np.isfinite(vals)]
            if vals.size:
                best = max(best, float(np.max(np.abs(vals))))
    return best


def fb_measure_estimate(regions: RegionDecomposition) -> float:
    return regions.gamma_fraction()
