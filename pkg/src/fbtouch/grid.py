"""Structured grids on the unit half-ball / ball, grid functions and
finite-difference operators.

Coordinates are always rebuilt from integer indices, so the layer
``x1 = 0`` is represented exactly and ball membership is an integer test.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

DOMAIN_KINDS = ("half_ball", "full_ball", "half_rect")


class GridError(ValueError):
    pass


class Label(enum.IntEnum):
    OMEGA = 0
    LAMBDA = 1
    GAMMA = 2
    GAMMA_STAR = 3


INACTIVE = -1


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid with spacing ``h = 1/N`` and a domain mask.

    Axis 0 is ``x1``, the direction normal to the fixed boundary.
    """

    n: int
    N: int
    domain_kind: str = "half_ball"

    def __post_init__(self):
        if self.domain_kind not in DOMAIN_KINDS:
            raise GridError(f"unknown domain kind {self.domain_kind!r}")
        if self.n not in (2, 3):
            raise GridError("only n = 2 or n = 3 supported")
        if self.N < 2:
            raise GridError("grid too coarse")

    @classmethod
    def from_h(cls, h: float, n: int = 2, domain_kind: str = "half_ball") -> "Grid":
        if h <= 0:
            raise GridError("h must be positive")
        N = int(round(1.0 / h))
        if N < 1 or abs(N * h - 1.0) > 1e-9:
            raise GridError(f"h = {h!r} is not the reciprocal of an integer")
        return cls(n=n, N=N, domain_kind=domain_kind)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def half(self) -> bool:
        return self.domain_kind != "full_ball"

    @property
    def shape(self) -> tuple:
        n1 = self.N + 1 if self.half else 2 * self.N + 1
        return (n1,) + (2 * self.N + 1,) * (self.n - 1)

    @property
    def origin_index(self) -> tuple:
        return ((0 if self.half else self.N),) + (self.N,) * (self.n - 1)

    def offsets(self) -> list:
        """Integer offsets ``index - origin_index`` per axis (open mesh)."""
        axes = [np.arange(s) - o for s, o in zip(self.shape, self.origin_index)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        k = np.indices(self.shape)
        org = np.array(self.origin_index).reshape((self.n,) + (1,) * self.n)
        return np.moveaxis((k - org) * self.h, 0, -1)

    def coord(self, index) -> np.ndarray:
        return (np.asarray(index) - np.asarray(self.origin_index)) * self.h

    def nearest_index(self, x) -> tuple:
        k = np.rint(np.asarray(x, dtype=float) / self.h).astype(int) + np.asarray(self.origin_index)
        return tuple(int(v) for v in k)

    @property
    def active(self) -> np.ndarray:
        return _active_mask(self)

    @property
    def interior(self) -> np.ndarray:
        """Active nodes whose 2n lattice neighbours are all active."""
        return _interior_mask(self)

    @property
    def on_plane(self) -> np.ndarray:
        """Active nodes on the fixed boundary ``x1 = 0``."""
        m = np.zeros(self.shape, dtype=bool)
        m[self.origin_index[0]] = True
        return m & self.active

    @property
    def outer_boundary(self) -> np.ndarray:
        """Active nodes off the plane that carry Dirichlet data (some neighbour inactive)."""
        b = self.active & ~self.interior
        if self.half:
            b &= ~self.on_plane
        return b

    def node_count(self) -> int:
        return int(self.active.sum())

    def header(self) -> str:
        return " ".join([str(self.n), repr(self.h)] + [str(s) for s in self.shape] + [self.domain_kind])


@functools.lru_cache(maxsize=32)
def _active_mask(g: Grid) -> np.ndarray:
    m = _build_active(g)
    m.flags.writeable = False
    return m


def _build_active(g: Grid) -> np.ndarray:
    offs = g.offsets()
    r2 = sum(o * o for o in offs)
    if g.domain_kind == "half_rect":
        return np.ones(g.shape, dtype=bool)
    return np.broadcast_to(r2 <= g.N * g.N, g.shape).copy()


@functools.lru_cache(maxsize=32)
def _interior_mask(g: Grid) -> np.ndarray:
    act = g.active
    inner = act.copy()
    for ax in range(g.n):
        inner &= _shift(act, ax, 1, False) & _shift(act, ax, -1, False)
    inner.flags.writeable = False
    return inner


def _shift(a: np.ndarray, axis: int, step: int, fill):
    """``out[i] = a[i + step]`` along ``axis``, ``fill`` past the edge."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


@dataclass
class ScalarField:
    """Grid function; inactive nodes hold NaN.

    ``base_value`` records ``u(x0)`` when the field is a rescaling.
    """

    grid: Grid
    values: np.ndarray
    base_value: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def from_function(cls, grid: Grid, f) -> "ScalarField":
        """Sample ``f(X)`` where ``X`` has shape ``(..., n)``."""
        vals = np.full(grid.shape, np.nan)
        act = grid.active
        vals[act] = f(grid.coords()[act])
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        vals = np.where(grid.active, 0.0, np.nan)
        return cls(grid, vals)

    def check(self):
        if not np.all(np.isfinite(self.values[self.grid.active])):
            raise GridError("field is not finite at every active node")
        return self

    def at(self, x) -> float:
        return float(self.values[self.grid.nearest_index(x)])

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.active])))

    def _same_grid(self, other: "ScalarField"):
        if other.grid != self.grid:
            raise GridError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _require_resolution(g: Grid):
    if min(g.shape) < 3:
        raise GridError("grid too coarse")


def gradient(field: ScalarField) -> np.ndarray:
    """Per-node gradient, shape ``grid.shape + (n,)``.

    Central differences where both neighbours are active, otherwise
    second-order one-sided differences (first order if only one neighbour
    exists along that axis). NaN at inactive nodes.
    """
    g = field.grid
    _require_resolution(g)
    u = np.where(g.active, field.values, 0.0)
    act = g.active
    h = g.h
    out = np.full(g.shape + (g.n,), np.nan)
    for ax in range(g.n):
        p1, m1 = _shift(act, ax, 1, False), _shift(act, ax, -1, False)
        p2, m2 = _shift(act, ax, 2, False), _shift(act, ax, -2, False)
        up1, um1 = _shift(u, ax, 1, 0.0), _shift(u, ax, -1, 0.0)
        up2, um2 = _shift(u, ax, 2, 0.0), _shift(u, ax, -2, 0.0)
        d = np.zeros(g.shape)
        central = p1 & m1
        fwd2 = ~central & p1 & p2
        bwd2 = ~central & ~fwd2 & m1 & m2
        fwd1 = ~central & ~fwd2 & ~bwd2 & p1
        bwd1 = ~central & ~fwd2 & ~bwd2 & ~fwd1 & m1
        d = np.where(central, (up1 - um1) / (2 * h), d)
        d = np.where(fwd2, (-3 * u + 4 * up1 - up2) / (2 * h), d)
        d = np.where(bwd2, (3 * u - 4 * um1 + um2) / (2 * h), d)
        d = np.where(fwd1, (up1 - u) / h, d)
        d = np.where(bwd1, (u - um1) / h, d)
        out[..., ax] = np.where(act, d, np.nan)
    return out


def grad_norm(field: ScalarField) -> np.ndarray:
    return np.sqrt(np.sum(gradient(field) ** 2, axis=-1))


def laplacian(field: ScalarField) -> ScalarField:
    """Standard (2n+1)-point Laplacian. Defined on ``grid.interior`` only;
    the remaining nodes of the result are NaN."""
    g = field.grid
    _require_resolution(g)
    u = np.where(g.active, field.values, 0.0)
    acc = -2.0 * g.n * u
    for ax in range(g.n):
        acc = acc + _shift(u, ax, 1, 0.0) + _shift(u, ax, -1, 0.0)
    out = np.where(g.interior, acc / g.h**2, np.nan)
    return ScalarField(g, out)


@dataclass
class RegionDecomposition:
    grid: Grid
    labels: np.ndarray
    eps_g: float
    grad_norm: np.ndarray = dc_field(repr=False, default=None)

    def mask(self, *labels: Label) -> np.ndarray:
        return np.isin(self.labels, [int(l) for l in labels])

    @property
    def gamma(self) -> np.ndarray:
        """All free-boundary nodes, contact points included."""
        return self.mask(Label.GAMMA, Label.GAMMA_STAR)

    def gamma_points(self) -> np.ndarray:
        return self.grid.coords()[self.gamma]

    def counts(self) -> dict:
        return {lab.name: int(np.sum(self.labels == lab)) for lab in Label}

    def gamma_fraction(self) -> float:
        """Share of active nodes labelled free boundary (zero-measure proxy)."""
        return float(self.gamma.sum()) / self.grid.node_count()


def decompose_regions(field: ScalarField, eps_g: Optional[float] = None) -> RegionDecomposition:
    """Label nodes OMEGA / LAMBDA / GAMMA / GAMMA_STAR by ``|grad u| > eps_g``.

    Nodes with no active lattice neighbour along some axis (the tips where
    the circle meets an axis) have no gradient information there and are
    never labelled free boundary.
    """
    g = field.grid
    if eps_g is None:
        eps_g = g.h
    if eps_g <= 0:
        raise ValueError("eps_g must be positive")
    gn = grad_norm(field)
    act = g.active
    omega = act & (gn > eps_g)
    lam = act & ~omega
    near = np.zeros(g.shape, dtype=bool)
    for ax in range(g.n):
        near |= _shift(omega, ax, 1, False) | _shift(omega, ax, -1, False)
    labels = np.full(g.shape, INACTIVE, dtype=np.int8)
    labels[omega] = Label.OMEGA
    labels[lam] = Label.LAMBDA
    isolated = np.zeros(g.shape, dtype=bool)
    for ax in range(g.n):
        isolated |= ~(_shift(act, ax, 1, False) | _shift(act, ax, -1, False))
    gam = lam & near & ~isolated
    labels[gam] = Label.GAMMA
    labels[gam & g.on_plane] = Label.GAMMA_STAR
    return RegionDecomposition(g, labels, float(eps_g), gn)


def ball_window(grid: Grid, center, r: float, half: Optional[str] = None):
    """Index window and node mask of the closed ball ``|x - center| <= r``.

    ``half`` restricts to ``x1 >= 0`` ("closed") or ``x1 > 0`` ("open").
    Returns ``(slices, mask)`` with ``mask`` shaped like the window.
    """
    c = np.asarray(center, dtype=float)
    h = grid.h
    org = np.asarray(grid.origin_index)
    lo = np.floor((c - r) / h - 1e-9).astype(int) + org
    hi = np.ceil((c + r) / h + 1e-9).astype(int) + org
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(grid.shape) - 1)
    sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))
    if np.any(hi < lo):
        return sl, np.zeros([0] * grid.n, dtype=bool)
    axes = [(np.arange(a, b + 1) - o) * h - ci for a, b, o, ci in zip(lo, hi, org, c)]
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    d2 = sum(m * m for m in mesh)
    m = (d2 <= r * r * (1 + 1e-12) + 1e-15) & grid.active[sl]
    if half is not None:
        x1 = (np.arange(lo[0], hi[0] + 1) - org[0]).reshape((-1,) + (1,) * (grid.n - 1))
        m = m & ((x1 >= 0) if half == "closed" else (x1 > 0))
    return sl, m


def sup_on_ball(field: ScalarField, center, r: float, half_only: bool = False,
                open_half: bool = False) -> float:
    """Maximum of the field over active nodes in the closed ball ``B(center, r)``."""
    half = ("open" if open_half else "closed") if (half_only or open_half) else None
    sl, m = ball_window(field.grid, center, r, half)
    if not m.any():
        raise GridError("empty ball")
    return float(np.max(field.values[sl][m]))


def in_unit_ball(grid: Grid, center, r: float) -> bool:
    """Whether ``B(center, r)`` lies in the closed unit ball (up to rounding)."""
    return float(np.linalg.norm(center)) + r <= 1.0 + 1e-12


@dataclass(frozen=True)
class ProblemClass:
    """Membership class for local solutions on ``B_r^+`` with sup bound ``M``.

    ``variant`` is one of ``P_plus`` (half ball), ``P_star`` (odd reflected,
    full ball) or ``P_full`` (full ball, no fixed boundary).
    """

    r: float = 1.0
    M: float = 1.0
    variant: str = "P_plus"
    requires_origin_on_gamma: bool = False
    residual_tol: Optional[float] = None

    def __post_init__(self):
        if self.r <= 0 or self.M <= 0:
            raise ValueError("ProblemClass needs r > 0 and M > 0")
        if self.variant not in ("P_plus", "P_star", "P_full"):
            raise ValueError(f"unknown variant {self.variant!r}")


# --- text I/O -------------------------------------------------------------

def write_field(path, field: ScalarField):
    g = field.grid
    idx = np.argwhere(g.active)
    vals = field.values[g.active]
    with open(path, "w") as fh:
        fh.write(g.header() + "\n")
        for k, v in zip(idx, vals):
            fh.write(" ".join(str(int(i)) for i in k) + " " + format(float(v), ".17g") + "\n")


def read_field(path) -> ScalarField:
    with open(path) as fh:
        head = fh.readline().split()
        n = int(head[0])
        h = float(head[1])
        shape = tuple(int(s) for s in head[2:2 + n])
        kind = head[2 + n]
        g = Grid.from_h(h, n=n, domain_kind=kind)
        if g.shape != shape:
            raise GridError(f"field header shape {shape} inconsistent with {kind} at h={h}")
        vals = np.full(g.shape, np.nan)
        data = np.loadtxt(fh, ndmin=2)
    if data.size:
        idx = data[:, :n].astype(int)
        vals[tuple(idx.T)] = data[:, n]
    f = ScalarField(g, vals)
    return f.check()


def write_regions_csv(path, regions: RegionDecomposition):
    idx = np.argwhere(regions.grid.active)
    with open(path, "w") as fh:
        cols = ["i", "j", "k"][: regions.grid.n]
        fh.write(",".join(cols) + ",label\n")
        for k in idx:
            lab = Label(int(regions.labels[tuple(k)])).name
            fh.write(",".join(str(int(i)) for i in k) + f",{lab}\n")
