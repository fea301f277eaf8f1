"""Red-black SOR kernels for the 5-point Laplacian (2D)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def rb_sweep(u, free, f, h2, omega):
    """One red-black SOR sweep of ``Delta_h u = f`` on ``free`` nodes, in place.

    Returns the largest pre-update residual ``|Delta_h u - f|`` seen.
    """
    n0, n1 = u.shape
    worst = 0.0
    for color in range(2):
        for i in range(1, n0 - 1):
            start = 1 + (i + 1 + color) % 2
            for j in range(start, n1 - 1, 2):
                if not free[i, j]:
                    continue
                s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
                r = (s - 4.0 * u[i, j]) / h2 - f[i, j]
                if abs(r) > worst:
                    worst = abs(r)
                u[i, j] += omega * 0.25 * h2 * r
    return worst


@njit(cache=True)
def residual_max(u, free, f, h2):
    n0, n1 = u.shape
    worst = 0.0
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            if free[i, j]:
                s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
                r = abs((s - 4.0 * u[i, j]) / h2 - f[i, j])
                if r > worst:
                    worst = r
    return worst


def optimal_omega(h: float) -> float:
    return 2.0 / (1.0 + math.sin(math.pi * h))


class InnerDivergence(RuntimeError):
    pass


def sor_solve(u: np.ndarray, free: np.ndarray, f: np.ndarray, h: float, tol: float,
              max_sweeps: int, omega=None, stall: int = 100) -> tuple:
    """Iterate red-black SOR until the residual drops to ``tol``.

    ``u`` holds the Dirichlet values on non-free nodes and is updated in place.
    Returns ``(sweeps, residual)``. Raises :class:`InnerDivergence` when the
    residual grows for ``stall`` consecutive sweeps.
    """
    if omega is None:
        omega = optimal_omega(h)
    h2 = h * h
    free = np.ascontiguousarray(free)
    res = residual_max(u, free, f, h2)
    if res <= tol:
        return 0, res
    growth = 0
    prev = res
    for sweep in range(1, max_sweeps + 1):
        res = rb_sweep(u, free, f, h2, omega)
        if not np.isfinite(res):
            raise InnerDivergence("inner solver diverged")
        growth = growth + 1 if res > prev else 0
        if growth >= stall:
            raise InnerDivergence("inner solver diverged")
        prev = res
        if res <= tol:
            res = residual_max(u, free, f, h2)
            if res <= tol:
                return sweep, res
    return max_sweeps, residual_max(u, free, f, h2)
