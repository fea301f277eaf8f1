import functools

import numpy as np
import pytest
from hypothesis import settings

from fbtouch import catalog
from fbtouch.grid import Grid
from fbtouch.solver import Pinch, ProblemSpec, Wedge, solve

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

RUNS = {
    "b1": catalog.GlobalSolution("OneSidedPositive", b=0.25),
    "b2": catalog.GlobalSolution("OneSidedNegative", a=0.25),
    "poly": catalog.GlobalSolution("HalfSpacePoly", a=0.3, alpha=0.1),
    "wedge": Wedge(0.3, 0.0),
    "pinch": Pinch(),
}


@functools.lru_cache(maxsize=None)
def solved(name: str, N: int, theta: float = 1.0):
    """Solver run for one of the named boundary data, shared across tests."""
    return solve(ProblemSpec(Grid.from_h(1.0 / N), RUNS[name], theta=theta))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _unit(t):
    return (float(np.cos(t)), float(np.sin(t)))


def _x1x2(X):
    return X[..., 0] * X[..., 1]


# (label, field, domain, direction, center) for directional-derivative pairs
# whose parts are subharmonic with disjoint supports
ACF_PAIRS = [
    ("x1x2-e1", _x1x2, "full_ball", (1.0, 0.0), (0.0, 0.0)),
    ("x1x2-e2", _x1x2, "full_ball", (0.0, 1.0), (0.0, 0.0)),
    ("x1x2-30deg", _x1x2, "full_ball", _unit(np.pi / 6), (0.0, 0.0)),
    ("x1x2-60deg", _x1x2, "full_ball", _unit(np.pi / 3), (0.0, 0.0)),
    ("poly-e2", catalog.GlobalSolution("HalfSpacePoly", a=0.5), "full_ball", (0.0, 1.0), (0.0, 0.0)),
    ("poly-half-e2", catalog.GlobalSolution("HalfSpacePoly", a=0.5, alpha=0.1), "half_ball", (0.0, 1.0), (0.0, 0.0)),
    ("poly-e1", catalog.GlobalSolution("HalfSpacePoly", a=0.5, alpha=0.1), "full_ball", (1.0, 0.0), (0.0, -0.2)),
    ("two-sided-mid", catalog.GlobalSolution("TwoSided", a=0.2, b=0.5), "full_ball", (1.0, 0.0), (0.35, 0.0)),
    ("two-sided-knot", catalog.GlobalSolution("TwoSided", a=0.1, b=0.3), "full_ball", (1.0, 0.0), (0.1, 0.0)),
    ("one-sided-knot", catalog.GlobalSolution("OneSidedPositive", b=0.25), "full_ball", (1.0, 0.0), (0.25, 0.0)),
]


def acf_scan(pair, N):
    """phi over r = 0.2, 0.3, ... inside the unit ball for one of ACF_PAIRS."""
    from fbtouch.grid import ScalarField
    from fbtouch.monotonicity import phi, split_directional

    _, f, kind, e, x0 = pair
    grid = Grid.from_h(1.0 / N, domain_kind=kind)
    if isinstance(f, catalog.GlobalSolution):
        u = catalog.sample(f, grid)
    else:
        u = ScalarField.from_function(grid, f)
    h1, h2 = split_directional(u, e)
    reach = 1.0 - float(np.linalg.norm(x0))
    radii = [r / 10 for r in range(2, 9) if r / 10 <= reach - 0.05]
    return phi(h1, h2, x0, radii)
