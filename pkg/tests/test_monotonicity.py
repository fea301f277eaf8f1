import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import ACF_PAIRS, acf_scan
from fbtouch.catalog import GlobalSolution, sample
from fbtouch.grid import Grid, GridError, ScalarField
from fbtouch.monotonicity import (MonotonicityScan, extend_to_full, monotone_verdict, phi,
                                  split_directional, weighted_dirichlet, write_scan_csv)

RADII = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]


def full(N, f, n=2):
    return ScalarField.from_function(Grid.from_h(1 / N, n=n, domain_kind="full_ball"), f)


def cap_area(r, t):
    """Area of {x2 > t} inside the disc of radius r (closed form)."""
    if t >= r:
        return 0.0
    return r * r * math.acos(t / r) - t * math.sqrt(r * r - t * t)


# --- split -----------------------------------------------------------------------------

def test_split_of_plane_profile_vanishes():
    u = sample(GlobalSolution("HalfSpacePoly"), Grid.from_h(1 / 32))
    pos, neg = split_directional(u, (0.0, 1.0))
    assert pos.grid.domain_kind == "full_ball"
    assert np.nanmax(pos.values) == 0.0 and np.nanmax(neg.values) == 0.0


def test_split_of_harmonic_product_on_half_ball():
    grid = Grid.from_h(1 / 32)
    u = ScalarField.from_function(grid, lambda X: X[..., 0] * X[..., 1])
    pos, neg = split_directional(u, (0.0, 1.0))
    X = pos.grid.coords()
    # the tip (1, 0) has no x2 neighbour on the lattice
    act = pos.grid.active & (np.linalg.norm(X, axis=-1) < 1 - 1e-12)
    assert np.allclose(pos.values[act], np.maximum(X[act][:, 0], 0.0), atol=1e-13)
    assert np.nanmax(neg.values) == 0.0


def test_split_of_linear_part_has_disjoint_supports():
    u = full(32, lambda X: 0.5 * X[..., 1] ** 2)
    pos, neg = split_directional(u, (0.0, 1.0))
    act = pos.grid.active
    X = pos.grid.coords()[act]
    assert np.allclose(pos.values[act], np.maximum(X[:, 1], 0), atol=1e-13)
    assert np.allclose(neg.values[act], np.maximum(-X[:, 1], 0), atol=1e-13)
    assert np.all(pos.values[act] * neg.values[act] == 0)


def test_split_rejects_bad_directions():
    u = sample(GlobalSolution("HalfSpacePoly"), Grid.from_h(1 / 16))
    with pytest.raises(ValueError, match="unit vector"):
        split_directional(u, (0.0, 2.0))
    with pytest.raises(ValueError):
        split_directional(u, (1.0, 0.0))
    with pytest.raises(ValueError):
        split_directional(u, (1.0, 0.0, 0.0))


def test_extension_is_zero_below_the_plane():
    u = sample(GlobalSolution("OneSidedPositive", b=0.0), Grid.from_h(1 / 16))
    ext = extend_to_full(u)
    X = ext.grid.coords()
    below = ext.grid.active & (X[..., 0] < 0)
    assert np.all(ext.values[below] == 0)
    assert extend_to_full(ext) is ext


# --- weighted Dirichlet integral ----------------------------------------------------------

def test_integral_of_half_plane_ramp():
    assert weighted_dirichlet(full(128, lambda X: np.maximum(X[..., 1], 0)), (0, 0), 0.5) == \
        pytest.approx(math.pi * 0.125, rel=0.02)


def test_integral_of_half_plane_ramp_by_quadrature():
    # scipy oracle over the half disc
    val, _ = integrate.dblquad(lambda y, x: 1.0, -0.5, 0.5, 0.0, lambda x: math.sqrt(0.25 - x * x))
    assert weighted_dirichlet(full(128, lambda X: np.maximum(X[..., 1], 0)), (0, 0), 0.5) == \
        pytest.approx(val, rel=0.02)


def test_integral_of_zero():
    assert weighted_dirichlet(full(16, lambda X: 0 * X[..., 0]), (0, 0), 0.5) == 0.0


def test_integral_of_squared_norm():
    v = full(128, lambda X: X[..., 0] ** 2 + X[..., 1] ** 2)
    # polar oracle: int_0^r 4 rho^2 2 pi rho d rho = 2 pi r^4
    assert weighted_dirichlet(v, (0, 0), 0.5) == pytest.approx(2 * math.pi * 0.5**4, rel=0.02)


def test_integral_in_three_dimensions():
    v = full(32, lambda X: np.maximum(X[..., 1], 0), n=3)
    # int over half ball of 1/|x| = (1/2) int_0^r 4 pi rho d rho = pi r^2
    assert weighted_dirichlet(v, (0, 0, 0), 0.5) == pytest.approx(math.pi * 0.25, rel=0.02)


def test_integral_out_of_domain():
    v = full(16, lambda X: X[..., 1])
    with pytest.raises(GridError, match="ball out of domain"):
        weighted_dirichlet(v, (0.5, 0.0), 0.6)
    half = ScalarField.from_function(Grid.from_h(1 / 16), lambda X: X[..., 1])
    with pytest.raises(GridError, match="ball out of domain"):
        weighted_dirichlet(half, (0.1, 0.0), 0.2)


# --- phi ----------------------------------------------------------------------------------

def test_phi_of_complementary_ramps_is_constant():
    u = full(256, lambda X: 0.5 * X[..., 1] ** 2)
    scan = phi(*split_directional(u, (0, 1)), (0, 0), RADII)
    assert np.allclose(scan.phi, math.pi**2 / 4, rtol=0.02)
    assert np.ptp(scan.phi) / np.mean(scan.phi) < 0.01
    assert np.array_equal(scan.phi, scan.I1 * scan.I2 / scan.radii**4)


def test_phi_with_a_vanishing_part():
    h1 = full(64, lambda X: np.maximum(X[..., 1], 0))
    h2 = full(64, lambda X: 0 * X[..., 0])
    scan = phi(h1, h2, (0, 0), RADII)
    assert np.all(scan.phi == 0)
    assert monotone_verdict(scan).monotone


@pytest.mark.parametrize("N", [128, 256])
def test_phi_of_shifted_cap_increases(N):
    h1 = full(N, lambda X: np.maximum(X[..., 1] - 0.1, 0))
    h2 = full(N, lambda X: np.maximum(-X[..., 1], 0))
    scan = phi(h1, h2, (0, 0), RADII)
    exact = np.array([cap_area(r, 0.1) * math.pi * r * r / 2 / r**4 for r in RADII])
    assert np.allclose(scan.phi, exact, rtol=0.03)
    assert np.all(np.diff(exact) > 0)
    assert np.all(np.diff(scan.phi) > 0)
    assert monotone_verdict(scan).monotone


def test_phi_preconditions():
    h1 = full(32, lambda X: np.maximum(X[..., 1], 0))
    with pytest.raises(ValueError, match="not complementary"):
        phi(h1, h1, (0, 0), [0.5])
    with pytest.raises(ValueError, match="nonnegative"):
        phi(h1, full(32, lambda X: -np.abs(X[..., 1])), (0, 0), [0.5])
    shifted = full(32, lambda X: np.maximum(X[..., 1] + 0.5, 0) * (X[..., 1] >= 0))
    with pytest.raises(ValueError, match="vanish at the center"):
        phi(shifted, full(32, lambda X: 0 * X[..., 0]), (0, 0), [0.5])
    with pytest.raises(GridError):
        phi(h1, full(16, lambda X: 0 * X[..., 0]), (0, 0), [0.5])


@settings(max_examples=15)
@given(st.floats(0.2, 0.6), st.floats(1.2, 2.0))
def test_phi_is_scale_covariant(r, lam):
    # phi(r; h) = phi(r / lam; h(lam x) / lam) for the cap pair
    f1 = lambda X, s=1.0: np.maximum(s * X[..., 1] - 0.1, 0) / s
    f2 = lambda X, s=1.0: np.maximum(-s * X[..., 1], 0) / s
    base = phi(full(256, f1), full(256, f2), (0, 0), [r]).phi[0]
    scaled = phi(full(256, lambda X: f1(X, lam)), full(256, lambda X: f2(X, lam)), (0, 0), [r / lam]).phi[0]
    assert scaled == pytest.approx(base, rel=0.02)


def test_phi_is_nonnegative(rng):
    for _ in range(5):
        c = rng.uniform(-0.2, 0.2)
        h1 = full(64, lambda X: np.maximum(X[..., 1] - c * X[..., 0], 0))
        h2 = full(64, lambda X: np.maximum(c * X[..., 0] - X[..., 1], 0))
        assert np.all(phi(h1, h2, (0, 0), RADII).phi >= 0)


# --- verdicts ---------------------------------------------------------------------------

def test_verdicts():
    flat = MonotonicityScan((0, 0), [0.2, 0.4, 0.6], [1, 1, 1], [1, 1, 1], np.array([2.4674] * 3), 2)
    assert str(monotone_verdict(flat)) == "MONOTONE"
    reversed_ = MonotonicityScan((0, 0), [0.2, 0.4, 0.6], [1, 1, 1], [1, 1, 1], np.array([3.0, 2.0, 1.0]), 2)
    v = monotone_verdict(reversed_)
    assert not v.monotone and v.index == 0 and str(v) == "VIOLATION at index 0"
    assert monotone_verdict(reversed_, slack=5.0).monotone


def test_scan_needs_increasing_radii():
    with pytest.raises(ValueError):
        MonotonicityScan((0, 0), [0.4, 0.2], [0, 0], [0, 0], np.zeros(2), 2)


@pytest.mark.parametrize("pair", ACF_PAIRS, ids=[p[0] for p in ACF_PAIRS])
def test_acf_verdict_is_stable_under_refinement(pair):
    coarse = monotone_verdict(acf_scan(pair, 128))
    fine = monotone_verdict(acf_scan(pair, 256))
    assert coarse.monotone and fine.monotone


def test_scan_csv(tmp_path):
    scan = MonotonicityScan((0, 0), [0.5], [0.25], [0.5], np.array([2.0]), 2)
    write_scan_csv(tmp_path / "s.csv", scan)
    assert (tmp_path / "s.csv").read_text() == "r,I1,I2,phi\n0.5,0.25,0.5,2\n"
