"""Slope profile of free-boundary points near a contact point at the origin.

For points ``p`` of the free boundary the profile is

    s(r) = max { p1 / |p| : 4h <= |p| <= r },

and the cone ``K_eps = {x1 > eps |x'|}`` test asks whether any such point
with ``|p| <= rho`` lies inside ``K_eps``. Nothing is claimed below the
resolution floor ``4h``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

FLOOR_CELLS = 4.0
CONTACT_CELLS = 2.0
DEFAULT_EPS = (1.0, 0.5, 0.25, 0.125, 0.0625)


class HypothesisError(ValueError):
    """The origin is not a free-boundary point of the input."""


@dataclass
class TangencyReport:
    h: float
    radii: np.ndarray              # strictly decreasing
    slopes: np.ndarray
    r0: Optional[float] = None
    rho: dict = dc_field(default_factory=dict)          # eps -> largest passing radius or None
    sigma: Optional[np.ndarray] = None                  # per radius, aligned with radii
    sigma0: Optional[float] = None
    cone_verdicts: list = dc_field(default_factory=list)  # (eps, rho, passed)

    def trend(self) -> bool:
        """``s`` at the smallest radius strictly below ``s`` at the largest."""
        return len(self.slopes) >= 2 and self.slopes[-1] < self.slopes[0]

    def strictly_increasing(self) -> bool:
        """``s`` strictly increasing in ``r``."""
        return bool(np.all(np.diff(self.slopes[::-1]) > 0))


def _split(points):
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        P = np.zeros((0, 2))
    return P, np.linalg.norm(P, axis=1)


def _admissible(P: np.ndarray, norm: np.ndarray, h: float, r: float) -> np.ndarray:
    return (norm >= FLOOR_CELLS * h * (1 - 1e-12)) & (norm <= r * (1 + 1e-12))


def has_contact(points, h: float) -> bool:
    P, norm = _split(points)
    return bool(len(P)) and bool(np.min(norm) <= CONTACT_CELLS * h * (1 + 1e-12))


def slope_profile(points, radii: Sequence[float], h: float) -> TangencyReport:
    """``s(r)`` on the radii at or above the floor, largest radius first."""
    if not has_contact(points, h):
        raise HypothesisError("origin not a free boundary point")
    P, norm = _split(points)
    rs = np.array(sorted({float(r) for r in radii if r >= FLOOR_CELLS * h * (1 - 1e-12)}, reverse=True))
    s = np.zeros(len(rs))
    for k, r in enumerate(rs):
        sel = _admissible(P, norm, h, r)
        if sel.any():
            s[k] = float(np.max(np.maximum(P[sel, 0], 0.0) / norm[sel]))
    s = np.clip(s, 0.0, 1.0)
    ok = rs[s <= 1.0]
    return TangencyReport(h, rs, s, r0=float(ok.max()) if len(ok) else None)


def cone_exclusion(points, eps: float, rho: float, h: float) -> bool:
    """No admissible point with ``|p| <= rho`` inside ``K_eps``."""
    P, norm = _split(points)
    sel = _admissible(P, norm, h, rho)
    tangential = np.linalg.norm(P[sel, 1:], axis=1)
    return not bool(np.any(P[sel, 0] > eps * tangential))


def _cone_slope(P: np.ndarray, norm: np.ndarray, h: float, r: float) -> float:
    """Smallest ``eps`` with ``cone_exclusion(eps, r)`` passing."""
    sel = _admissible(P, norm, h, r)
    if not sel.any():
        return 0.0
    p1 = np.maximum(P[sel, 0], 0.0)
    tang = np.linalg.norm(P[sel, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(p1 > 0, p1 / tang, 0.0)
    return float(np.max(q))


def fit_modulus(report: TangencyReport, points, eps_list: Sequence[float] = DEFAULT_EPS) -> TangencyReport:
    """Fill ``rho_eps`` (largest tested radius passing the cone test) and ``sigma(r)``.

    ``sigma(r)`` is the smallest ``eps`` whose cone is empty up to ``r``;
    it is nondecreasing in ``r`` and ``sigma0`` is its value at the
    smallest admissible radius.
    """
    P, norm = _split(points)
    h = report.h
    report.cone_verdicts = []
    report.rho = {}
    for eps in eps_list:
        best = None
        for r in report.radii:
            ok = cone_exclusion(P, eps, r, h)
            report.cone_verdicts.append((float(eps), float(r), ok))
            if ok and (best is None or r > best):
                best = float(r)
        report.rho[float(eps)] = best
    report.sigma = np.array([_cone_slope(P, norm, h, r) for r in report.radii])
    report.sigma0 = float(report.sigma[-1]) if len(report.sigma) else None
    return report


def analyse(points, radii: Sequence[float], h: float, eps_list: Sequence[float] = DEFAULT_EPS) -> TangencyReport:
    return fit_modulus(slope_profile(points, radii, h), points, eps_list)


# --- synthetic point sets --------------------------------------------------------

def parabola_points(h: float, extent: float = 1.0) -> np.ndarray:
    """``x1 = x2^2`` sampled every ``h/4`` for ``|x2| <= extent``."""
    x2 = np.arange(-extent, extent + h / 8, h / 4)
    return np.stack([x2 * x2, x2], axis=1)


def ray_points(h: float, extent: float = 0.7) -> np.ndarray:
    """``x1 = x2 >= 0`` sampled every ``h/4``."""
    t = np.arange(0.0, extent + h / 8, h / 4)
    return np.stack([t, t], axis=1)


# --- export ----------------------------------------------------------------------

def write_csvs(report: TangencyReport, out_dir, prefix: str = ""):
    fmt = lambda v: format(float(v), ".17g")
    with open(os.path.join(out_dir, prefix + "slope.csv"), "w") as fh:
        fh.write("r,s\n")
        for r, s in zip(report.radii, report.slopes):
            fh.write(f"{fmt(r)},{fmt(s)}\n")
    with open(os.path.join(out_dir, prefix + "cone.csv"), "w") as fh:
        fh.write("eps,rho,pass\n")
        for eps, rho, ok in report.cone_verdicts:
            fh.write(f"{fmt(eps)},{fmt(rho)},{int(ok)}\n")
    with open(os.path.join(out_dir, prefix + "sigma.csv"), "w") as fh:
        fh.write("r,sigma\n")
        if report.sigma is not None:
            for r, s in zip(report.radii, report.sigma):
                fh.write(f"{fmt(r)},{fmt(s)}\n")
