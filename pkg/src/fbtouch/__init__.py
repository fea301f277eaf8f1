"""Numerical laboratory for the free boundary problem ``Delta u = chi_{|grad u| != 0}``
on the half-ball with ``u = 0`` on the flat part of the boundary."""

from .grid import (Grid, GridError, Label, ProblemClass, RegionDecomposition, ScalarField,
                   decompose_regions, gradient, grad_norm, laplacian, read_field, sup_on_ball,
                   write_field)
from .catalog import GlobalSolution, classify, evaluate, evaluate_gradient, residual_check, sample
from .solver import (Pinch, ProblemSpec, SolveReport, Wedge, extract_free_boundary, solve,
                     verify_membership)
from .monotonicity import MonotonicityScan, monotone_verdict, phi, split_directional, weighted_dirichlet
from .blowup import (dyadic_growth, hessian_bound_check, nondegeneracy_check, odd_reflect,
                     patch_growth_check, quadratic_growth_check, rescale)
from .tangency import TangencyReport, cone_exclusion, fit_modulus, slope_profile

__version__ = "0.1.0"
