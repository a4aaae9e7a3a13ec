"""Schroedinger-Poisson solutions in steep potential wells on desk-scale grids."""

from .analysis import (DecayFit, ConvergenceRow, convergence_study, fit_decay, h_function,
                       localization_mass, moser_linf_bound, nehari_defect, nonexistence_threshold,
                       sobolev_S)
from .functional import Constants, Functional, SolverError, SolverParams, make_e0
from .grid import BoxGrid, GridError, PotentialSpec, RadialGrid, build_grid
from .poisson import newton_potential, nonlocal_energy
from .solver import (PathState, SolveReport, mountain_pass_solve, newton_refine, solve_dirichlet_limit,
                     solve_dirichlet_local, solve_schrodinger_limit)

__version__ = "0.1.0"

__all__ = [
    "BoxGrid", "Constants", "ConvergenceRow", "DecayFit", "Functional", "GridError", "PathState",
    "PotentialSpec", "RadialGrid", "SolveReport", "SolverError", "SolverParams", "build_grid",
    "convergence_study", "fit_decay", "h_function", "localization_mass", "make_e0", "moser_linf_bound",
    "mountain_pass_solve", "nehari_defect", "newton_potential", "newton_refine", "nonexistence_threshold",
    "nonlocal_energy", "sobolev_S", "solve_dirichlet_limit", "solve_dirichlet_local",
    "solve_schrodinger_limit",
]
