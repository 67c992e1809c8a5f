"""Whole-body SE(3) trajectory optimization for fully actuated multirotors.

Position and attitude are planned together as one piecewise polynomial in
``z = [p, sigma]``, where ``sigma`` is a stereographic attitude coordinate,
and the vehicle's convex hull is kept inside a corridor of polyhedra.
"""

from .geometry import Corridor, Polyhedron, VehicleShape, box, make_polyhedron, validate_corridor
from .penalty import PenaltyConfig
from .problem import ProblemSpec, build_problem, initial_guess, objective, optimize
from .solver import SolverConfig, minimize
from .spline import BoundaryCondition, Trajectory, solve_coefficients

__all__ = [
    "BoundaryCondition",
    "Corridor",
    "PenaltyConfig",
    "Polyhedron",
    "ProblemSpec",
    "SolverConfig",
    "Trajectory",
    "VehicleShape",
    "box",
    "build_problem",
    "initial_guess",
    "make_polyhedron",
    "minimize",
    "objective",
    "optimize",
    "solve_coefficients",
    "validate_corridor",
]

__version__ = "0.1.0"
