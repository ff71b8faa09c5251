"""Derivative-orthogonal wavelet multiscale Galerkin solver for -(a u')' = f on (0, 1)."""

from .problem import ProblemSpec, builtin_example, constant_problem, load_problem
from .quadrature import FineGrid, build_tables
from .basis import build_space
from .assembly import solve_multiscale, solve_standard_fem

__all__ = [
    "ProblemSpec",
    "builtin_example",
    "constant_problem",
    "load_problem",
    "FineGrid",
    "build_tables",
    "build_space",
    "solve_multiscale",
    "solve_standard_fem",
]
