"""Boundary-layer cell problem: solver, slip matrix and Fourier-mode analysis."""

from .grid import CellResolution
from .solver import (
    CellProblemSpec,
    CellSolution,
    boundary_layer_constant,
    default_depth,
    energy_matrix,
    jump_residual,
    shift_solution,
    slip_matrix,
    slip_matrix_and_solutions,
    solve_cell,
)

__all__ = [
    "CellProblemSpec",
    "CellResolution",
    "CellSolution",
    "boundary_layer_constant",
    "default_depth",
    "energy_matrix",
    "jump_residual",
    "shift_solution",
    "slip_matrix",
    "slip_matrix_and_solutions",
    "solve_cell",
]
