"""Stokes flow in a rough annulus: exact, no-slip, Navier-slip and corrected solutions."""

from .correctors import (
    CorrectorBundle,
    annulus_cell_solutions,
    build_correctors,
    normal_derivative,
    wall_traction,
)
from .fem import AnnulusMesh
from .norms import MacroField, error_norms, field_norms, integrate_norms
from .solve import (
    VARIANTS,
    MacroProblemSpec,
    MacroSolution,
    couette_profile,
    navier_couette_profile,
    solve_macro,
    unit_rotation,
)
from .wall_law import annulus_slip_field

__all__ = [
    "AnnulusMesh",
    "CorrectorBundle",
    "MacroField",
    "MacroProblemSpec",
    "MacroSolution",
    "VARIANTS",
    "annulus_cell_solutions",
    "annulus_slip_field",
    "build_correctors",
    "couette_profile",
    "error_norms",
    "field_norms",
    "integrate_norms",
    "navier_couette_profile",
    "normal_derivative",
    "solve_macro",
    "unit_rotation",
    "wall_traction",
]
