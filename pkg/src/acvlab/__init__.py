"""Advective Allen-Cahn phase fields on structured grids.

Submodules: :mod:`~acvlab.grid` (grids, fields, stencils, quadrature),
:mod:`~acvlab.potential` (double wells), :mod:`~acvlab.solver` (Newton-Krylov
with epsilon continuation), :mod:`~acvlab.minmax` (string method and saddle
refinement), :mod:`~acvlab.varifold` (diffuse-interface diagnostics) and
:mod:`~acvlab.cli` (experiment driver).
"""

from __future__ import annotations

from .grid import GridSpec, ScalarField, VectorField
from .kernels import BACKEND
from .minmax import PathOfStates, init_path, refine_saddle, relax_path
from .potential import DoubleWell, canonical_quartic, validate_hypotheses
from .solver import NonConvergenceError, PhaseState, SolverConfig, newton_solve, residual

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DoubleWell",
    "GridSpec",
    "NonConvergenceError",
    "PathOfStates",
    "PhaseState",
    "ScalarField",
    "SolverConfig",
    "VectorField",
    "canonical_quartic",
    "init_path",
    "newton_solve",
    "refine_saddle",
    "relax_path",
    "residual",
    "validate_hypotheses",
]
