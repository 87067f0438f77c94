"""Closed-form constrained least squares with excess-error analysis."""

from .errors import *  # noqa: F401,F403
from .linalg import WeightMatrix, kron, unvec, validate_full_rank, vec, weighted_frobenius_sq
from .projections import ProjectionPair, make_projections, split_measurements, verify_agreement
from .solver import (
    ClsSolution,
    ConstraintSpec,
    ProblemData,
    excess_error,
    fisher,
    left_inverse_F,
    right_inverse_K,
    solve_constrained,
    solve_unconstrained,
)

__version__ = "0.1.0"
