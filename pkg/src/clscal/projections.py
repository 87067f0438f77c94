"""Split measurements into constraint-affected and constraint-invariant parts.

``P_perp = F F_l`` and ``P_par = I - P_perp`` are complementary idempotents.
P_par is built directly as the projector onto null(F_l) along range(F),
which is the same operator without the cancellation in ``I - F F_l``; when
F is square it is exactly zero.  They depend on F and J only, never on K or G.  For J != I they are
self-adjoint under the inner product ``<x, y> = x^T J^-1 y`` rather than the
Euclidean one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import DimensionError, LeftInverseError
from .linalg import as_matrix, max_abs
from .solver import ClsSolution

LEFT_INVERSE_TOL = 1e-9


@dataclass(frozen=True)
class ProjectionPair:
    P_perp: np.ndarray
    P_par: np.ndarray

    @property
    def size(self) -> int:
        return self.P_perp.shape[0]


def make_projections(F, F_ell) -> ProjectionPair:
    F = as_matrix(F, "F")
    F_ell = as_matrix(F_ell, "F_ell")
    if F_ell.shape != (F.shape[1], F.shape[0]):
        raise DimensionError(f"F_ell must be {F.shape[1]}x{F.shape[0]}, got {F_ell.shape}")
    b = F.shape[1]
    dev = max_abs(F_ell @ F - np.eye(b))
    if dev > LEFT_INVERSE_TOL * max(1.0, max_abs(F) * max_abs(F_ell)):
        raise LeftInverseError(f"F_ell @ F deviates from the identity by {dev:.3g}")
    P_perp = F @ F_ell
    # N spans null(F_l) = range(P_par); Z spans null(F^T), so Z^T F = 0
    N = null_space(F_ell)
    Z = null_space(F.T)
    P_par = N @ np.linalg.solve(Z.T @ N, Z.T) if N.shape[1] else np.zeros_like(P_perp)
    return ProjectionPair(P_perp, P_par)


def split_measurements(M, proj: ProjectionPair) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P_par @ M, P_perp @ M)``.

    The first part is where constrained and unconstrained fits agree; the
    second is the only part that contributes to the excess error.
    """
    M = as_matrix(M, "M")
    if M.shape[0] != proj.size:
        raise DimensionError(f"M has {M.shape[0]} rows but projectors are {proj.size}x{proj.size}")
    return proj.P_par @ M, proj.P_perp @ M


def verify_agreement(sol: ClsSolution, M, proj: ProjectionPair) -> float:
    """Max deviation ``max|(C_hat - C_u) P_par M|``; zero up to rounding."""
    M_par, _ = split_measurements(M, proj)
    return max_abs((sol.C_hat - sol.C_u) @ M_par)
