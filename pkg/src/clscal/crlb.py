"""Cramer-Rao bounds for the vectorized fitting model.

With ``c = vec(C)`` the fit becomes ``r = B c + eta`` with ``B = M^T (x) I_q``,
subject to ``A c = g`` with ``A = F^T (x) K``.  The unconstrained bound is
``J_u^-1`` with ``J_u = B^T Sigma^-1 B``; the constrained bound subtracts
``J_u^-1 A^T (A J_u^-1 A^T)^-1 A J_u^-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import DimensionError, SingularConstraintError, SingularFisherError
from .linalg import WeightMatrix, as_weight, kron, spd_factor, spd_solve, vec
from .solver import ConstraintSpec, ProblemData

NORMS = ("frobenius", "spectral")


@dataclass(frozen=True)
class VectorizedModel:
    B: np.ndarray
    A: np.ndarray
    g: np.ndarray
    r: np.ndarray
    Sigma: WeightMatrix = field(repr=False)


@dataclass(frozen=True)
class CrlbReport:
    J_u_inv: np.ndarray
    J_c_inv: np.ndarray
    norm_u: float
    norm_c: float
    reduction_pct: float
    norm: str = "frobenius"


def matrix_norm(X, norm: str = "frobenius") -> float:
    if norm == "frobenius":
        return float(np.linalg.norm(X, "fro"))
    if norm == "spectral":
        return float(np.linalg.norm(X, 2))
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def vectorize_model(prob: ProblemData, con: ConstraintSpec | None = None, sigma=None) -> VectorizedModel:
    """Build B, A, g, r and the noise covariance (identity by default).

    ``con=None`` gives an empty constraint block with zero rows.
    """
    q, p, k = prob.q, prob.p, prob.k
    B = kron(prob.M.T, np.eye(q))
    if con is None:
        A = np.zeros((0, q * p))
        g = np.zeros((0, 1))
    else:
        con.check_conforms(prob)
        A = kron(con.F.T, con.K)
        g = vec(con.G)
    Sigma = as_weight(sigma, q * k, "Sigma")
    return VectorizedModel(B=B, A=A, g=g, r=vec(prob.R), Sigma=Sigma)


def fisher_unconstrained(model: VectorizedModel) -> np.ndarray:
    """``J_u = B^T Sigma^-1 B``, via the Cholesky factor of Sigma."""
    LiB = sla.solve_triangular(model.Sigma.factor, model.B, lower=True)
    J = LiB.T @ LiB
    return 0.5 * (J + J.T)


def crlb_unconstrained(model: VectorizedModel) -> np.ndarray:
    J = fisher_unconstrained(model)
    jf = spd_factor(J, SingularFisherError, "J_u = B^T Sigma^-1 B")
    Ji = spd_solve(jf, np.eye(J.shape[0]))
    return 0.5 * (Ji + Ji.T)


def crlb_constrained(model: VectorizedModel, norm: str = "frobenius") -> CrlbReport:
    J = fisher_unconstrained(model)
    jf = spd_factor(J, SingularFisherError, "J_u = B^T Sigma^-1 B")
    J_u_inv = spd_solve(jf, np.eye(J.shape[0]))
    J_u_inv = 0.5 * (J_u_inv + J_u_inv.T)
    A = model.A
    if A.shape[1] != J.shape[0]:
        raise DimensionError(f"A has {A.shape[1]} columns but J_u is {J.shape[0]}x{J.shape[0]}")
    if A.shape[0] == 0:
        J_c_inv = J_u_inv.copy()
    else:
        X = spd_solve(jf, A.T)  # J_u^-1 A^T
        S = A @ X
        sf = spd_factor(0.5 * (S + S.T), SingularConstraintError, "A J_u^-1 A^T")
        J_c_inv = J_u_inv - X @ spd_solve(sf, X.T)
        J_c_inv = 0.5 * (J_c_inv + J_c_inv.T)
    nu = matrix_norm(J_u_inv, norm)
    nc = matrix_norm(J_c_inv, norm)
    return CrlbReport(
        J_u_inv=J_u_inv,
        J_c_inv=J_c_inv,
        norm_u=nu,
        norm_c=nc,
        reduction_pct=100.0 * (nc - nu) / nu,
        norm=norm,
    )


def constrained_projector(model: VectorizedModel) -> np.ndarray:
    """``J_u^-1 A^T (A J_u^-1 A^T)^-1 A``, idempotent when A has full row rank."""
    J = fisher_unconstrained(model)
    jf = spd_factor(J, SingularFisherError, "J_u")
    X = spd_solve(jf, model.A.T)
    S = model.A @ X
    sf = spd_factor(0.5 * (S + S.T), SingularConstraintError, "A J_u^-1 A^T")
    return X @ spd_solve(sf, model.A)
