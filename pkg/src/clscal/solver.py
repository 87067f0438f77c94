"""Weighted least squares in matrix form, with and without the constraint KCF = G.

The objective is ``||C M - R||_W^2 = trace((CM - R) W (CM - R)^T)``.  The
constrained minimizer is the unconstrained one corrected by the constraint
residual of the unconstrained fit::

    C_hat = C_u - K_R (K C_u F - G) F_l

where ``K_R`` is a right inverse of K and ``F_l`` a J-weighted left inverse of
F, with ``J = M W M^T``.  Fitting errors on the solution are reported as
norms; the excess term is a squared norm so that
``err_c**2 == err_u**2 + excess``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SingularConstraintError, SingularFisherError
from .linalg import (
    RANK_TOL,
    WeightMatrix,
    as_matrix,
    as_weight,
    spd_factor,
    spd_solve,
    validate_full_rank,
    weighted_frobenius_sq,
)


@dataclass(frozen=True)
class ProblemData:
    """Measurements M (p x k), references R (q x k) and weight W (k x k)."""

    M: np.ndarray
    R: np.ndarray
    W: WeightMatrix = field(repr=False)

    @classmethod
    def create(cls, M, R, W=None) -> "ProblemData":
        M = as_matrix(M, "M")
        R = as_matrix(R, "R")
        if M.shape[1] != R.shape[1]:
            raise DimensionError(
                f"M and R must have the same number of columns, got {M.shape[1]} and {R.shape[1]}"
            )
        W = as_weight(W, M.shape[1])
        if M.shape[0] > M.shape[1]:
            raise SingularFisherError(
                f"M is {M.shape[0]}x{M.shape[1]}; full row rank needs at least as many columns as rows"
            )
        report = validate_full_rank(M, "row")
        if not report:
            raise SingularFisherError(
                f"M fails the full row rank test: sigma_min/sigma_max = {report.ratio:.3g} "
                f"<= {RANK_TOL:g} (rank {report.rank} of {report.expected})"
            )
        return cls(M, R, W)

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @property
    def k(self) -> int:
        return self.M.shape[1]


def _require_rank(X, mode, name):
    rep = validate_full_rank(X, mode)
    if not rep:
        raise SingularConstraintError(
            f"{name} {X.shape} fails the full {mode} rank test: sigma_min/sigma_max = {rep.ratio:.3g} "
            f"<= {RANK_TOL:g} (rank {rep.rank} of {rep.expected})"
        )


@dataclass(frozen=True)
class ConstraintSpec:
    """Linear constraint ``K C F = G`` with K (a x q), F (p x b), G (a x b)."""

    K: np.ndarray
    F: np.ndarray
    G: np.ndarray

    @classmethod
    def create(cls, K, F, G) -> "ConstraintSpec":
        K = as_matrix(K, "K")
        F = as_matrix(F, "F")
        G = as_matrix(G, "G")
        if G.shape != (K.shape[0], F.shape[1]):
            raise DimensionError(
                f"G must be {K.shape[0]}x{F.shape[1]} to match K {K.shape} and F {F.shape}, got {G.shape}"
            )
        _require_rank(K, "row", "K")
        _require_rank(F, "column", "F")
        return cls(K, F, G)

    def check_conforms(self, prob: ProblemData) -> None:
        if self.K.shape[1] != prob.q:
            raise DimensionError(f"K has {self.K.shape[1]} columns but C has {prob.q} rows")
        if self.F.shape[0] != prob.p:
            raise DimensionError(f"F has {self.F.shape[0]} rows but C has {prob.p} columns")

    def residual(self, C) -> np.ndarray:
        return self.K @ C @ self.F - self.G


@dataclass(frozen=True)
class ClsSolution:
    C_u: np.ndarray
    C_hat: np.ndarray
    Delta_c: np.ndarray
    J: np.ndarray
    F_ell: np.ndarray
    K_R: np.ndarray
    err_u: float
    err_c: float
    excess: float
    constraint: ConstraintSpec | None = field(default=None, repr=False)

    @property
    def correction(self) -> np.ndarray:
        """The term ``K_R Delta_c F_l`` subtracted from C_u."""
        return self.C_u - self.C_hat

    @property
    def excess_pct(self) -> float:
        """Increase of the fitting-error norm relative to the unconstrained fit, in percent."""
        if self.err_u == 0:
            return 0.0 if self.err_c == 0 else float("inf")
        return 100.0 * (self.err_c - self.err_u) / self.err_u


def fisher(prob: ProblemData) -> np.ndarray:
    """Return ``J = M W M^T``."""
    J = prob.M @ prob.W.mat @ prob.M.T
    return 0.5 * (J + J.T)


def _fisher_factor(J):
    return spd_factor(J, SingularFisherError, "J = M W M^T")


def solve_unconstrained(prob: ProblemData) -> np.ndarray:
    """Return ``C_u = R W M^T (M W M^T)^{-1}``."""
    cf = _fisher_factor(fisher(prob))
    return spd_solve(cf, prob.M @ prob.W.mat @ prob.R.T).T


def left_inverse_F(F, J) -> np.ndarray:
    """J-weighted left inverse ``(F^T J^-1 F)^-1 F^T J^-1`` so that ``F_l @ F = I``."""
    F = as_matrix(F, "F")
    J = as_matrix(J, "J")
    if J.shape != (F.shape[0], F.shape[0]):
        raise DimensionError(f"J must be {F.shape[0]}x{F.shape[0]}, got {J.shape}")
    _require_rank(F, "column", "F")
    JiF = spd_solve(_fisher_factor(J), F)
    S = F.T @ JiF
    sf = spd_factor(0.5 * (S + S.T), SingularConstraintError, "F^T J^-1 F")
    return spd_solve(sf, JiF.T)


def right_inverse_K(K) -> np.ndarray:
    """Right inverse ``K^T (K K^T)^-1`` so that ``K @ K_R = I``."""
    K = as_matrix(K, "K")
    _require_rank(K, "row", "K")
    KKt = K @ K.T
    kf = spd_factor(0.5 * (KKt + KKt.T), SingularConstraintError, "K K^T")
    return spd_solve(kf, K).T


def fitting_error_sq(C, prob: ProblemData) -> float:
    return weighted_frobenius_sq(C @ prob.M - prob.R, prob.W)


def solve_constrained(prob: ProblemData, con: ConstraintSpec) -> ClsSolution:
    con.check_conforms(prob)
    J = fisher(prob)
    cf = _fisher_factor(J)
    C_u = spd_solve(cf, prob.M @ prob.W.mat @ prob.R.T).T
    F_ell = left_inverse_F(con.F, J)
    K_R = right_inverse_K(con.K)
    Delta_c = con.K @ C_u @ con.F - con.G
    correction = K_R @ Delta_c @ F_ell
    C_hat = C_u - correction
    err_u_sq = fitting_error_sq(C_u, prob)
    err_c_sq = fitting_error_sq(C_hat, prob)
    excess = weighted_frobenius_sq(correction @ prob.M, prob.W)
    return ClsSolution(
        C_u=C_u,
        C_hat=C_hat,
        Delta_c=Delta_c,
        J=J,
        F_ell=F_ell,
        K_R=K_R,
        err_u=float(np.sqrt(err_u_sq)),
        err_c=float(np.sqrt(err_c_sq)),
        excess=excess,
        constraint=con,
    )


def excess_error(sol: ClsSolution, prob: ProblemData, measurements=None) -> float:
    """Squared excess ``||K_R Delta_c F_l M||_W^2``.

    ``measurements`` replaces M, e.g. with its constraint-affected component
    ``P_perp M``, which yields the same value.
    """
    M = prob.M if measurements is None else as_matrix(measurements, "measurements")
    if M.shape != prob.M.shape:
        raise DimensionError(f"measurements must be {prob.M.shape}, got {M.shape}")
    return weighted_frobenius_sq(sol.K_R @ sol.Delta_c @ sol.F_ell @ M, prob.W)


def feasible_perturbation(P, con: ConstraintSpec, F_ell=None, K_R=None) -> np.ndarray:
    """Project P onto ``{X : K X F = 0}`` via ``P - K_R K P F F_l``.

    Adding the result to a feasible C keeps it feasible.
    """
    if K_R is None:
        K_R = right_inverse_K(con.K)
    if F_ell is None:
        # any left inverse of F works; the Euclidean one needs no problem data
        F_ell = np.linalg.solve(con.F.T @ con.F, con.F.T)
    P = as_matrix(P, "P")
    # second pass removes the rounding left by the first, which matters when
    # K or F is ill-conditioned and the multiplier is large
    for _ in range(2):
        P = P - K_R @ (con.K @ P @ con.F) @ F_ell
    return P
