"""Independent checks on the closed-form solver.

* :func:`kkt_oracle` solves the vectorized saddle-point system with a dense
  general solver.
* :func:`fd_solve` is the white-point preserving reparametrization
  ``C = D + N V^T`` for W = I, K = I and vector F.
* :func:`mc_variance_experiment` simulates noisy references and compares the
  spread of both estimators with the Cramer-Rao bounds.
* :func:`uniqueness_probe` perturbs the constrained optimum inside the
  feasible set and measures the objective gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .crlb import crlb_constrained, fisher_unconstrained, vectorize_model
from .errors import DimensionError, SingularSystemError, ValidationError
from .linalg import (
    WeightMatrix,
    as_matrix,
    kron,
    max_abs,
    unvec,
    validate_full_rank,
    vec,
    weighted_frobenius_sq,
)
from .projections import make_projections, verify_agreement
from .solver import (
    ConstraintSpec,
    ProblemData,
    feasible_perturbation,
    fisher,
    fitting_error_sq,
    left_inverse_F,
    right_inverse_K,
    solve_constrained,
)


def kkt_oracle(prob: ProblemData, con: ConstraintSpec | None) -> np.ndarray:
    """Solve ``[[2 B^T Wv B, A^T], [A, 0]] [c; lam] = [2 B^T Wv r; g]``.

    ``Wv = W (x) I_q`` carries the weight through vectorization, so that
    ``(Bc - r)^T Wv (Bc - r) == ||C M - R||_W^2``.
    """
    q, p = prob.q, prob.p
    B = kron(prob.M.T, np.eye(q))
    Wv = kron(prob.W.mat, np.eye(q))
    r = vec(prob.R)
    H = 2.0 * B.T @ Wv @ B
    h = 2.0 * B.T @ Wv @ r
    if con is None:
        A = np.zeros((0, q * p))
        g = np.zeros((0, 1))
    else:
        con.check_conforms(prob)
        A = kron(con.F.T, con.K)
        g = vec(con.G)
    m = A.shape[0]
    system = np.block([[H, A.T], [A, np.zeros((m, m))]])
    rhs = np.vstack([h, g])
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("KKT system is singular") from exc
    return unvec(sol[: q * p], q, p)


def crlb_nullspace(model) -> np.ndarray:
    """Constrained bound via a null-space basis U of A: ``U (U^T J_u U)^-1 U^T``."""
    J = fisher_unconstrained(model)
    if model.A.shape[0] == 0:
        return np.linalg.inv(J)
    U = sla.null_space(model.A)
    if U.shape[1] == 0:
        return np.zeros_like(J)
    return U @ np.linalg.solve(U.T @ J @ U, U.T)


# --- white-point preserving parametrization -------------------------------


@dataclass(frozen=True)
class FdParametrization:
    """``D f = g`` and the columns of V span the hyperplane orthogonal to f."""

    f: np.ndarray
    g: np.ndarray
    D: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        f, g, D, V = self.f, self.g, self.D, self.V
        p = f.shape[0]
        if D.shape != (g.shape[0], p) or V.shape != (p, p - 1):
            raise DimensionError(f"inconsistent shapes D {D.shape}, V {V.shape} for f {f.shape}, g {g.shape}")
        scale = max(1.0, max_abs(D) * max_abs(f))
        if max_abs(D @ f - g) > 1e-12 * scale * p:
            raise ValidationError("D does not satisfy D f = g")
        if max_abs(V.T @ f) > 1e-12 * max(1.0, max_abs(V) * max_abs(f)) * p:
            raise ValidationError("columns of V are not orthogonal to f")
        if p > 1 and not validate_full_rank(V, "column"):
            raise ValidationError("V does not have full column rank")


def fd_parametrization(f, g, rng: np.random.Generator | None = None) -> FdParametrization:
    """Build a valid (D, V) pair for the constraint ``C f = g``.

    Without ``rng`` the canonical pair is returned: ``D = g f^+`` and V an
    orthonormal completion of f.  With ``rng``, D gets a random component
    that annihilates f and V is mixed by a random invertible matrix, both of
    which leave the fitted C unchanged.
    """
    f = as_matrix(f, "f")
    g = as_matrix(g, "g")
    if f.shape[1] != 1 or g.shape[1] != 1:
        raise DimensionError("f and g must be column vectors")
    p, q = f.shape[0], g.shape[0]
    ftf = float(np.sum(f * f))
    if ftf == 0:
        raise ValidationError("f must be nonzero")
    f_pinv = f.T / ftf
    D = g @ f_pinv
    Q, _ = np.linalg.qr(np.hstack([f, np.eye(p)]))
    V = Q[:, 1:p]
    if rng is not None:
        D = D + rng.uniform(-1, 1, (q, p)) @ (np.eye(p) - f @ f_pinv)
        while True:
            T = rng.uniform(-1, 1, (p - 1, p - 1))
            if p == 1 or validate_full_rank(T, "column", tol=1e-3):
                break
        V = V @ T
    return FdParametrization(f, g, D, V)


def fd_solve(prob: ProblemData, fd: FdParametrization) -> np.ndarray:
    """``D + (R - D M) M^T V (V^T M M^T V)^-1 V^T``; requires W = I."""
    if not prob.W.is_identity():
        raise ValidationError("the D + N V^T parametrization applies only to W = I")
    if fd.D.shape != (prob.q, prob.p):
        raise DimensionError(f"D must be {prob.q}x{prob.p}, got {fd.D.shape}")
    M, R, D, V = prob.M, prob.R, fd.D, fd.V
    if V.shape[1] == 0:
        return D.copy()
    MtV = M.T @ V
    S = MtV.T @ MtV
    try:
        N = np.linalg.solve(S, ((R - D @ M) @ MtV).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("V^T M M^T V is singular") from exc
    return D + N @ V.T


# --- Monte Carlo ----------------------------------------------------------


@dataclass(frozen=True)
class McConfig:
    trials: int
    noise_sigma: float
    seed: int
    true_C: np.ndarray

    def __post_init__(self):
        if self.trials < 100:
            raise ValidationError(f"trials must be >= 100, got {self.trials}")
        if not self.noise_sigma > 0:
            raise ValidationError(f"noise_sigma must be positive, got {self.noise_sigma}")


@dataclass(frozen=True)
class McSummary:
    trials: int
    noise_sigma: float
    mean_u: np.ndarray
    mean_c: np.ndarray
    var_u: np.ndarray
    var_c: np.ndarray
    mse_u: np.ndarray
    mse_c: np.ndarray
    trace_mse_u: float
    trace_mse_c: float
    mse_gap_se: float  # standard error of the paired per-trial difference
    cov_trace_u: float
    cov_trace_c: float
    crlb_diag_u: np.ndarray
    crlb_diag_c: np.ndarray

    @property
    def mse_gap(self) -> float:
        return self.trace_mse_u - self.trace_mse_c

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["mse_gap"] = self.mse_gap
        return out


def trial_noise(seed: int, index: int, shape, sigma: float) -> np.ndarray:
    """Noise for one trial, drawn from a stream keyed on ``(seed, index)``."""
    return sigma * np.random.default_rng([seed, index]).standard_normal(shape)


def mc_variance_experiment(prob: ProblemData, con: ConstraintSpec, cfg: McConfig) -> McSummary:
    """Simulate ``R = true_C M + noise`` and fit both estimators per trial.

    Only M and W are taken from ``prob``; its R is ignored.  Trials are
    independent and keyed on ``(seed, trial)``, so results do not depend on
    evaluation order.
    """
    con.check_conforms(prob)
    C0 = as_matrix(cfg.true_C, "true_C")
    if C0.shape != (prob.q, prob.p):
        raise DimensionError(f"true_C must be {prob.q}x{prob.p}, got {C0.shape}")
    resid = con.residual(C0)
    if max_abs(resid) > 1e-10 * (1.0 + max_abs(con.G)):
        raise ValidationError("true_C does not satisfy the constraint")

    M, W = prob.M, prob.W.mat
    J = fisher(prob)
    H = np.linalg.solve(J, M @ W).T  # k x p, C_u = R @ H
    F_ell = left_inverse_F(con.F, J)
    K_R = right_inverse_K(con.K)

    n = cfg.trials
    shape = (prob.q, prob.k)
    noise = np.stack([trial_noise(cfg.seed, i, shape, cfg.noise_sigma) for i in range(n)])
    R = C0 @ M + noise
    C_u = R @ H
    C_c = C_u - K_R @ (con.K @ C_u @ con.F - con.G) @ F_ell

    err_u = C_u - C0
    err_c = C_c - C0
    sq_u = np.sum(err_u**2, axis=(1, 2))
    sq_c = np.sum(err_c**2, axis=(1, 2))
    diff = sq_u - sq_c
    var_u = np.var(C_u, axis=0, ddof=1)
    var_c = np.var(C_c, axis=0, ddof=1)

    sigma = WeightMatrix.from_array(cfg.noise_sigma**2 * np.eye(prob.q * prob.k))
    rep = crlb_constrained(vectorize_model(prob, con, sigma))
    return McSummary(
        trials=n,
        noise_sigma=cfg.noise_sigma,
        mean_u=C_u.mean(axis=0),
        mean_c=C_c.mean(axis=0),
        var_u=var_u,
        var_c=var_c,
        mse_u=np.mean(err_u**2, axis=0),
        mse_c=np.mean(err_c**2, axis=0),
        trace_mse_u=float(sq_u.mean()),
        trace_mse_c=float(sq_c.mean()),
        mse_gap_se=float(diff.std(ddof=1) / np.sqrt(n)),
        cov_trace_u=float(var_u.sum()),
        cov_trace_c=float(var_c.sum()),
        crlb_diag_u=unvec(np.diag(rep.J_u_inv), prob.q, prob.p),
        crlb_diag_c=unvec(np.diag(rep.J_c_inv), prob.q, prob.p),
    )


# --- uniqueness -------------------------------------------------------------


def perturbation_gaps(
    prob: ProblemData,
    con: ConstraintSpec,
    n_perturbations: int,
    seed: int = 0,
    scale: float = 1.0,
    sol=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Objective gaps for feasible perturbations of the constrained optimum.

    Returns ``(gaps, predicted)`` where ``gaps[i] = ||C_i M - R||_W^2 -
    ||C_hat M - R||_W^2`` and ``predicted[i] = ||(C_i - C_hat) M||_W^2``.
    Each perturbation direction is drawn uniformly, projected onto
    ``{X : K X F = 0}`` and scaled to Frobenius norm ``scale``.  Directions
    that collapse under projection are redrawn; if the feasible set is a
    single point both arrays are empty.
    """
    if sol is None:
        sol = solve_constrained(prob, con)
    rng = np.random.default_rng(seed)
    gaps, predicted = [], []
    shape = sol.C_hat.shape
    if con.K.shape[0] * con.F.shape[1] >= shape[0] * shape[1]:
        return np.empty(0), np.empty(0)
    while len(gaps) < n_perturbations:
        P = feasible_perturbation(rng.uniform(-1, 1, shape), con, sol.F_ell, sol.K_R)
        nrm = np.linalg.norm(P)
        if nrm < 1e-8:
            continue
        P *= scale / nrm
        C = sol.C_hat + P
        gaps.append(objective_gap(C, sol.C_hat, prob))
        predicted.append(weighted_frobenius_sq((C - sol.C_hat) @ prob.M, prob.W))
    return np.array(gaps), np.array(predicted)


def objective_gap(C1, C0, prob: ProblemData) -> float:
    """``||C1 M - R||_W^2 - ||C0 M - R||_W^2`` without cancellation.

    Evaluated as ``<E1 - E0, E1 + E0>_W`` from the two residuals, which
    avoids subtracting two large squared norms when the gap is small.
    """
    E1 = (C1 @ prob.M - prob.R) @ prob.W.factor
    E0 = (C0 @ prob.M - prob.R) @ prob.W.factor
    return float(np.sum((E1 - E0) * (E1 + E0)))


def uniqueness_probe(prob: ProblemData, con: ConstraintSpec, n_perturbations: int, seed: int = 0) -> float:
    """Smallest objective increase over random feasible perturbations (> 0)."""
    gaps, _ = perturbation_gaps(prob, con, n_perturbations, seed)
    return float(gaps.min()) if gaps.size else float("inf")


# --- random instances -------------------------------------------------------


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    Q = rng.uniform(-1, 1, (n, n))
    return Q.T @ Q + 0.1 * np.eye(n)


def random_instance(
    rng: np.random.Generator,
    q: int | None = None,
    p: int | None = None,
    k: int | None = None,
    a: int | None = None,
    b: int | None = None,
    weighted: bool = True,
    proper: bool = False,
) -> tuple[ProblemData, ConstraintSpec]:
    """Draw a well-posed problem with entries uniform on [-1, 1].

    Unset sizes are drawn with ``q, p <= 5`` and ``p <= k <= 40``.  Draws
    failing a rank condition are repeated.  ``proper=True`` keeps the
    feasible set larger than a single point (``a * b < q * p``).
    """
    while True:
        qq = q if q is not None else int(rng.integers(1, 6))
        pp = p if p is not None else int(rng.integers(1, 6))
        kk = k if k is not None else int(rng.integers(pp, 41))
        aa = a if a is not None else int(rng.integers(1, qq + 1))
        bb = b if b is not None else int(rng.integers(1, pp + 1))
        if proper and aa * bb >= qq * pp:
            if a is None and aa > 1:
                aa -= 1
            elif b is None and bb > 1:
                bb -= 1
            if aa * bb >= qq * pp:
                continue
        M = rng.uniform(-1, 1, (pp, kk))
        R = rng.uniform(-1, 1, (qq, kk))
        K = rng.uniform(-1, 1, (aa, qq))
        F = rng.uniform(-1, 1, (pp, bb))
        G = rng.uniform(-1, 1, (aa, bb))
        W = random_spd(rng, kk) if weighted else None
        if not (
            validate_full_rank(M, "row", tol=1e-3)
            and validate_full_rank(K, "row", tol=1e-3)
            and validate_full_rank(F, "column", tol=1e-3)
        ):
            continue
        return ProblemData.create(M, R, W), ConstraintSpec.create(K, F, G)


def relative_gap(X, Y) -> float:
    """``max|X - Y| / max(1, max|X|)``."""
    return max_abs(np.asarray(X) - np.asarray(Y)) / max(1.0, max_abs(X))


# --- suite driven by the CLI ``verify`` subcommand --------------------------


def verify_suite(seed: int, instances: int = 200, trials: int = 10_000, sigma: float = 0.05) -> dict:
    """Run the oracle, uniqueness, CRLB and Monte Carlo checks.

    Returns a JSON-ready summary with a ``passed`` flag per check and overall.
    """
    rng = np.random.default_rng(seed)
    kkt_dev = fd_dev = agree_dev = 0.0
    excess_dev = 0.0
    min_gap = np.inf
    pyth_dev = 0.0
    psd_min = np.inf
    for i in range(instances):
        prob, con = random_instance(rng, proper=True)
        sol = solve_constrained(prob, con)
        kkt_dev = max(kkt_dev, relative_gap(sol.C_hat, kkt_oracle(prob, con)))
        lhs = sol.err_c**2 - sol.err_u**2
        excess_dev = max(excess_dev, abs(lhs - sol.excess) / max(sol.err_c**2, 1e-300))

        gaps, pred = perturbation_gaps(prob, con, 10, seed=seed + i, sol=sol)
        if gaps.size:
            min_gap = min(min_gap, float(gaps.min()))
            pyth_dev = max(pyth_dev, float(np.max(np.abs(gaps - pred) / pred)))

        model = vectorize_model(prob, con)
        rep = crlb_constrained(model)
        ev = np.linalg.eigvalsh(rep.J_u_inv - rep.J_c_inv)
        psd_min = min(psd_min, float(ev.min() / max(1.0, np.abs(ev).max())))

        # white-point setting: W = I, K = I, F a vector
        plain, _ = random_instance(rng, q=prob.q, p=max(prob.p, 2), weighted=False)
        f = rng.uniform(0.5, 1.5, (plain.p, 1))
        gvec = rng.uniform(-1, 1, (plain.q, 1))
        wp = ConstraintSpec.create(np.eye(plain.q), f, gvec)
        ref = solve_constrained(plain, wp).C_hat
        fd_dev = max(fd_dev, relative_gap(ref, fd_solve(plain, fd_parametrization(f, gvec, rng))))

        proj = make_projections(con.F, sol.F_ell)
        agree_dev = max(agree_dev, verify_agreement(sol, prob.M, proj) / (1.0 + max_abs(sol.C_u @ prob.M)))

    mc_rng = np.random.default_rng([seed, 1])
    M = mc_rng.uniform(0.05, 1.0, (3, 24))
    prob = ProblemData.create(M, np.zeros((3, 24)))
    con = ConstraintSpec.create(np.eye(3), np.ones((3, 1)), np.ones((3, 1)))
    C0 = feasible_perturbation(mc_rng.uniform(-0.5, 0.5, (3, 3)), con) + np.eye(3)
    mc = mc_variance_experiment(prob, con, McConfig(trials, sigma, seed, C0))
    # Gauss-Markov: with W = I the unconstrained covariance is sigma^2 (B^T B)^-1
    bound = float(mc.crlb_diag_u.sum())

    checks = {
        "kkt_equivalence": {"max_rel_dev": kkt_dev, "tol": 1e-9, "passed": kkt_dev <= 1e-9},
        "fd_equivalence": {"max_rel_dev": fd_dev, "tol": 1e-9, "passed": fd_dev <= 1e-9},
        "excess_identity": {"max_rel_dev": excess_dev, "tol": 1e-9, "passed": excess_dev <= 1e-9},
        "agreement": {"max_rel_dev": agree_dev, "tol": 1e-10, "passed": agree_dev <= 1e-10},
        "uniqueness": {
            "min_gap": min_gap,
            "max_pythagoras_rel_dev": pyth_dev,
            "passed": min_gap > 0 and pyth_dev <= 1e-9,
        },
        "crlb_psd": {"min_rel_eig": psd_min, "passed": psd_min >= -1e-10},
        "monte_carlo": {
            "trials": trials,
            "sigma": sigma,
            "trace_mse_unconstrained": mc.trace_mse_u,
            "trace_mse_constrained": mc.trace_mse_c,
            "gap_over_se": mc.mse_gap / mc.mse_gap_se,
            "cov_trace_unconstrained": mc.cov_trace_u,
            "gauss_markov_trace": bound,
            "passed": mc.mse_gap > 3 * mc.mse_gap_se and abs(mc.cov_trace_u / bound - 1) <= 0.05,
        },
    }
    return {
        "seed": seed,
        "instances": instances,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }

