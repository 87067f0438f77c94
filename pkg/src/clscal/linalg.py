"""Dense matrix utilities: weighted Frobenius norms, vec/kron, rank checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import DimensionError, NotPositiveDefiniteError, ValidationError

# relative singular-value cutoff used by every rank decision in the package
RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-10


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float array.

    Scalars become 1x1 and 1-D input becomes a column.
    """
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got {a.ndim} dimensions")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric positive definite weight, factored once at construction.

    ``factor`` is the lower Cholesky factor L with ``mat = L @ L.T``.
    """

    mat: np.ndarray
    factor: np.ndarray = field(repr=False)

    @classmethod
    def from_array(cls, w, name: str = "W") -> "WeightMatrix":
        w = as_matrix(w, name)
        n, m = w.shape
        if n != m:
            raise DimensionError(f"{name} must be square, got {w.shape}")
        scale = np.max(np.abs(w))
        if np.max(np.abs(w - w.T)) > SYMMETRY_TOL * scale:
            raise ValidationError(f"{name} is not symmetric")
        try:
            factor = np.linalg.cholesky(w)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
        w.setflags(write=False)
        factor.setflags(write=False)
        return cls(w, factor)

    @classmethod
    def identity(cls, n: int) -> "WeightMatrix":
        return cls.from_array(np.eye(n))

    @property
    def size(self) -> int:
        return self.mat.shape[0]

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.mat, np.eye(self.size)))


def as_weight(w, n: int, name: str = "W") -> WeightMatrix:
    """Return a WeightMatrix of size ``n``; ``None`` means identity."""
    if w is None:
        return WeightMatrix.identity(n)
    if not isinstance(w, WeightMatrix):
        w = WeightMatrix.from_array(w, name)
    if w.size != n:
        raise DimensionError(f"{name} must be {n}x{n}, got {w.mat.shape}")
    return w


def weighted_frobenius_sq(E, W=None) -> float:
    """Return ``trace(E W E^T)``, the squared W-weighted Frobenius norm of E.

    With ``W = L L^T`` this equals ``||E L||_F^2``, which is never negative.
    """
    E = as_matrix(E, "E")
    if W is None:
        return float(np.sum(E * E))
    if not isinstance(W, WeightMatrix):
        W = WeightMatrix.from_array(W)
    if E.shape[1] != W.size:
        raise DimensionError(f"E has {E.shape[1]} columns but W is {W.size}x{W.size}")
    EL = E @ W.factor
    return float(np.sum(EL * EL))


def vec(X) -> np.ndarray:
    """Stack the columns of X into one column vector."""
    X = as_matrix(X, "X")
    return X.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a matrix of shape ``(rows, cols)``."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def kron(A, B) -> np.ndarray:
    """Kronecker product; ``vec(A X B) == kron(B.T, A) @ vec(X)``."""
    return np.kron(as_matrix(A, "A"), as_matrix(B, "B"))


@dataclass(frozen=True)
class RankReport:
    full_rank: bool
    rank: int
    expected: int
    ratio: float
    singular_values: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return self.full_rank


def validate_full_rank(X, mode: str = "row", tol: float = RANK_TOL) -> RankReport:
    """Check whether X has full row (``mode="row"``) or column rank.

    The decision uses the relative singular-value cutoff
    ``sigma_min / sigma_max > tol``.  Full row rank requires rows <= cols and
    full column rank requires cols <= rows.
    """
    X = as_matrix(X)
    if mode not in ("row", "column"):
        raise ValueError(f"mode must be 'row' or 'column', got {mode!r}")
    n, m = X.shape
    expected = n if mode == "row" else m
    s = np.linalg.svd(X, compute_uv=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    if expected > min(n, m) or smax == 0:
        return RankReport(False, rank, expected, 0.0, s)
    ratio = float(s[expected - 1] / smax)
    return RankReport(ratio > tol, rank, expected, ratio, s)


def spd_factor(A, error=NotPositiveDefiniteError, name: str = "matrix"):
    """Cholesky-factor a symmetric positive definite matrix for repeated solves."""
    try:
        return sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise error(f"{name} is not positive definite (Cholesky failed)") from exc


def spd_solve(factor, B) -> np.ndarray:
    return sla.cho_solve(factor, B, check_finite=False)


def max_abs(X) -> float:
    X = np.asarray(X)
    return float(np.max(np.abs(X))) if X.size else 0.0
