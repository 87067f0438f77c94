import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clscal.errors import DimensionError, NotPositiveDefiniteError, ValidationError
from clscal.linalg import (
    WeightMatrix,
    as_matrix,
    kron,
    unvec,
    validate_full_rank,
    vec,
    weighted_frobenius_sq,
)


def loop_weighted_sq(E, W):
    # trace(E W E^T) = sum_i sum_j sum_l E[i,j] W[j,l] E[i,l]
    total = 0.0
    for i in range(len(E)):
        for j in range(len(W)):
            for l in range(len(W)):
                total += E[i][j] * W[j][l] * E[i][l]
    return total


def loop_kron(A, B):
    n, m = len(A), len(A[0])
    p, q = len(B), len(B[0])
    out = [[0.0] * (m * q) for _ in range(n * p)]
    for i in range(n):
        for j in range(m):
            for k in range(p):
                for l in range(q):
                    out[i * p + k][j * q + l] = A[i][j] * B[k][l]
    return out


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
# keep squares representable: no subnormal-range entries
normal = finite.filter(lambda x: x == 0 or abs(x) > 1e-100)


class TestWeightedFrobenius:
    def test_identity_case(self):
        assert weighted_frobenius_sq(np.eye(2), np.eye(2)) == 2.0

    @pytest.mark.parametrize("shape", [(1, 1), (3, 4), (2, 5)])
    def test_zero_matrix(self, shape):
        rng = np.random.default_rng(0)
        Q = rng.standard_normal((shape[1], shape[1]))
        assert weighted_frobenius_sq(np.zeros(shape), Q.T @ Q + np.eye(shape[1])) == 0.0

    def test_diagonal_weight(self):
        E, W = [[1.0, 2.0]], [[2.0, 0.0], [0.0, 3.0]]
        assert loop_weighted_sq(E, W) == 14.0
        assert weighted_frobenius_sq(E, W) == pytest.approx(14.0, rel=1e-15)

    def test_matches_loop_oracle_random(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            E = rng.uniform(-1, 1, (3, 5))
            Q = rng.uniform(-1, 1, (5, 5))
            W = Q.T @ Q + 0.1 * np.eye(5)
            assert weighted_frobenius_sq(E, W) == pytest.approx(loop_weighted_sq(E, W), rel=1e-12)

    def test_no_weight_is_plain_frobenius(self):
        E = np.arange(6.0).reshape(2, 3)
        assert weighted_frobenius_sq(E) == weighted_frobenius_sq(E, np.eye(3)) == 55.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_frobenius_sq(np.ones((2, 3)), np.eye(2))

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, (3, 4), elements=normal), st.floats(-100, 100, allow_nan=False))
    def test_nonnegative_and_quadratic(self, E, s):
        W = WeightMatrix.from_array(np.diag([1.0, 2.0, 0.5, 3.0]) + 0.1)
        base = weighted_frobenius_sq(E, W)
        assert base >= 0
        assert weighted_frobenius_sq(s * E, W) == pytest.approx(s * s * base, rel=1e-12, abs=1e-300)
        if np.any(E != 0):
            assert base > 0


class TestWeightMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError):
            WeightMatrix.from_array([[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            WeightMatrix.from_array([[1.0, 2.0], [2.0, 1.0]])

    def test_factor_reconstructs(self):
        w = WeightMatrix.from_array([[4.0, 1.0], [1.0, 3.0]])
        np.testing.assert_allclose(w.factor @ w.factor.T, w.mat, rtol=1e-15)

    def test_immutable(self):
        w = WeightMatrix.identity(3)
        with pytest.raises(ValueError):
            w.mat[0, 0] = 2.0

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            as_matrix([[1.0, np.nan]])


class TestVec:
    def test_column_stacking(self):
        np.testing.assert_array_equal(vec([[1, 2], [3, 4]]).ravel(), [1, 3, 2, 4])

    def test_identity(self):
        np.testing.assert_array_equal(vec(np.eye(2)).ravel(), [1, 0, 0, 1])

    def test_shape_is_column(self):
        assert vec(np.ones((3, 4))).shape == (12, 1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_roundtrip_exact(self, r, c, data):
        X = data.draw(arrays(float, (r, c), elements=finite))
        assert np.array_equal(unvec(vec(X), r, c), X)

    def test_unvec_bad_size(self):
        with pytest.raises(DimensionError):
            unvec(np.ones(5), 2, 3)


class TestKron:
    def test_identity(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_row_by_column(self):
        expected = loop_kron([[1, 2]], [[3], [4]])
        assert expected == [[3, 6], [4, 8]]
        np.testing.assert_array_equal(kron([[1, 2]], [[3], [4]]), expected)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        A, B = rng.standard_normal((2, 3)), rng.standard_normal((4, 2))
        np.testing.assert_array_equal(kron(A, B), loop_kron(A.tolist(), B.tolist()))

    def test_vec_identity_random_triples(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a, q, p, b = rng.integers(1, 6, size=4)
            K, C, F = rng.standard_normal((a, q)), rng.standard_normal((q, p)), rng.standard_normal((p, b))
            lhs = vec(K @ C @ F)
            rhs = kron(F.T, K) @ vec(C)
            scale = max(1.0, np.abs(lhs).max())
            assert np.abs(lhs - rhs).max() <= 1e-12 * scale


class TestRank:
    def test_identity_row(self):
        assert validate_full_rank(np.eye(3), "row")

    def test_duplicate_direction(self):
        rep = validate_full_rank([[1, 1, 1], [2, 2, 2]], "row")
        assert not rep and rep.rank == 1

    def test_column_full_rank_eigen_oracle(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        # singular values are square roots of the eigenvalues of X^T X = [[2,1],[1,2]]: 3 and 1
        ev = np.linalg.eigvalsh(X.T @ X)
        np.testing.assert_allclose(ev, [1.0, 3.0])
        rep = validate_full_rank(X, "column")
        assert rep.full_rank
        assert rep.ratio == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-14)

    def test_wide_matrix_cannot_have_full_column_rank(self):
        assert not validate_full_rank(np.ones((2, 3)), "column")

    def test_zero_matrix(self):
        assert not validate_full_rank(np.zeros((2, 2)), "row")

    def test_relative_threshold_is_scale_free(self):
        X = np.diag([1.0, 1e-11])
        assert not validate_full_rank(X)
        assert not validate_full_rank(1e8 * X)
        assert validate_full_rank(np.diag([1.0, 1e-9]))
