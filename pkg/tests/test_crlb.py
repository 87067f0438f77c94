import numpy as np
import pytest

from clscal.crlb import (
    constrained_projector,
    crlb_constrained,
    crlb_unconstrained,
    matrix_norm,
    vectorize_model,
)
from clscal.linalg import WeightMatrix, vec
from clscal.oracles import crlb_nullspace, random_instance
from clscal.solver import ConstraintSpec, ProblemData

ONES = np.ones((3, 1))
ROW_SUM = ConstraintSpec.create(np.eye(3), ONES, ONES)
TOTAL_SUM = ConstraintSpec.create(ONES.T, ONES, [[3.0]])


def chart_problem(rng, k=24):
    return ProblemData.create(rng.uniform(0.05, 1, (3, k)), rng.uniform(0, 1, (3, k)))


class TestVectorize:
    def test_scalar_shapes(self):
        prob = ProblemData.create([[2.0, 3.0, 5.0]], [[1.0, 1.0, 1.0]])
        model = vectorize_model(prob, ConstraintSpec.create([[2.0]], [[4.0]], [[1.0]]))
        np.testing.assert_array_equal(model.B, [[2.0], [3.0], [5.0]])
        np.testing.assert_array_equal(model.A, [[8.0]])

    def test_row_sum_blocks(self):
        rng = np.random.default_rng(50)
        model = vectorize_model(chart_problem(rng), ROW_SUM)
        # vec(C 1) = (1^T (x) I_3) vec(C): row i picks C[i, 0], C[i, 1], C[i, 2]
        expected = np.zeros((3, 9))
        for i in range(3):
            for j in range(3):
                expected[i, 3 * j + i] = 1.0
        np.testing.assert_array_equal(model.A, expected)
        C = rng.uniform(-1, 1, (3, 3))
        np.testing.assert_allclose(model.A @ vec(C), vec(C @ ONES), rtol=1e-15)

    def test_total_sum_all_ones(self):
        model = vectorize_model(chart_problem(np.random.default_rng(51)), TOTAL_SUM)
        np.testing.assert_array_equal(model.A, np.ones((1, 9)))

    def test_consistency_random(self):
        rng = np.random.default_rng(52)
        for _ in range(30):
            prob, con = random_instance(rng)
            model = vectorize_model(prob, con)
            C = rng.uniform(-1, 1, (prob.q, prob.p))
            np.testing.assert_allclose(model.B @ vec(C), vec(C @ prob.M), atol=1e-12)
            np.testing.assert_allclose(model.A @ vec(C), vec(con.K @ C @ con.F), atol=1e-12)
            assert model.B.shape == (prob.q * prob.k, prob.q * prob.p)

    def test_no_constraint(self):
        model = vectorize_model(chart_problem(np.random.default_rng(53)))
        assert model.A.shape == (0, 9)


class TestUnconstrained:
    def test_identity(self):
        prob = ProblemData.create(np.eye(3), np.zeros((1, 3)))
        np.testing.assert_allclose(crlb_unconstrained(vectorize_model(prob)), np.eye(3), atol=1e-15)

    def test_sigma_scaling(self):
        rng = np.random.default_rng(54)
        prob = chart_problem(rng)
        n = 3 * prob.k
        a = crlb_unconstrained(vectorize_model(prob, sigma=WeightMatrix.from_array(0.01 * np.eye(n))))
        b = crlb_unconstrained(vectorize_model(prob, sigma=WeightMatrix.from_array(0.04 * np.eye(n))))
        np.testing.assert_allclose(b, 4 * a, rtol=1e-12)
        BtB = vectorize_model(prob).B.T @ vectorize_model(prob).B
        np.testing.assert_allclose(a, 0.01 * np.linalg.inv(BtB), rtol=1e-9, atol=1e-15)


class TestConstrained:
    def test_no_constraint_no_reduction(self):
        rep = crlb_constrained(vectorize_model(chart_problem(np.random.default_rng(55))))
        np.testing.assert_array_equal(rep.J_c_inv, rep.J_u_inv)
        assert rep.reduction_pct == 0.0

    def test_structure_random(self):
        rng = np.random.default_rng(56)
        for _ in range(100):
            prob, con = random_instance(rng)
            model = vectorize_model(prob, con)
            rep = crlb_constrained(model)
            ev = np.linalg.eigvalsh(rep.J_u_inv - rep.J_c_inv)
            assert ev.min() >= -1e-10 * max(np.abs(ev).max(), 1.0)
            AJA = model.A @ rep.J_c_inv @ model.A.T
            scale = np.abs(model.A @ rep.J_u_inv @ model.A.T).max()
            assert np.abs(AJA).max() <= 1e-9 * max(scale, 1.0)
            assert rep.norm_c <= rep.norm_u * (1 + 1e-12)
            assert np.abs(rep.J_c_inv - crlb_nullspace(model)).max() <= 1e-9 * np.abs(rep.J_u_inv).max()
            P = constrained_projector(model)
            assert np.abs(P @ P - P).max() <= 1e-10 * max(np.abs(P).max(), 1.0)

    def test_nested_psd_order(self):
        rng = np.random.default_rng(57)
        for _ in range(30):
            prob = chart_problem(rng)
            row = crlb_constrained(vectorize_model(prob, ROW_SUM))
            tot = crlb_constrained(vectorize_model(prob, TOTAL_SUM))
            ev = np.linalg.eigvalsh(tot.J_c_inv - row.J_c_inv)
            assert ev.min() >= -1e-10 * np.abs(ev).max()
            assert row.norm_c <= tot.norm_c <= tot.norm_u

    def test_spectral_norm_option(self):
        prob = chart_problem(np.random.default_rng(58))
        rep = crlb_constrained(vectorize_model(prob, ROW_SUM), norm="spectral")
        assert rep.norm_u == pytest.approx(np.linalg.eigvalsh(rep.J_u_inv).max(), rel=1e-12)
        assert rep.reduction_pct <= 0

    def test_unknown_norm(self):
        with pytest.raises(ValueError):
            matrix_norm(np.eye(2), "nuclear")
