"""Unit tests for the shared least-squares helpers."""

import numpy as np
import pytest

from sisda.linalg import (
    RankDeficiencyError,
    quad_form_coeffs,
    residual_operator,
    rss,
)


class TestRss:
    def test_projection_onto_e1(self):
        # Projecting (1,2) on e1 leaves residual (0,2).
        assert rss(np.array([1.0, 2.0]), np.array([[1.0], [0.0]])) == pytest.approx(4.0)

    def test_exact_fit(self):
        X = np.array([[1.0], [2.0], [3.0]])
        assert rss(3.5 * X[:, 0], X) == pytest.approx(0.0, abs=1e-12)

    def test_simple_regression(self):
        Y = np.ones(3)
        X = np.array([[1.0], [2.0], [3.0]])
        # coef = 6/14; rss = sum (1 - coef*x)^2 = 3 - 36/14.
        assert rss(Y, X) == pytest.approx(3.0 - 36.0 / 14.0, abs=1e-6)
        assert rss(Y, X) == pytest.approx(0.4286, abs=1e-4)

    def test_empty_model(self):
        Y = np.array([1.0, 2.0, 2.0])
        assert rss(Y, np.empty((3, 0))) == pytest.approx(float(Y @ Y))

    def test_rank_deficient_raises(self):
        X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficiencyError):
            rss(np.ones(3), X, columns=(0, 1))

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            X = rng.standard_normal((12, 4))
            Y = rng.standard_normal(12)
            coef = np.linalg.solve(X.T @ X, X.T @ Y)
            expect = float((Y - X @ coef) @ (Y - X @ coef))
            assert rss(Y, X) == pytest.approx(expect, rel=1e-10)


class TestResidualOperator:
    def test_full_span_is_zero(self):
        assert residual_operator(np.eye(3)) == pytest.approx(np.zeros((3, 3)), abs=1e-12)

    def test_empty_model_is_identity(self):
        assert residual_operator(np.empty((4, 0))) == pytest.approx(np.eye(4))

    def test_ones_column(self):
        expect = np.array([[0.5, -0.5], [-0.5, 0.5]])
        assert residual_operator(np.array([1.0, 1.0])) == pytest.approx(expect)

    def test_idempotent_symmetric(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((8, 3))
        P = residual_operator(X)
        assert P == pytest.approx(P.T, abs=1e-12)
        assert P @ P == pytest.approx(P, abs=1e-10)


class TestQuadFormCoeffs:
    def test_pure_quadratic(self):
        assert quad_form_coeffs(
            np.zeros(2), np.array([1.0, 0.0]), np.eye(2)
        ) == pytest.approx((0.0, 0.0, 1.0))

    def test_pure_constant(self):
        assert quad_form_coeffs(
            np.array([1.0, 0.0]), np.zeros(2), np.eye(2)
        ) == pytest.approx((1.0, 0.0, 0.0))

    def test_cross_term(self):
        L = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert quad_form_coeffs(
            np.array([1.0, 0.0]), np.array([0.0, 1.0]), L
        ) == pytest.approx((0.0, 2.0, 0.0))

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 5))
        L = rng.standard_normal((5, 5))
        w, r, o = quad_form_coeffs(a, b, L)
        for z in (-1.3, 0.0, 0.7, 2.2):
            v = a + b * z
            assert w + r * z + o * z * z == pytest.approx(float(v @ L @ v), rel=1e-12)
