import itertools

import numpy as np
import pytest

from oracles import mc_dual_expect
from src.tools.activations import RELU, SIGMOID, SWISH, TANH, f_curve, leaky_relu
from src.tools.gauss import (
    Cov2,
    Moment,
    QuadMethod,
    dual_deriv_expect,
    dual_expect,
    dual_expect_batch,
    expect_1d,
)
from src.tools.quadrature import gauss_hermite_normal
from src.utils.exceptions import DomainError, ValidationError

ALL = [RELU, leaky_relu(0.1), SIGMOID, TANH, SWISH]


class TestExpect1D:

    def test_closed_form_moments(self):
        assert expect_1d(RELU, 1.0, Moment.SQUARE) == pytest.approx(0.5)
        assert expect_1d(leaky_relu(0.5), 1.0, Moment.SQUARE) == pytest.approx(0.625)
        assert expect_1d(RELU, 1.0, Moment.DERIV_SQUARE) == pytest.approx(0.5)
        assert expect_1d(RELU, 2.0, Moment.MEAN) == pytest.approx(np.sqrt(2.0 / (2.0 * np.pi)))

    def test_zero_variance_is_point_evaluation(self):
        assert expect_1d(TANH, 0.0, Moment.DERIV_SQUARE) == 1.0
        assert expect_1d(SIGMOID, 0.0, Moment.SQUARE) == 0.0

    def test_negative_variance(self):
        with pytest.raises(DomainError):
            expect_1d(RELU, -0.5, Moment.SQUARE)

    def test_no_closed_form_for_smooth_kinds(self):
        with pytest.raises(ValidationError):
            expect_1d(TANH, 1.0, Moment.SQUARE, method=QuadMethod.CLOSED_FORM)

    @pytest.mark.parametrize("kind", [RELU, leaky_relu(0.2)], ids=str)
    @pytest.mark.parametrize("moment", list(Moment))
    def test_split_rule_matches_closed_form(self, kind, moment):
        exact = expect_1d(kind, 3.0, moment)
        assert expect_1d(kind, 3.0, moment, method=QuadMethod.SPLIT_LEGENDRE) == pytest.approx(exact, rel=1e-10)


class TestCov2:

    def test_rho(self):
        assert Cov2(4.0, 1.0, 1.0).rho == pytest.approx(0.5)
        assert Cov2(0.0, 1.0, 0.0).rho == 0.0

    @pytest.mark.parametrize("a, b, c", [(-1.0, 1.0, 0.0), (1.0, 1.0, 1.5), (np.nan, 1.0, 0.0)])
    def test_invalid(self, a, b, c):
        with pytest.raises(DomainError):
            Cov2(a, b, c)


class TestDualExpect:

    def test_relu_values(self):
        assert dual_expect(RELU, Cov2(1.0, 1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)
        assert dual_expect(RELU, Cov2(1.0, 1.0, 0.0)) == pytest.approx(1.0 / (2.0 * np.pi), abs=1e-15)
        assert dual_deriv_expect(RELU, Cov2(1.0, 1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)
        assert dual_deriv_expect(RELU, Cov2(1.0, 1.0, 0.0)) == pytest.approx(0.25, abs=1e-15)

    def test_odd_kind_uncorrelated(self):
        assert dual_expect(TANH, Cov2(1.0, 1.0, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_tanh_aligned_derivative(self):
        assert dual_deriv_expect(TANH, Cov2(1.0, 1.0, 1.0)) == pytest.approx(f_curve(TANH, 1.0) / 2.0, rel=1e-12)

    def test_zero_variance_factorises(self):
        value = dual_expect(SWISH, Cov2(0.0, 2.0, 0.0))
        assert value == 0.0
        deriv = dual_deriv_expect(SWISH, Cov2(0.0, 2.0, 0.0))
        assert deriv == pytest.approx(0.5 * expect_1d(SWISH, 2.0, Moment.DERIV_MEAN))

    def test_batch_shape(self):
        a = np.ones((3, 2))
        out = dual_expect_batch(TANH, a, a, 0.5 * a)
        assert out.shape == (3, 2)
        assert np.allclose(out, out[0, 0])

    def test_invalid_batch(self):
        with pytest.raises(DomainError):
            dual_expect_batch(RELU, [1.0, 1.0], [1.0, 1.0], [0.0, 2.0])

    @pytest.mark.parametrize("kind", [RELU, leaky_relu(0.1)], ids=str)
    @pytest.mark.parametrize("derivative", [False, True])
    def test_closed_form_against_split_quadrature(self, kind, derivative):
        grid = list(itertools.product([0.5, 1.0, 4.0], [0.5, 1.0, 4.0], [-0.99, -0.5, 0.0, 0.5, 0.99]))
        a = np.array([g[0] for g in grid])
        b = np.array([g[1] for g in grid])
        c = np.array([g[2] for g in grid]) * np.sqrt(a * b)
        closed = dual_expect_batch(kind, a, b, c, derivative, method=QuadMethod.CLOSED_FORM)
        split = dual_expect_batch(kind, a, b, c, derivative, method=QuadMethod.SPLIT_LEGENDRE)
        np.testing.assert_allclose(split, closed, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("kind", ALL, ids=str)
    def test_cauchy_schwarz_and_symmetry(self, kind):
        for a, b, rho in [(0.5, 4.0, 0.3), (2.0, 1.0, -0.8), (1.0, 3.0, 0.95)]:
            c = rho * np.sqrt(a * b)
            value = dual_expect(kind, Cov2(a, b, c))
            swapped = dual_expect(kind, Cov2(b, a, c))
            assert value == pytest.approx(swapped, rel=1e-10, abs=1e-14)
            bound = expect_1d(kind, a, Moment.SQUARE) * expect_1d(kind, b, Moment.SQUARE)
            assert value ** 2 <= bound * (1 + 1e-10)

    @pytest.mark.parametrize("kind", [SIGMOID, TANH, SWISH], ids=str)
    @pytest.mark.parametrize("derivative", [False, True])
    def test_quadrature_order_converged(self, kind, derivative):
        scales = [0.5, 1.0, 2.0, 30.0, 300.0]
        grid = list(itertools.product(scales, scales, [-0.99, -0.5, 0.0, 0.5, 0.99]))
        a = np.array([g[0] for g in grid])
        b = np.array([g[1] for g in grid])
        c = np.array([g[2] for g in grid]) * np.sqrt(a * b)
        coarse = dual_expect_batch(kind, a, b, c, derivative, quad_order=128)
        fine = dual_expect_batch(kind, a, b, c, derivative, quad_order=256)
        np.testing.assert_allclose(coarse, fine, atol=1e-9)

    @pytest.mark.parametrize("kind", [SIGMOID, TANH, SWISH], ids=str)
    def test_one_dimensional_order_converged(self, kind):
        for variance in (0.5, 2.0, 30.0, 300.0, 3000.0):
            for moment in Moment:
                coarse = expect_1d(kind, variance, moment, 128)
                fine = expect_1d(kind, variance, moment, 256)
                assert abs(coarse - fine) <= 1e-9 * max(1.0, abs(fine))

    def test_hermite_order_capped(self):
        with pytest.raises(ValidationError):
            gauss_hermite_normal(512)
        with pytest.raises(ValidationError):
            dual_expect_batch(TANH, 1.0, 1.0, 0.5, quad_order=512, method=QuadMethod.GAUSS_HERMITE)

    def test_auto_matches_split_at_large_variance(self):
        a = np.array([30.0, 300.0, 1000.0])
        b = np.array([300.0, 300.0, 1000.0])
        c = np.array([0.3, 0.99, 0.5]) * np.sqrt(a * b)
        auto = dual_expect_batch(SWISH, a, b, c, True)
        split = dual_expect_batch(SWISH, a, b, c, True, method=QuadMethod.SPLIT_LEGENDRE)
        np.testing.assert_allclose(auto, split, rtol=0.0, atol=0.0)


class TestMonteCarloAgreement:

    def test_relu_known_values(self):
        mean, stderr = mc_dual_expect(RELU, Cov2(1.0, 1.0, 1.0), seed=1)
        assert abs(mean - 0.5) <= 3 * stderr
        mean, stderr = mc_dual_expect(RELU, Cov2(1.0, 1.0, 0.0), seed=2)
        assert abs(mean - 1.0 / (2.0 * np.pi)) <= 3 * stderr

    @pytest.mark.parametrize("kind", ALL, ids=str)
    @pytest.mark.parametrize("derivative", [False, True])
    def test_quadrature_within_three_stderr(self, kind, derivative):
        cov = Cov2(1.0, 2.0, 0.5 * np.sqrt(2.0))
        report = mc_dual_expect(kind, cov, n_samples=400_000, seed=7, derivative=derivative)
        value = dual_deriv_expect(kind, cov) if derivative else dual_expect(kind, cov)
        assert abs(value - report.value) <= 3 * report.radius + 1e-12

    @pytest.mark.parametrize("kind", [TANH, SWISH], ids=str)
    @pytest.mark.parametrize("derivative", [False, True])
    @pytest.mark.parametrize("cov", [Cov2(300.0, 300.0, 297.0), Cov2(1000.0, 1000.0, 500.0)],
                             ids=["a300-rho099", "a1000-rho05"])
    def test_large_variance_within_four_stderr(self, kind, derivative, cov):
        report = mc_dual_expect(kind, cov, n_samples=400_000, seed=11, derivative=derivative)
        value = dual_deriv_expect(kind, cov) if derivative else dual_expect(kind, cov)
        assert abs(value - report.value) <= 4 * report.radius + 1e-12

    def test_swish_derivative_near_step_limit(self):
        # sigma' tends to a unit step: E[H(u) H(v)] = 1/4 + arcsin(rho) / (2 pi)
        value = dual_deriv_expect(SWISH, Cov2(1000.0, 1000.0, 500.0))
        assert value == pytest.approx(0.25 + np.arcsin(0.5) / (2.0 * np.pi), abs=2e-3)
