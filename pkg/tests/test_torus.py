"""Eigenbasis and quadrature on the flat circle."""

import math

import numpy as np
import pytest

from srdlab.torus import (
    COSINE,
    SINE,
    BasisFunction,
    circumference,
    eigenvalue,
    eval_basis,
    make_quadrature,
    wrap,
)


class TestEigenvalue:
    def test_identity_case(self):
        assert eigenvalue(1, 1.0) == -1.0

    def test_closed_form_substitutions(self):
        assert eigenvalue(2, 0.5) == pytest.approx(-16.0, abs=0)
        assert eigenvalue(3, 2.0) == pytest.approx(-2.25, abs=0)

    @pytest.mark.parametrize("k,L", [(0, 1.0), (-1, 1.0), (1, 0.0), (1, -2.0), (1.5, 1.0)])
    def test_rejects_degenerate_input(self, k, L):
        with pytest.raises(ValueError):
            eigenvalue(k, L)


class TestEvalBasis:
    def test_cosine_at_origin(self):
        f = BasisFunction(kind=COSINE, frequency=1, circumference_param=1.0)
        value, deriv = eval_basis(f, 0.0)
        assert value == pytest.approx(math.pi**-0.5, rel=1e-15)
        assert deriv == pytest.approx(0.0, abs=1e-15)

    def test_sine_at_origin(self):
        f = BasisFunction(kind=SINE, frequency=1, circumference_param=1.0)
        value, deriv = eval_basis(f, 0.0)
        assert value == pytest.approx(0.0, abs=1e-15)
        assert deriv == pytest.approx(math.pi**-0.5, rel=1e-15)

    @pytest.mark.parametrize("kind", [COSINE, SINE])
    @pytest.mark.parametrize("k,L", [(1, 1.0), (3, 0.5), (2, 2.0)])
    def test_periodicity(self, kind, k, L):
        f = BasisFunction(kind=kind, frequency=k, circumference_param=L)
        x = np.array([0.1, 1.7, 5.3])
        v0, d0 = eval_basis(f, x)
        v1, d1 = eval_basis(f, x + circumference(L))
        np.testing.assert_allclose(v1, v0, atol=1e-12)
        np.testing.assert_allclose(d1, d0, atol=1e-12)

    @pytest.mark.parametrize("kind", [COSINE, SINE])
    def test_derivative_against_finite_differences(self, kind):
        f = BasisFunction(kind=kind, frequency=3, circumference_param=1.5)
        rng = np.random.default_rng(7)
        x = rng.uniform(0.0, circumference(1.5), size=20)
        h = 1e-6
        fd = (f.value(x + h) - f.value(x - h)) / (2 * h)
        np.testing.assert_allclose(f.derivative(x), fd, atol=1e-7)

    def test_second_derivative_is_eigenrelation(self):
        f = BasisFunction(kind=COSINE, frequency=2, circumference_param=0.75)
        x = np.linspace(0.0, circumference(0.75), 11)
        np.testing.assert_allclose(f.second_derivative(x), f.eigenvalue * f.value(x), rtol=1e-14)

    def test_wrap_stays_in_domain(self):
        x = np.array([-0.3, 0.0, 10.0, 100.5])
        w = wrap(x, 1.0)
        assert np.all(w >= 0.0) and np.all(w < circumference(1.0))


class TestQuadrature:
    @pytest.mark.parametrize("L", [0.5, 1.0, 2.0])
    def test_constant_integrates_to_volume(self, L):
        rule = make_quadrature(4, L)
        assert rule.integrate(np.ones_like(rule.nodes)) == pytest.approx(circumference(L), rel=1e-14)

    def test_cosine_squared(self):
        L = 1.3
        rule = make_quadrature(2, L)
        assert rule.integrate(lambda x: np.cos(x / L) ** 2) == pytest.approx(math.pi * L, rel=1e-14)

    def test_odd_product_vanishes(self):
        L = 0.8
        rule = make_quadrature(2, L)
        assert rule.integrate(lambda x: np.cos(x / L) * np.sin(x / L)) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("L", [0.5, 1.0, 2.0])
    def test_exactness_on_declared_frequencies(self, L):
        F = 6
        rule = make_quadrature(F, L)
        for j in range(1, F + 1):
            assert rule.integrate(lambda x: np.cos(j * x / L)) == pytest.approx(0.0, abs=1e-12)
        assert rule.integrate(lambda x: np.cos(0 * rule.nodes)) == pytest.approx(
            circumference(L), rel=1e-14
        )

    def test_weights_positive_and_normalized(self):
        rule = make_quadrature(5, 2.0)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(circumference(2.0), rel=1e-14)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            make_quadrature(0, 1.0)
        with pytest.raises(ValueError):
            make_quadrature(3, -1.0)


class TestOrthonormality:
    @pytest.mark.parametrize("L", [0.5, 1.0, 2.0])
    def test_pairwise_orthonormal(self, L):
        F = 8
        rule = make_quadrature(F, L)
        members = [
            BasisFunction(kind=kind, frequency=k, circumference_param=L)
            for k in range(1, F // 2 + 1)
            for kind in (COSINE, SINE)
        ]
        for i, phi in enumerate(members):
            for j, psi in enumerate(members):
                inner = rule.integrate(phi.value(rule.nodes) * psi.value(rule.nodes))
                assert inner == pytest.approx(1.0 if i == j else 0.0, abs=1e-12)

    def test_eigenrelation_by_quadrature(self):
        L = 1.0
        F = 8
        rule = make_quadrature(F, L)
        members = [
            BasisFunction(kind=kind, frequency=k, circumference_param=L)
            for k in (1, 2, 3)
            for kind in (COSINE, SINE)
        ]
        for phi in members:
            residual = phi.second_derivative(rule.nodes) - phi.eigenvalue * phi.value(rule.nodes)
            for psi in members:
                assert rule.integrate(residual * psi.value(rule.nodes)) == pytest.approx(
                    0.0, abs=1e-12
                )
