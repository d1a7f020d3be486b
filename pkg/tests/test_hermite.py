import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e

from normconv.errors import NonFiniteFunctionValue, RhoOutOfRange
from normconv.hermite import (expand, gauss_nodes, gaussian_expectation, hermite_eval,
                              subordinated_cov)

FUNCS = {
    "x": lambda x: x,
    "x2": lambda x: x**2,
    "x3+x": lambda x: x**3 + x,
    "cos": np.cos,
}


def bivariate_cov(f, rho, n=80):
    # tensor Gauss-Hermite over (Z1, Z2) with Z2 = rho Z1 + sqrt(1-rho^2) W
    x, w = hermite_e.hermegauss(n)
    w = w / math.sqrt(2 * math.pi)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    z2 = rho * X + math.sqrt(max(0.0, 1 - rho * rho)) * Y
    m = np.sum(W * f(X))
    return float(np.sum(W * f(X) * f(z2)) - m * m)


def test_low_orders():
    assert hermite_eval(0, 7.3) == 1.0
    assert hermite_eval(1, -2.5) == -2.5
    assert hermite_eval(2, 2.0) == pytest.approx(3.0, abs=1e-15)


@given(st.integers(0, 12), st.floats(-6, 6))
def test_matches_numpy_hermite_e(q, x):
    ref = hermite_e.hermeval(x, [0] * q + [1])
    assert hermite_eval(q, x) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_vectorized():
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(hermite_eval(3, x), x**3 - 3 * x, atol=1e-12)


def test_orthogonality():
    x, w = gauss_nodes(64)
    for p in range(11):
        for q in range(11):
            val = w @ (hermite_eval(p, x) * hermite_eval(q, x))
            assert abs(val - math.factorial(q) * (p == q)) < 1e-8


def test_expand_examples():
    np.testing.assert_allclose(expand(lambda x: x, 3).coefficients, [0, 1, 0, 0], atol=1e-10)
    c = expand(lambda x: x**2, 4).coefficients
    np.testing.assert_allclose(c, [1, 0, 1, 0, 0], atol=1e-10)
    e = expand(np.cos, 6)
    assert abs(e.c1) < 1e-10
    assert e.is_even()
    # E[cos Z H_2k(Z)] / (2k)! = (-1)^k e^{-1/2} / (2k)!
    for k in range(4):
        assert e.coefficients[2 * k] == pytest.approx((-1) ** k * math.exp(-0.5) / math.factorial(2 * k), abs=1e-12)


def test_expand_c1_cubic():
    assert expand(lambda x: x**3 + x, 6).c1 == pytest.approx(4.0, abs=1e-12)


def test_expand_defaults_and_errors():
    e = expand(np.sin, 40)
    assert e.quadrature_nodes == 80
    assert len(e.coefficients) == 41
    with pytest.raises(NonFiniteFunctionValue):
        expand(lambda x: np.where(x > 0, np.inf, 0.0), 3)
    with pytest.raises(ValueError):
        expand(np.sin, 5, nodes=8)


def test_subordinated_cov_examples():
    assert subordinated_cov(expand(lambda x: x, 3), 0.3) == pytest.approx(0.3, abs=1e-12)
    assert subordinated_cov(expand(np.cos, 10), 0.0) == 0.0
    assert subordinated_cov(expand(lambda x: x**2, 4), 0.5) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(RhoOutOfRange):
        subordinated_cov(expand(np.cos, 4), 1.01)


@pytest.mark.parametrize("name", sorted(FUNCS))
@pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.5, 0.9])
def test_subordinated_cov_against_2d_quadrature(name, rho):
    f = FUNCS[name]
    assert abs(subordinated_cov(expand(f, 30), rho) - bivariate_cov(f, rho)) < 1e-6


def test_truncation_monotone():
    e_ref = [expand(np.cos, Q) for Q in range(2, 30, 2)]
    for rho in (-0.95, 0.3, 0.8):
        gaps = [abs(subordinated_cov(b, rho) - subordinated_cov(a, rho)) for a, b in zip(e_ref, e_ref[1:])]
        assert all(g2 <= g1 + 1e-15 for g1, g2 in zip(gaps, gaps[1:]))
    # polynomial f: exact once Q reaches the degree
    p = lambda x: x**3 + x
    assert subordinated_cov(expand(p, 3), 0.7) == pytest.approx(subordinated_cov(expand(p, 9), 0.7), abs=1e-12)


def test_series_evaluation_reproduces_polynomial():
    e = expand(lambda x: x**3 + x, 5)
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(e(x), x**3 + x, atol=1e-10)
    assert e.variance == pytest.approx(22.0, abs=1e-10)  # E(Z^3+Z)^2 = 15 + 6 + 1


def test_gaussian_expectation():
    assert gaussian_expectation(lambda x: x**4) == pytest.approx(3.0, abs=1e-12)
