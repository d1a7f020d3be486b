"""Probabilists' Hermite polynomials and Gaussian expansions."""
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import hermite_e

from ._validation import check_count
from .errors import NonFiniteFunctionValue, RhoOutOfRange

ZERO_TOL = 1e-10
MIN_NODES = 64


def hermite_eval(q, x):
    """H_q(x) via the three-term recurrence.  Vectorized over ``x``."""
    q = check_count("q", q, minimum=0)
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if q == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for k in range(1, q):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


def hermite_table(Q, x):
    """Rows H_0(x), ..., H_Q(x)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + x.shape)
    out[0] = 1.0
    if Q >= 1:
        out[1] = x
    for k in range(1, Q):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


@lru_cache(maxsize=32)
def _gauss_nodes(n):
    x, w = hermite_e.hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_nodes(n=MIN_NODES):
    """Nodes and weights integrating against the standard normal density."""
    return _gauss_nodes(int(n))


def gaussian_expectation(f, nodes=MIN_NODES):
    x, w = gauss_nodes(nodes)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise NonFiniteFunctionValue("function is not finite at a quadrature node")
    return float(w @ fx)


@dataclass(frozen=True)
class HermiteExpansion:
    coefficients: np.ndarray
    truncation_order: int
    quadrature_nodes: int

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.truncation_order + 1,):
            raise ValueError("coefficients must have length Q+1")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def c0(self):
        return float(self.coefficients[0])

    @property
    def c1(self):
        return float(self.coefficients[1])

    @property
    def variance(self):
        """Var f(Z) as carried by the truncated series."""
        q = np.arange(1, self.truncation_order + 1)
        return float(np.sum(self.coefficients[1:] ** 2 * _factorials(q)))

    def is_even(self, tol=ZERO_TOL):
        return bool(np.all(np.abs(self.coefficients[1::2]) < tol))

    def __call__(self, x):
        """Evaluate the truncated series sum_q c_q H_q(x)."""
        x = np.asarray(x, dtype=float)
        return np.tensordot(self.coefficients, hermite_table(self.truncation_order, x), axes=1)

    def covariance(self, rho):
        return subordinated_cov(self, rho)


def _factorials(q):
    return np.array([float(factorial(int(k))) for k in np.atleast_1d(q)])


def expand(f, Q, nodes=None):
    """Coefficients c_q = E[f(Z) H_q(Z)] / q! for q = 0..Q."""
    Q = check_count("Q", Q, minimum=1)
    if nodes is None:
        nodes = max(MIN_NODES, 2 * Q)
    nodes = check_count("nodes", nodes, minimum=2 * Q)
    x, w = gauss_nodes(nodes)
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.array([float(f(v)) for v in x])
    if not np.all(np.isfinite(fx)):
        raise NonFiniteFunctionValue("function is not finite at a quadrature node")
    c = hermite_table(Q, x) @ (w * fx) / _factorials(np.arange(Q + 1))
    c[np.abs(c) < 1e-15] = 0.0
    return HermiteExpansion(c, Q, nodes)


def subordinated_cov(exp, rho):
    """Cov[f(Z1), f(Z2)] for standard normals with correlation ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise RhoOutOfRange(f"|rho| must be <= 1, got {rho!r}")
    q = np.arange(1, exp.truncation_order + 1)
    weights = exp.coefficients[1:] ** 2 * _factorials(q)
    out = np.power.outer(rho, q) @ weights
    return float(out) if np.ndim(out) == 0 else out
