import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats
from scipy.special import ndtri

from normconv.errors import NonPositiveInput, ZeroVariance
from normconv.stats_distance import (EmpiricalSample, Moments, bootstrap_se, ks_std_normal, rate_fit,
                                     reduce_moments, variance_se, wasserstein1_std_normal)


def quantiles(n, shift=0.0):
    return ndtri((np.arange(1, n + 1) - 0.5) / n) + shift


def w1_reference(x):
    """Integral of |F_n - Phi| by adaptive quadrature between order statistics."""
    x = np.sort(x)
    n = x.size
    total = integrate.quad(stats.norm.cdf, -np.inf, x[0])[0]
    total += integrate.quad(stats.norm.sf, x[-1], np.inf)[0]
    for i in range(n - 1):
        total += integrate.quad(lambda t: abs((i + 1) / n - stats.norm.cdf(t)), x[i], x[i + 1])[0]
    return total


def test_point_mass():
    assert wasserstein1_std_normal([0.0]) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert ks_std_normal([0.0]) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=1, max_size=25))
def test_w1_matches_quadrature(values):
    assert wasserstein1_std_normal(values) == pytest.approx(w1_reference(values), abs=1e-7)


def test_exact_quantiles():
    q = quantiles(10_000)
    assert wasserstein1_std_normal(q) < 5e-4
    assert ks_std_normal(q) < 1e-4
    for c in (0.3, -1.5):
        assert wasserstein1_std_normal(q + c) == pytest.approx(abs(c), abs=1e-3)


def test_uniform_ks():
    x = np.random.default_rng(3).uniform(-1, 1, 10_000)
    # 1/2 > max phi, so x/2 + 1/2 - Phi(x) has no interior stationary point
    assert optimize.minimize_scalar(lambda t: 0.5 - stats.norm.pdf(t)).fun > 0
    t = np.linspace(-6, 6, 200_001)
    gap = np.abs(np.clip(t / 2 + 0.5, 0, 1) - stats.norm.cdf(t))
    target = gap.max()
    assert target == pytest.approx(stats.norm.sf(1.0), abs=1e-4)
    assert abs(ks_std_normal(x) - target) < 3 * math.sqrt(0.25 / x.size)


def test_ks_against_scipy():
    x = np.random.default_rng(4).standard_normal(500)
    assert ks_std_normal(x) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=40), st.floats(-2, 2))
def test_translation_and_invariance(values, c):
    x = np.array(values)
    w = wasserstein1_std_normal(x)
    assert abs(wasserstein1_std_normal(x + c) - w) <= abs(c) + 1e-9
    perm = np.random.default_rng(0).permutation(x)
    assert wasserstein1_std_normal(perm) == pytest.approx(w, abs=1e-12)
    dup = np.concatenate([x, x])
    assert wasserstein1_std_normal(dup) == pytest.approx(w, abs=1e-9)
    assert ks_std_normal(dup) == pytest.approx(ks_std_normal(x), abs=1e-12)


def test_clt_ladder():
    rng = np.random.default_rng(5)
    prev = np.inf
    for n in (1, 2, 10, 50):
        s = rng.uniform(-1, 1, (40_000, n)).sum(axis=1) / math.sqrt(n / 3)
        w = wasserstein1_std_normal(s)
        assert w < prev
        prev = w


def test_rate_fit():
    T = np.array([10.0, 100.0, 1000.0])
    fit = rate_fit(list(zip(T, T**-0.25)))
    assert fit.slope == pytest.approx(-0.25) and fit.r2 == pytest.approx(1.0)
    slope, intercept, r2 = rate_fit(list(zip(T, 3 * T**-0.1)))
    assert slope == pytest.approx(-0.1) and intercept == pytest.approx(math.log(3))
    with pytest.raises(NonPositiveInput):
        rate_fit([(1, 1), (2, 0), (3, 1)])
    with pytest.raises(ValueError):
        rate_fit([(1, 1), (2, 1)])


def test_standardize():
    s = EmpiricalSample.standardized([1.0, 3.0, 5.0], seed=9)
    assert s.values.tolist() == [-1.0, 0.0, 1.0] and s.replication_count == 3
    s = EmpiricalSample.standardized([1.0, -1.0], variance=4.0)
    assert s.values.tolist() == [-0.5, 0.5]
    with pytest.raises(ZeroVariance):
        EmpiricalSample.standardized([2.0, 2.0])
    with pytest.raises(ValueError):
        EmpiricalSample([1.0, np.inf], 2)


def test_moments_merge_order_independent():
    rng = np.random.default_rng(1)
    chunks = [rng.normal(size=k) for k in (5, 17, 1, 40, 3)]
    m = reduce_moments(chunks)
    allv = np.concatenate(chunks)
    assert m.count == allv.size
    assert m.mean == pytest.approx(allv.mean(), rel=1e-13)
    assert m.variance == pytest.approx(allv.var(ddof=1), rel=1e-12)
    assert reduce_moments(chunks) == m


def test_variance_se_and_bootstrap():
    x = np.random.default_rng(2).standard_normal(20_000)
    v, se = variance_se(x)
    assert se == pytest.approx(math.sqrt(2 / x.size), rel=0.05)
    b1 = bootstrap_se(x, np.mean, seed=3)
    assert b1 == bootstrap_se(x, np.mean, seed=3)
    assert b1 == pytest.approx(1 / math.sqrt(x.size), rel=0.5)
