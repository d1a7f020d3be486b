import csv
import math

import numpy as np
import pytest

from normconv.covmodels import CovarianceModel, DecayClass, fbm_increment_cov, fbm_increments, ou_exponential
from normconv.errors import HurstOutOfRange, NotPSD, UnstableStep
from normconv.gauss_paths import (PathGrid, cholesky_factor, covariance_matrix, sample_fbm, sample_fou,
                                  sample_stationary)


def cov_se(a, b):
    """Sample covariance of two centered columns and its standard error."""
    p = a * b
    return p.mean(), p.std(ddof=1) / math.sqrt(p.size)


def test_single_point_variance():
    b = sample_stationary(ou_exponential(1.0, 2.5), 1, 1.0, 10_000, seed=1)
    x = b.values[:, 0]
    se = 2.5 * math.sqrt(2 / x.size)
    assert abs(x.var() - 2.5) < 3 * se


def test_bm_increments_identity():
    x = sample_stationary(fbm_increments(0.5), 16, 1.0, 10_000, seed=2).values
    C = x.T @ x / x.shape[0]
    se = math.sqrt(2 / x.shape[0])
    off = C - np.eye(16)
    assert np.max(np.abs(np.diag(off))) < 3.5 * se
    assert np.max(np.abs(off - np.diag(np.diag(off)))) < 4 * math.sqrt(1 / x.shape[0])


@pytest.mark.parametrize("method", ["cholesky", "circulant"])
def test_fgn_lag5_covariance(method):
    x = sample_stationary(fbm_increments(0.7), 16, 1.0, 10_000, seed=3, method=method).values
    c, se = cov_se(x[:, 0], x[:, 5])
    target = (6**1.4 + 4**1.4 - 2 * 5**1.4) / 2
    assert target == pytest.approx(fbm_increment_cov(0.7, 5))
    assert abs(c - target) < 3 * se


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_fbm_variance(H):
    b = sample_fbm(H, 8, 0.25, 10_000, seed=4)
    assert b.values.shape == (10_000, 9)
    assert np.all(b.values[:, 0] == 0)
    v = b.values[:, 8] ** 2          # t = 2
    assert abs(v.mean() - 2 ** (2 * H)) < 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_fbm_cross_covariance():
    b = sample_fbm(0.7, 3, 1.0, 10_000, seed=5).values
    c, se = cov_se(b[:, 1], b[:, 3])
    assert abs(c - 0.5 * (1 + 3**1.4 - 2**1.4)) < 3 * se
    bm = sample_fbm(0.5, 2, 1.0, 10_000, seed=6).values
    c, se = cov_se(bm[:, 1], bm[:, 2])
    assert abs(c - 1.0) < 3 * se


def test_fbm_half_independent_increments():
    inc = np.diff(sample_fbm(0.5, 200, 1.0, 200, seed=7).values, axis=1)
    r = np.mean(inc[:, :-1] * inc[:, 1:]) / np.mean(inc**2)
    assert abs(r) < 3 / math.sqrt(inc[:, 1:].size)


@pytest.mark.parametrize("model", [fbm_increments(0.3), fbm_increments(0.7), fbm_increments(0.5),
                                   ou_exponential(0.3)], ids=lambda m: f"{m.name}-{m.params}")
def test_factorization_roundtrip(model):
    for n in (1, 5, 64):
        S = covariance_matrix(model, n, 0.5)
        L = cholesky_factor(S)
        assert np.max(np.abs(L @ L.T - S)) <= 1e-8 * model.variance_at_zero


def test_not_psd():
    bad = CovarianceModel("bad", lambda T: np.where(np.asarray(T) < 0.5, 1.0, -0.9), 1.0,
                          DecayClass.integrable())
    with pytest.raises(NotPSD):
        sample_stationary(bad, 3, 1.0, 2, seed=0)
    with pytest.raises(NotPSD):
        sample_stationary(bad, 3, 1.0, 2, seed=0, method="circulant")


def test_reproducible():
    a = sample_fbm(0.7, 50, 1.0, 3, seed=11).values
    b = sample_fbm(0.7, 50, 1.0, 3, seed=11).values
    c = sample_fbm(0.7, 50, 1.0, 3, seed=12).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    # a replicate does not depend on how many others are requested
    d = sample_stationary(fbm_increments(0.3), 20, 1.0, 5, seed=1).values
    e = sample_stationary(fbm_increments(0.3), 20, 1.0, 2, seed=1).values
    assert np.array_equal(d[:2], e)


def test_hurst_validation():
    with pytest.raises(HurstOutOfRange):
        sample_fbm(1.0, 4, 1.0, 1, seed=0)


def test_fou_zero_noise():
    y = sample_fou(0.7, 1.0, 0.0, 100, 0.1, count=2, seed=1)
    assert np.all(y.values == 0)


def test_fou_unstable_step():
    with pytest.raises(UnstableStep):
        sample_fou(0.7, 20.0, 1.0, 10, 0.1, seed=0)


def test_fou_half_is_ou():
    lam, sig, dt = 1.0, 1.5, 0.02
    y = sample_fou(0.5, lam, sig, 20_000, dt, count=40, seed=8).values
    for k in (0, 25, 50):
        prods = np.mean(y[:, : y.shape[1] - k] * y[:, k:], axis=1)
        est = prods.mean()
        se = prods.std(ddof=1) / math.sqrt(prods.size)
        target = sig**2 / (2 * lam) * math.exp(-lam * k * dt)
        # Euler bias is O(lam dt)
        assert abs(est - target) < 3 * se + 2 * lam * dt * target


def test_fou_long_memory_constant():
    T, dt = 50.0, 0.1
    L = int(T / dt)
    y = sample_fou(0.7, 1.0, 1.0, 40_000, dt, count=200, seed=0).values
    est = np.mean(y[:, :-L] * y[:, L:]) * T**0.6
    assert est == pytest.approx(0.28, rel=0.15)


def test_path_grid_and_csv(tmp_path):
    b = sample_fbm(0.7, 4, 0.5, 2, seed=1)
    p = b[1]
    assert isinstance(p, PathGrid) and p.replicate == 1
    np.testing.assert_allclose(p.times, [0, 0.5, 1, 1.5, 2])
    out = tmp_path / "path.csv"
    p.to_csv(out)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "value"] and len(rows) == 6
    assert float(rows[3][1]) == p.values[2]
    with pytest.raises(ValueError):
        PathGrid(0.0, 1.0, [1.0, np.nan], 0)
    with pytest.raises(ValueError):
        PathGrid(0.0, 0.0, [1.0], 0)
