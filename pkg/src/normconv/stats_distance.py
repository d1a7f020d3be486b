"""Distances from empirical laws to N(0,1) and log-log rate fits."""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from ._validation import as_finite_array
from .errors import InvalidParameter, NonPositiveInput, ZeroVariance

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class EmpiricalSample:
    values: np.ndarray
    replication_count: int
    seed: int = 0

    def __post_init__(self):
        v = np.sort(as_finite_array("sample", self.values).ravel())
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "replication_count", int(self.replication_count))

    @classmethod
    def standardized(cls, values, seed=0, variance=None, center=True):
        """Scale ``values`` by the empirical sd, or by sqrt(variance) when given."""
        v = as_finite_array("sample", values).ravel()
        if v.size < 2:
            raise InvalidParameter("need at least two values to standardize")
        mean = v.mean() if center else 0.0
        if variance is None:
            sd = v.std(ddof=1)
        else:
            sd = float(np.sqrt(variance))
        if not sd > 0:
            raise ZeroVariance("sample has zero variance")
        return cls((v - mean) / sd, v.size, seed)


def _as_sorted(s):
    if isinstance(s, EmpiricalSample):
        return s.values
    return np.sort(as_finite_array("sample", s).ravel())


def _phi(x):
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def _psi(x):
    # antiderivative of Phi
    return x * ndtr(x) + _phi(x)


def wasserstein1_std_normal(s):
    """Exact integral of |F_n - Phi| for the empirical CDF F_n."""
    x = _as_sorted(s)
    n = x.size
    # left tail: F_n = 0 below x_1; right tail: F_n = 1 above x_n
    total = _psi(x[0]) + (_phi(x[-1]) - x[-1] * ndtr(-x[-1]))
    if n == 1:
        return float(total)
    a, b = x[:-1], x[1:]
    level = np.arange(1, n) / n
    # Phi crosses the level i/n at most once inside (a, b)
    c = np.clip(ndtri(level), a, b)
    # integral of (Phi - p) over [u, v] is Psi(v) - Psi(u) - p (v - u)
    left = _psi(c) - _psi(a) - level * (c - a)
    right = _psi(b) - _psi(c) - level * (b - c)
    total += np.sum(np.abs(left) + np.abs(right))
    return float(total)


def ks_std_normal(s):
    x = _as_sorted(s)
    n = x.size
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2))


def rate_fit(points):
    """Least-squares line through (log T, log d)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise InvalidParameter("rate_fit needs at least 3 (T, d) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise NonPositiveInput("T and d must be positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2))


@dataclass(frozen=True)
class Moments:
    """Mergeable count/mean/M2 accumulator (pairwise combination)."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(v.size, mu, float(np.sum((v - mu) ** 2)))

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return Moments(n, mean, m2)

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")


def reduce_moments(chunks):
    """Pairwise tree reduction of per-chunk moments; order-stable."""
    parts = [Moments.of(c) for c in chunks]
    if not parts:
        return Moments()
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def variance_se(values):
    """Sample variance and its standard error (from the fourth central moment)."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    d = v - v.mean()
    s2 = float(np.sum(d * d) / (n - 1))
    m4 = float(np.mean(d**4))
    se = np.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)
    return s2, float(se)


def bootstrap_se(values, statistic, n_boot=20, seed=0):
    """Bootstrap standard error of ``statistic`` (deterministic for a seed)."""
    v = np.asarray(values, dtype=float).ravel()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7])))
    stats = [statistic(v[rng.integers(0, v.size, v.size)]) for _ in range(n_boot)]
    return float(np.std(stats, ddof=1))
