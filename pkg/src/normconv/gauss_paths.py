"""Exact Gaussian path samplers on uniform grids."""
import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import lfilter

from . import _rng
from ._validation import check_count, check_hurst, check_nonnegative, check_positive
from .covmodels import CovarianceModel, fbm_increments
from .errors import InvalidParameter, IoFailure, NotPSD, UnstableStep

JITTER_MAX = 1e-10
PIVOT_TOL = 1e-9
CHOLESKY_MAX_N = 4096


@dataclass(frozen=True)
class PathGrid:
    t0: float
    dt: float
    values: np.ndarray
    seed: int
    replicate: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise InvalidParameter("path values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise InvalidParameter("path values must be finite")
        check_positive("dt", self.dt)
        object.__setattr__(self, "values", v)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.size)

    def to_csv(self, path):
        write_paths_csv(path, self.times, self.values)


@dataclass(frozen=True)
class PathBatch:
    """``count`` paths on a shared grid, stored as a (count, n) array.

    Indexing yields :class:`PathGrid` objects.
    """
    t0: float
    dt: float
    values: np.ndarray
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] == 0:
            raise InvalidParameter("batch values must be (count, n) with n >= 1")
        if not np.all(np.isfinite(v)):
            raise InvalidParameter("path values must be finite")
        check_positive("dt", self.dt)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PathBatch(self.t0, self.dt, self.values[i], self.seed)
        return PathGrid(self.t0, self.dt, self.values[i], self.seed, replicate=int(range(len(self))[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n)


def write_paths_csv(path, times, values):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for t, v in zip(times, values):
                w.writerow([repr(float(t)), repr(float(v))])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def covariance_matrix(model: CovarianceModel, n, dt=1.0):
    return toeplitz(model(dt * np.arange(n)))


def cholesky_factor(cov, c0=None):
    """Lower Cholesky factor with escalating diagonal jitter.

    A pivot below -PIVOT_TOL*C(0) means the matrix is genuinely indefinite.
    Smaller deficits are absorbed by a jitter of at most JITTER_MAX*C(0).
    """
    cov = np.asarray(cov, dtype=float)
    c0 = float(cov[0, 0]) if c0 is None else float(c0)
    eye = np.eye(cov.shape[0])
    for jitter in (0.0, 1e-14, 1e-12, JITTER_MAX):
        try:
            return np.linalg.cholesky(cov + jitter * c0 * eye)
        except np.linalg.LinAlgError:
            continue
    w = np.linalg.eigvalsh(cov)
    raise NotPSD(f"covariance matrix has eigenvalue {w[0]:.3e} below -{PIVOT_TOL}*C(0)"
                 if w[0] < -PIVOT_TOL * c0 else
                 f"covariance matrix is numerically singular (min eigenvalue {w[0]:.3e})")


def circulant_eigenvalues(model, n, dt=1.0):
    """Eigenvalues of the minimal circulant embedding, or None if it is not PSD."""
    r = model(dt * np.arange(n))
    if n == 1:
        return np.array([r[0]])
    c = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -PIVOT_TOL * model.variance_at_zero:
        return None
    return np.clip(lam, 0.0, None)


def _circulant_draw(lam, n, count, rng):
    m = lam.size
    pairs = (count + 1) // 2
    z = rng.standard_normal((pairs, m)) + 1j * rng.standard_normal((pairs, m))
    y = np.fft.fft(np.sqrt(lam / m) * z, axis=1)[:, :n]
    return np.concatenate([y.real, y.imag])[:count]


def stationary_array(model, n, dt, count, seed, method="cholesky", stream="stationary"):
    """Array form of :func:`sample_stationary`, shape (count, n)."""
    n = check_count("n", n)
    count = check_count("count", count)
    dt = check_positive("dt", dt)
    if method == "auto":
        method = "circulant" if n > CHOLESKY_MAX_N else "cholesky"
    out = np.empty((count, n))
    if method == "cholesky":
        if n > CHOLESKY_MAX_N:
            raise InvalidParameter(f"Cholesky sampling limited to n <= {CHOLESKY_MAX_N}")
        L = cholesky_factor(covariance_matrix(model, n, dt), model.variance_at_zero)
        for lo, hi, rng in _rng.blocks(count, seed, stream):
            out[lo:hi] = rng.standard_normal((hi - lo, n)) @ L.T
    elif method == "circulant":
        lam = circulant_eigenvalues(model, n, dt)
        if lam is None:
            raise NotPSD("circulant embedding has negative eigenvalues; use method='cholesky'")
        for lo, hi, rng in _rng.blocks(count, seed, stream):
            out[lo:hi] = _circulant_draw(lam, n, hi - lo, rng)
    else:
        raise InvalidParameter(f"unknown sampling method {method!r}")
    return out


def sample_stationary(model, n, dt=1.0, count=1, seed=0, method="cholesky"):
    """``count`` centered stationary Gaussian paths with covariance C(|i-j| dt)."""
    values = stationary_array(model, n, dt, count, seed, method)
    return PathBatch(0.0, float(dt), values, int(seed))


def fgn_array(H, n, count, seed, method="auto", stream="fgn"):
    """Unit-lag fractional Gaussian noise, shape (count, n)."""
    model = fbm_increments(H)
    if method == "auto":
        # the embedding is nonnegative for every H in (0,1)
        method = "circulant"
    return stationary_array(model, n, 1.0, count, seed, method, stream)


def sample_fbm(H, n, dt=1.0, count=1, seed=0, method="auto"):
    """fBm on t = 0, dt, ..., n*dt (n+1 points, B_0 = 0)."""
    H = check_hurst(H)
    dt = check_positive("dt", dt)
    inc = fgn_array(H, n, count, seed, method) * dt**H
    values = np.zeros((inc.shape[0], n + 1))
    np.cumsum(inc, axis=1, out=values[:, 1:])
    return PathBatch(0.0, dt, values, int(seed))


def sample_fou(H, lam, sigma_t, n, dt, burnin=None, count=1, seed=0, max_step=0.1, method="auto"):
    """Euler scheme for dY = -lam Y dt + sigma dB^H started at 0.

    ``burnin`` steps (default 10/(lam*dt)) are discarded; ``n`` points are kept.
    """
    H = check_hurst(H)
    lam = check_positive("lambda", lam)
    sigma_t = check_nonnegative("sigma_t", sigma_t)
    dt = check_positive("dt", dt)
    n = check_count("n", n)
    step = lam * dt
    if step >= 1.0 or step > max_step:
        raise UnstableStep(f"lambda*dt = {step:g} exceeds {min(max_step, 1.0):g}")
    if burnin is None:
        burnin = int(np.ceil(10.0 / step))
    burnin = check_count("burnin", burnin, minimum=0)
    total = burnin + n
    inc = sigma_t * dt**H * fgn_array(H, total, count, seed, method, stream="fou")
    # Y_{k+1} = (1 - lam dt) Y_k + inc_k, Y_0 = 0
    drive = np.concatenate([np.zeros((inc.shape[0], 1)), inc], axis=1)
    y = lfilter([1.0], [1.0, -(1.0 - step)], drive, axis=1)
    return PathBatch(burnin * dt, dt, y[:, burnin:burnin + n], int(seed))
