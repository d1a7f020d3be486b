"""Time-average functionals built from simulated paths, with exact variances."""
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.signal import lfilter

from . import _rng
from ._validation import check_count, check_positive
from .covmodels import CovarianceModel, double_integral, vtilde
from .errors import (GridMismatch, InfiniteActivity, InvalidExperimentWarning, InvalidParameter,
                     UnstableStep)
from .gauss_paths import PathBatch, PathGrid, sample_fou, stationary_array
from .hermite import HermiteExpansion, expand, subordinated_cov
from .levy_jumps import LevyMeasure, MeasureKind

COEF_TOL = 1e-10


def _trapezoid_weights(n, dt):
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _grid_size(T, dt):
    steps = T / dt
    n = int(round(steps))
    if n < 1 or abs(steps - n) > 1e-9 * max(1.0, steps):
        raise GridMismatch(f"T={T} is not a whole number of steps dt={dt}")
    return n


# -- subordinated Gaussian fields -------------------------------------------------

@dataclass(frozen=True)
class SubordinatedConfig:
    """F_T = Vtilde(T)^-1/2 int_0^T (f(X_t) - E f(Z)) dt for stationary Gaussian X.

    ``f`` acts on the standardized field X / sqrt(C(0)).
    """
    model: CovarianceModel
    f: Callable
    T: float
    dt: float = 1.0
    replications: int = 1000
    expansion: Optional[HermiteExpansion] = None
    symmetric: bool = False
    Q: int = 20
    # skip the admissibility check on f (plumbing and diagnostics only)
    check_class: bool = True

    def __post_init__(self):
        check_positive("T", self.T)
        check_positive("dt", self.dt)
        check_count("replications", self.replications)
        _grid_size(self.T, self.dt)
        if self.expansion is None:
            object.__setattr__(self, "expansion", expand(self.f, self.Q))
        if not self.check_class:
            return
        if self.model.decay.is_power:
            msg = "E[f(Z)Z] = 0 under power-law decay: the normalization degenerates"
            bad = abs(self.expansion.c1) < COEF_TOL
        else:
            msg = "integrable covariance requires f declared symmetric"
            bad = not self.symmetric
        if bad:
            warnings.warn(msg, InvalidExperimentWarning, stacklevel=3)
            raise InvalidParameter(msg)

    @property
    def n_steps(self):
        return _grid_size(self.T, self.dt)

    @property
    def normalizer(self):
        return vtilde(self.model.decay, self.T)

    @property
    def limit_variance(self):
        """2 M c1^2 for power decay (None for integrable covariances)."""
        if not self.model.decay.is_power:
            return None
        M = self.model.decay.M / self.model.variance_at_zero
        return 2.0 * M * self.expansion.c1**2


def _values_of(path):
    if isinstance(path, (PathGrid, PathBatch)):
        return path.values, path.dt
    return np.asarray(path, dtype=float), None


def subordinated_functional(path, cfg):
    """Trapezoid approximation of F_T; vectorized over a PathBatch."""
    x, dt = _values_of(path)
    n = cfg.n_steps + 1
    if x.shape[-1] != n or (dt is not None and abs(dt - cfg.dt) > 1e-12 * cfg.dt):
        raise GridMismatch(f"expected {n} points spaced {cfg.dt}, got {x.shape[-1]} spaced {dt}")
    z = x / math.sqrt(cfg.model.variance_at_zero)
    fx = np.asarray(cfg.f(z), dtype=float) - cfg.expansion.c0
    out = fx @ _trapezoid_weights(n, cfg.dt) / math.sqrt(cfg.normalizer)
    return float(out) if np.ndim(out) == 0 else out


def subordinated_variance_oracle(cfg, discrete=False):
    """Vtilde^-1 int int sum_q c_q^2 q! rho(t-s)^q dt ds.

    With ``discrete=True`` the double integral is replaced by the trapezoid
    sum the simulation actually computes.
    """
    model = cfg.model
    c0 = model.variance_at_zero
    if discrete:
        n = cfg.n_steps + 1
        w = _trapezoid_weights(n, cfg.dt)
        rho = np.clip(model(cfg.dt * np.arange(n)) / c0, -1.0, 1.0)
        r = subordinated_cov(cfg.expansion, rho)
        # sum_{i,j} w_i w_j r_|i-j|
        ac = np.correlate(w, w, mode="full")[n - 1:]
        total = r[0] * ac[0] + 2.0 * np.dot(r[1:], ac[1:])
        return float(total / cfg.normalizer)
    q = np.arange(1, cfg.expansion.truncation_order + 1)
    fact = np.cumprod(np.concatenate([[1.0], q[1:].astype(float)]))
    weights = {int(k): float(cfg.expansion.coefficients[k] ** 2 * fact[k - 1] / c0**k)
               for k in q if cfg.expansion.coefficients[k] != 0}
    return double_integral(model, cfg.T, weights=weights) / cfg.normalizer


def simulate_subordinated(cfg, seed=0, method="cholesky", count=None):
    """Samples of F_T over ``cfg.replications`` (or ``count``) independent paths."""
    count = cfg.replications if count is None else check_count("count", count)
    n = cfg.n_steps + 1
    out = np.empty(count)
    if cfg.model.name == "fou":
        p = cfg.model.params
        for lo, hi in _chunks(count, 1000):
            paths = sample_fou(p["H"], p["lambda"], p["sigma_t"], n, cfg.dt,
                               count=hi - lo, seed=_rng.generator(seed, "fou-seed", lo).integers(2**63))
            out[lo:hi] = subordinated_functional(paths.values, cfg)
        return out
    x = stationary_array(cfg.model, n, cfg.dt, count, seed, method)
    return subordinated_functional(x, cfg)


def _chunks(count, size):
    for lo in range(0, count, size):
        yield lo, min(count, lo + size)


# -- product of Gaussian and Poisson OU processes ------------------------------------

@dataclass(frozen=True)
class ProductOUConfig:
    lam: float
    measure: LevyMeasure
    T: float
    dt: Optional[float] = None
    replications: int = 1000
    mode: str = "from-zero"

    def __post_init__(self):
        lam = check_positive("lambda", self.lam)
        check_positive("T", self.T)
        check_count("replications", self.replications)
        if self.dt is None:
            object.__setattr__(self, "dt", 0.05 / lam)
        check_positive("dt", self.dt)
        if lam * self.dt > 0.1:
            raise UnstableStep(f"lambda*dt = {lam * self.dt:g} exceeds 0.1")
        if self.mode not in ("from-zero", "stationary"):
            raise InvalidParameter(f"mode must be 'from-zero' or 'stationary', got {self.mode!r}")
        _grid_size(self.T, self.dt)
        m2 = self.measure.moment(2)
        if abs(m2 - 1.0) > 1e-8:
            raise InvalidParameter(f"the measure must satisfy int x^2 dnu = 1, got {m2}")
        if not math.isfinite(self.measure.moment(4)):
            raise InvalidParameter("the measure needs a finite fourth moment")

    @property
    def n_steps(self):
        return _grid_size(self.T, self.dt)


def product_ou_paths(cfg, seed=0, count=None):
    """Y (Gaussian OU) and Z (compensated Poisson OU) on t = 0, dt, ..., T.

    Both are exact at grid points.  Mode ``from-zero`` starts the driving
    noise at time 0; ``stationary`` runs both from the distant past.
    """
    if cfg.measure.kind is MeasureKind.DENSITY:
        raise InfiniteActivity("exact Poisson OU simulation needs an atomic measure")
    count = cfg.replications if count is None else check_count("count", count)
    lam, dt, n = cfg.lam, cfg.dt, cfg.n_steps
    a = math.exp(-lam * dt)
    # burn-in long enough that exp(-2 lam B) < 1e-12
    burn = 0 if cfg.mode == "from-zero" else int(math.ceil(14.0 / (lam * dt)))
    steps = n + burn
    Y = np.empty((count, n + 1))
    Z = np.empty((count, n + 1))
    gain = math.sqrt(2.0 * lam)
    m1 = cfg.measure.moment(1, signed=True)
    drift = gain * m1 * (1.0 - a) / lam
    sampler = cfg.measure.size_sampler(0.0)
    rate = cfg.measure.mass()
    for k, (lo, hi, rng) in enumerate(_rng.blocks(count, seed, "ou-gauss")):
        b = hi - lo
        if cfg.mode == "stationary":
            y0 = rng.standard_normal(b)
        else:
            y0 = np.zeros(b)
        xi = math.sqrt(1.0 - a * a) * rng.standard_normal((b, n))
        y, _ = lfilter([1.0], [1.0, -a], xi, axis=1, zi=(a * y0)[:, None])
        Y[lo:hi, 0] = y0
        Y[lo:hi, 1:] = y
        jrng = _rng.generator(seed, "ou-jumps", k)
        counts = jrng.poisson(rate * dt * steps, size=b)
        tot = int(counts.sum())
        tau = dt * steps * jrng.random(tot)
        x = sampler(jrng, tot)
        idx = np.minimum((tau / dt).astype(np.intp), steps - 1)
        w = gain * x * np.exp(-lam * ((idx + 1) * dt - tau))
        owner = np.repeat(np.arange(b), counts)
        J = np.bincount(owner * steps + idx, weights=w, minlength=b * steps).reshape(b, steps) - drift
        drive = np.concatenate([np.zeros((b, 1)), J], axis=1)
        z = lfilter([1.0], [1.0, -a], drive, axis=1)
        Z[lo:hi] = z[:, burn:]
    return PathBatch(0.0, dt, Y, int(seed)), PathBatch(0.0, dt, Z, int(seed))


def product_ou_functional(Y, Z, T):
    """T^-1/2 times the trapezoid integral of Y_t Z_t over [0, T]."""
    y, dy = _values_of(Y)
    z, dz = _values_of(Z)
    if y.shape != z.shape or dy != dz:
        raise GridMismatch("Y and Z must share a grid")
    dt = dy if dy is not None else T / (y.shape[-1] - 1)
    if abs((y.shape[-1] - 1) * dt - T) > 1e-9 * T:
        raise GridMismatch(f"grid does not span [0, {T}]")
    out = (y * z) @ _trapezoid_weights(y.shape[-1], dt) / math.sqrt(T)
    return float(out) if np.ndim(out) == 0 else out


def product_ou_variance_exact(lam, T):
    """T^-1 int int C(t,s)^2 with C(t,s) = e^{-lam|t-s|} - e^{-lam(t+s)}."""
    lam = check_positive("lambda", lam)
    T = check_positive("T", T)
    e = math.exp(-2.0 * lam * T)
    one = -math.expm1(-2.0 * lam * T)
    return (T / lam - 6.0 * one / (4.0 * lam**2) + 2.0 * T * e / lam + one**2 / (4.0 * lam**2)) / T


@dataclass(frozen=True)
class ProductOUBounds:
    first_derivative: float
    cube: float
    contraction: float
    second_derivative: float

    # T exponents of the four bounds
    exponents = (0.0, -0.5, -1.0, -1.0)

    def as_dict(self):
        return {"first_derivative": self.first_derivative, "cube": self.cube,
                "contraction": self.contraction, "second_derivative": self.second_derivative}


def product_ou_condition_bounds(lam, measure, T):
    """Closed-form upper bounds on the four quantities controlling the
    normal approximation of the product OU functional."""
    lam = check_positive("lambda", lam)
    T = check_positive("T", T)
    m3 = measure.moment(3)
    m4 = measure.moment(4)
    return ProductOUBounds(
        first_derivative=2.0 * (4.0 + lam * m4) * (2.0 / lam) ** 2,
        cube=4.0 * math.sqrt(2.0) * m3 / (lam**1.5 * math.sqrt(T)),
        contraction=8.0 / (T * lam**2),
        second_derivative=4.0 / (lam**2 * T),
    )
