"""Stationary covariance models, decay classes and rate predictions."""
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from ._validation import check_hurst, check_positive
from .errors import InvalidExperimentWarning, InvalidParameter, NonPositiveParameter


class DecayKind(enum.Enum):
    INTEGRABLE = "IntegrableCovariance"
    POWER = "PowerDecay"


@dataclass(frozen=True)
class DecayClass:
    kind: DecayKind
    M: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind is DecayKind.POWER:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise InvalidParameter(f"power decay needs alpha in (0,1), got {self.alpha!r}")
            if self.M is None or self.M == 0 or not math.isfinite(self.M):
                raise InvalidParameter("power decay needs a finite nonzero M")

    @classmethod
    def integrable(cls):
        return cls(DecayKind.INTEGRABLE)

    @classmethod
    def power(cls, alpha, M):
        return cls(DecayKind.POWER, M=float(M), alpha=float(alpha))

    @property
    def is_power(self):
        return self.kind is DecayKind.POWER

    def V(self, T):
        """Decay rate V(T): 1/T or T^-alpha."""
        T = np.asarray(T, dtype=float)
        return T ** -self.alpha if self.is_power else 1.0 / T


@dataclass(frozen=True)
class CovarianceModel:
    name: str
    eval: Callable
    variance_at_zero: float
    decay: DecayClass
    params: dict = field(default_factory=dict)
    kinks: tuple = ()
    # models known only through a large-T expansion
    valid_from: float = 0.0

    def __call__(self, T):
        return self.eval(np.abs(np.asarray(T, dtype=float)))

    def correlation(self, T):
        return self(T) / self.variance_at_zero


def fbm_increment_cov(H, T):
    """C(T) = (|T+1|^2H + |T-1|^2H - 2|T|^2H) / 2."""
    H = check_hurst(H)
    T = np.abs(np.asarray(T, dtype=float))
    h2 = 2.0 * H
    out = 0.5 * (np.abs(T + 1.0) ** h2 + np.abs(T - 1.0) ** h2 - 2.0 * T**h2)
    return float(out) if out.ndim == 0 else out


def fou_cov_asymptotic(H, lam, sigma_t, N, T):
    """Large-lag expansion of the fractional OU covariance, N terms."""
    H = check_hurst(H, allow_half=False)
    lam = check_positive("lambda", lam)
    sigma_t = check_positive("sigma_t", sigma_t)
    if int(N) != N or N < 1:
        raise NonPositiveParameter("N must be a positive integer")
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise NonPositiveParameter("T must be positive")
    total = np.zeros_like(T)
    for n in range(1, int(N) + 1):
        coef = np.prod([2.0 * H - k for k in range(2 * n)])
        total = total + lam ** (-2 * n) * coef * T ** (2.0 * H - 2 * n)
    out = 0.5 * sigma_t**2 * total
    return float(out) if out.ndim == 0 else out


def fou_stationary_variance(H, lam, sigma_t):
    """Var of the stationary fractional OU process: sigma^2 lam^-2H H Gamma(2H)."""
    return sigma_t**2 * lam ** (-2.0 * H) * H * gamma_fn(2.0 * H)


def fbm_increments(H):
    H = check_hurst(H)
    if H > 0.5:
        decay = DecayClass.power(2.0 - 2.0 * H, H * (2.0 * H - 1.0))
    else:
        decay = DecayClass.integrable()
    return CovarianceModel(
        "fbm-increments", lambda T: fbm_increment_cov(H, T), 1.0, decay,
        params={"H": H}, kinks=(1.0,),
    )


def fou(H, lam=1.0, sigma_t=1.0, N=3):
    """Fractional OU covariance through its asymptotic expansion (large lags only)."""
    H = check_hurst(H, allow_half=False)
    lam = check_positive("lambda", lam)
    sigma_t = check_positive("sigma_t", sigma_t)
    c0 = fou_stationary_variance(H, lam, sigma_t)
    if H > 0.5:
        decay = DecayClass.power(2.0 - 2.0 * H, H * (2.0 * H - 1.0) * sigma_t**2 / lam**2)
    else:
        decay = DecayClass.integrable()

    def ev(T):
        T = np.asarray(T, dtype=float)
        # the expansion is meaningless at small lags; report C(0) there
        safe = np.maximum(T, 1e-300)
        out = np.where(T > 0, fou_cov_asymptotic(H, lam, sigma_t, N, safe), c0)
        return float(out) if out.ndim == 0 else out

    return CovarianceModel(
        "fou", ev, c0, decay, params={"H": H, "lambda": lam, "sigma_t": sigma_t, "N": N},
        valid_from=10.0 / lam,
    )


def ou_exponential(lam=1.0, variance=1.0):
    lam = check_positive("lambda", lam)
    variance = check_positive("variance", variance)

    def ev(T):
        out = variance * np.exp(-lam * np.asarray(T, dtype=float))
        return float(out) if out.ndim == 0 else out

    return CovarianceModel("ou-exponential", ev, variance, DecayClass.integrable(),
                           params={"lambda": lam, "variance": variance})


MODELS = {
    "fbm-increments": fbm_increments,
    "fou": fou,
    "ou-exponential": ou_exponential,
}


def get_model(name, **params):
    try:
        factory = MODELS[name]
    except KeyError:
        raise InvalidParameter(f"unknown covariance model {name!r}; known: {sorted(MODELS)}") from None
    if "lambda" in params:
        params["lam"] = params.pop("lambda")
    return factory(**params)


def vtilde(decay, T):
    """Normalizer: T, or the double integral of x^-alpha over 0<x<y<T."""
    T = check_positive("T", T)
    if not decay.is_power:
        return T
    a = decay.alpha
    if a >= 1.0:
        raise InvalidParameter("alpha >= 1 is not supported")
    return T ** (2.0 - a) / ((1.0 - a) * (2.0 - a))


def asymptotic_variance(M, c1):
    if c1 == 0:
        warnings.warn("c1 = 0: the limit variance degenerates, the experiment is invalid",
                      InvalidExperimentWarning, stacklevel=2)
    return 2.0 * M * c1**2


def predicted_rate(decay, T):
    T = check_positive("T", T)
    if not decay.is_power:
        return T**-0.25
    a = decay.alpha
    return (max(1.0, a) * T**-a) ** 0.25


def rate_exponent(decay):
    """Exponent e with predicted_rate ~ T^e."""
    return -0.25 if not decay.is_power else -decay.alpha / 4.0


# --- quadrature -------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _graded_points(a, b, levels=40):
    """Breakpoints in [a, b] refined geometrically toward both ends."""
    h = 0.5 ** np.arange(1, levels + 1)
    pts = np.concatenate([[0.0, 1.0, 0.5], h, 1.0 - h])
    return a + (b - a) * np.unique(pts)


def lag_integral(g, T, kinks=()):
    """Integral over [0, T] of g, with panels graded at 0, T and interior kinks."""
    cuts = [0.0] + [k for k in sorted(kinks) if 0.0 < k < T] + [float(T)]
    pts = np.unique(np.concatenate([_graded_points(a, b) for a, b in zip(cuts[:-1], cuts[1:])]))
    lo, hi = pts[:-1], pts[1:]
    half = 0.5 * (hi - lo)
    x = (lo + hi)[:, None] * 0.5 + half[:, None] * _GL_X[None, :]
    return float(np.sum(half[:, None] * _GL_W[None, :] * g(x)))


def double_integral(model, T, q=1, weights=None):
    """Integral of C(t-s)^q (or sum_q w_q C^q) over [0,T]^2.

    Reduced exactly to 2 * int_0^T (T-u) C(u)^q du so the diagonal kink becomes
    an endpoint.
    """
    T = check_positive("T", T)

    def g(u):
        c = model(u)
        if weights is None:
            val = c**q
        else:
            val = sum(w * c**k for k, w in weights.items())
        return 2.0 * (T - u) * val

    return lag_integral(g, T, model.kinks)


def normalized_double_integral(model, T, q=1):
    return double_integral(model, T, q) / vtilde(model.decay, T)
