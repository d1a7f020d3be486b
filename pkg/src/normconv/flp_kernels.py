"""Fractional kernels and the hybrid fractional Levy process simulator."""
import csv
import enum
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn, gamma as gamma_fn, roots_jacobi

from . import _rng
from ._validation import check_count, check_hurst, check_positive
from .errors import AsymmetricMeasure, InvalidParameter, IoFailure, SingularPoint
from .gauss_paths import PathBatch, sample_fbm
from .levy_jumps import poisson_jumps, sigma_eps

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class KernelKind(enum.Enum):
    MOLCHAN_GOLOSOV = "MolchanGolosov"
    MANDELBROT_VAN_NESS = "MandelbrotVanNess"


@dataclass(frozen=True)
class FractionalKernel:
    H: float
    kind: KernelKind = KernelKind.MOLCHAN_GOLOSOV
    # geometric panels for the smooth part of the inner integral (8 Gauss nodes each)
    quad_points: int = 64

    def __post_init__(self):
        check_hurst(self.H, allow_half=False)
        check_count("quad_points", self.quad_points, minimum=8)

    @property
    def constant(self):
        H = self.H
        if self.kind is KernelKind.MANDELBROT_VAN_NESS:
            return mvn_constant(H)
        return mg_constant(H)

    @cached_property
    def table(self):
        return KernelTable.build(self)


def mg_constant(H):
    H = check_hurst(H, allow_half=False)
    if H < 0.5:
        return math.sqrt(2 * H / ((1 - 2 * H) * beta_fn(1 - 2 * H, H + 0.5)))
    return math.sqrt(H * (2 * H - 1) / beta_fn(2 - 2 * H, H - 0.5))


def mvn_constant(H):
    H = check_hurst(H, allow_half=False)
    return math.sqrt(2 * H * math.sin(math.pi * H) * gamma_fn(2 * H)) / gamma_fn(H + 0.5)


@lru_cache(maxsize=None)
def _jacobi(beta, order=16):
    x, w = roots_jacobi(order, 0.0, beta)
    return 0.5 * (1.0 + x), w * 2.0 ** (-beta - 1.0)


def _mg_inner(H, t, s, panels):
    """int_s^t (u-s)^(a-1) u^e du, with (a, e) = (H-1/2, H-1/2) for H > 1/2
    and (H+1/2, H-3/2) for H < 1/2.

    In z = u - s the endpoint singularity z^(a-1) is absorbed by a Gauss-Jacobi
    rule on [0, z0], z0 = min(s, t-s); the rest is smooth on geometric panels.
    """
    if H > 0.5:
        a, e = H - 0.5, H - 0.5
    else:
        a, e = H + 0.5, H - 1.5
    s = np.asarray(s, dtype=float)
    L = t - s
    z0 = np.minimum(s, L)
    w, wj = _jacobi(a - 1.0)
    zj = z0[..., None] * w
    head = z0**a * (((s[..., None] + zj) ** e) @ wj)
    edges = z0[..., None] * (L / z0)[..., None] ** (np.arange(panels + 1) / panels)
    lo, hi = edges[..., :-1], edges[..., 1:]
    half = 0.5 * (hi - lo)
    z = (0.5 * (lo + hi))[..., None] + half[..., None] * _GL_X
    f = z ** (a - 1.0) * (s[..., None, None] + z) ** e
    tail = ((f @ _GL_W) * half).sum(axis=-1)
    return head + tail


def mg_kernel(k, t, s):
    """Molchan-Golosov kernel K_H(t, s) for 0 < s < t (vectorized over s)."""
    H = k.H
    s = np.asarray(s, dtype=float)
    t = float(t)
    if np.any(s <= 0) or np.any(s >= t):
        raise SingularPoint("the kernel is evaluated only for 0 < s < t")
    inner = _mg_inner(H, t, s, k.quad_points)
    c = mg_constant(H)
    if H > 0.5:
        out = c * s ** (0.5 - H) * inner
    else:
        out = c * ((t / s) ** (H - 0.5) * (t - s) ** (H - 0.5) - (H - 0.5) * s ** (0.5 - H) * inner)
    return float(out) if out.ndim == 0 else out


def mvn_kernel(k, t, s):
    """C_H ((t-s)_+^(H-1/2) - (-s)_+^(H-1/2)) for s < t."""
    s = np.asarray(s, dtype=float)
    if np.any(s >= t):
        raise SingularPoint("the kernel is defined for s < t")
    e = k.H - 0.5
    neg = np.where(s < 0, np.abs(s), 1.0) ** e * (s < 0)
    out = mvn_constant(k.H) * ((t - s) ** e - neg)
    return float(out) if out.ndim == 0 else out


def gram(k, t, s):
    """int_0^{t ^ s} K(t,u) K(s,u) du by adaptive quadrature."""
    t, s = float(t), float(s)
    m = min(t, s)
    f = lambda u: mg_kernel(k, t, u) * mg_kernel(k, s, u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, 0.0, m, epsabs=1e-10, epsrel=1e-9, limit=400)
    return val


def fbm_covariance(H, t, s):
    return 0.5 * (abs(t) ** (2 * H) + abs(s) ** (2 * H) - abs(t - s) ** (2 * H))


@dataclass(frozen=True)
class KernelTable:
    """K_H(1, s) on a grid clustered at both ends; K(t,s) = t^(H-1/2) K(1, s/t).

    The stored quantity is the regular part r(s) = K(1,s) s^|H-1/2| (1-s)^(1/2-H).
    """
    H: float
    s: np.ndarray
    r: np.ndarray

    @classmethod
    def build(cls, k, size=2**14):
        x = (np.arange(size) + 0.5) / size
        s = 0.5 * (1.0 - np.cos(np.pi * x))
        K = mg_kernel(k, 1.0, s)
        H = k.H
        r = K * s ** abs(H - 0.5) * (1.0 - s) ** (0.5 - H)
        return cls(H, s, r)

    def __call__(self, t, s):
        t = np.asarray(t, dtype=float)
        w = np.asarray(s, dtype=float) / t
        H = self.H
        # the grid is uniform in x = arccos(1 - 2s) / pi, so lookup is O(1)
        pos = np.arccos(1.0 - 2.0 * w) * (self.r.size / np.pi) - 0.5
        np.clip(pos, 0.0, self.r.size - 1.000001, out=pos)
        i = pos.astype(np.intp)
        pos -= i
        r = self.r[i] * (1.0 - pos) + self.r[i + 1] * pos
        return t ** (H - 0.5) * r * w ** -abs(H - 0.5) * (1.0 - w) ** (H - 0.5)

    def to_csv(self, path, t=1.0):
        try:
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["t", "s", "K"])
                for si, ki in zip(t * self.s, self(t, t * self.s)):
                    wr.writerow([repr(float(t)), repr(float(si)), repr(float(ki))])
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc


def check_symmetric_tail(m, eps, tol=1e-10):
    drift = m.moment(1, eps, np.inf, signed=True)
    scale = max(m.moment(1, eps, np.inf), 1e-300)
    if abs(drift) > tol * scale:
        raise AsymmetricMeasure(f"int x 1(|x|>eps) dnu = {drift:.3g} != 0")


def hybrid_variance(k, m, eps, t):
    """(Gaussian part, jump part) of Var L_t: sigma(eps)^2 and the tail second
    moment, each times int_0^t K(t,u)^2 du."""
    kk = gram(k, t, t)
    return sigma_eps(m, eps) ** 2 * kk, m.moment(2, eps, np.inf) * kk


def simulate_flp_hybrid(k, m, eps, n, dt, count, seed=0, chunk_jumps=4_000_000):
    """sigma(eps) B^H_t + sum_{tau_j < t} K(t, tau_j) x_j on t = 0, dt, ..., n dt."""
    if k.kind is not KernelKind.MOLCHAN_GOLOSOV:
        raise InvalidParameter("the hybrid simulator uses the Molchan-Golosov kernel")
    eps = check_positive("eps", eps)
    n = check_count("n", n)
    dt = check_positive("dt", dt)
    count = check_count("count", count)
    check_symmetric_tail(m, eps)
    sig = sigma_eps(m, eps)
    times = dt * np.arange(n + 1)
    horizon = times[-1]
    values = np.zeros((count, n + 1))
    if sig > 0:
        values += sig * sample_fbm(k.H, n, dt, count, seed).values
    rate = horizon * m.mass(eps)
    if rate > 0:
        table = k.table
        sampler = m.size_sampler(eps)
        per_block = max(1, int(chunk_jumps / rate))
        block = 0
        for lo in range(0, count, per_block):
            hi = min(count, lo + per_block)
            rng = _rng.generator(seed, "flp-jumps", block)
            block += 1
            counts, tau, x = poisson_jumps(m, eps, np.inf, horizon, hi - lo, rng, sampler)
            owner = np.repeat(np.arange(hi - lo), counts)
            for j in range(1, n + 1):
                tj = times[j]
                sel = tau < tj
                contrib = table(tj, tau[sel]) * x[sel]
                values[lo:hi, j] += np.bincount(owner[sel], weights=contrib, minlength=hi - lo)
    return PathBatch(0.0, dt, values, int(seed))
