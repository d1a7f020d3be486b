"""Levy measures, truncated moments and jump samplers."""
import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import factorial

from . import _rng
from ._validation import check_count, check_nonnegative, check_positive
from .errors import (EmptyTailWarning, IntegralDiverged, InvalidParameter, TruncationTooCoarse,
                     ZeroVariance)
from .stats_distance import EmpiricalSample

TABLE_SIZE = 2**14
# the inner layer may discard at most this fraction of sigma(eps)^2
MAX_DISCARDED_VARIANCE = 0.1


class MeasureKind(enum.Enum):
    DENSITY = "Density"
    ATOMIC = "Atomic"


@dataclass(frozen=True)
class LevyMeasure:
    """Levy measure on [-a, b] \\ {0}: a density, or finitely many atoms.

    ``delta`` marks the power-law density |x|^-(2+delta), for which moments are
    available in closed form.
    """
    kind: MeasureKind
    a: float
    b: float
    density: Optional[Callable] = None
    atoms: tuple = ()
    delta: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        check_positive("a", self.a)
        check_positive("b", self.b)
        if self.kind is MeasureKind.ATOMIC:
            for x, w in self.atoms:
                if x == 0 or w < 0 or not (-self.a <= x <= self.b):
                    raise InvalidParameter(f"invalid atom ({x}, {w})")
        elif self.density is None:
            raise InvalidParameter("density measure needs a density function")

    # -- moments ------------------------------------------------------------
    def _side_limits(self, lo, hi):
        """Per-side |x| ranges (start, stop] intersected with the support."""
        return ((lo, min(hi, self.b)), (lo, min(hi, self.a)))

    def moment(self, p, lo=0.0, hi=np.inf, signed=False):
        """Integral of |x|^p (or x^p if ``signed``) over lo < |x| <= hi."""
        if self.kind is MeasureKind.ATOMIC:
            tot = 0.0
            for x, w in self.atoms:
                if lo < abs(x) <= hi:
                    tot += w * (x**p if signed else abs(x) ** p)
            return float(tot)
        right, left = self._side_limits(lo, hi)
        sgn = (-1.0) ** p if signed else 1.0
        return self._side_moment(p, *right, 1) + sgn * self._side_moment(p, *left, -1)

    def _side_moment(self, p, lo, hi, side):
        if hi <= lo:
            return 0.0
        if self.delta is not None:
            k = p - 1.0 - self.delta
            if lo == 0.0 and k <= 0:
                return math.inf
            if k == 0:
                return math.log(hi / lo)
            return (hi**k - lo**k) / k
        f = lambda x: x**p * float(self.density(side * x)) if x > 0 else 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=1000)
        if not (math.isfinite(val) and err <= 1e-8 * max(abs(val), 1e-300)):
            raise IntegralDiverged(f"moment of order {p} did not converge (estimate {val}, error {err})")
        if val < 0:
            # extrapolation can return the analytic continuation of a divergent integral
            raise IntegralDiverged(f"moment of order {p} diverges (extrapolated to {val})")
        return val

    def mass(self, lo=0.0, hi=np.inf):
        return self.moment(0, lo, hi)

    @property
    def is_symmetric(self):
        if self.kind is MeasureKind.ATOMIC:
            d = {}
            for x, w in self.atoms:
                d[x] = d.get(x, 0.0) + w
            return all(abs(d.get(-x, 0.0) - w) <= 1e-12 * max(1.0, w) for x, w in d.items())
        if self.a != self.b:
            return False
        xs = np.geomspace(self.b * 1e-6, self.b, 50)
        return bool(np.allclose(self.density(xs), self.density(-xs), rtol=1e-12, atol=0))

    # -- sampling ------------------------------------------------------------
    def size_sampler(self, lo, hi=np.inf):
        """Return ``draw(rng, size)`` sampling jump sizes from nu restricted to lo < |x| <= hi."""
        if self.kind is MeasureKind.ATOMIC:
            sel = [(x, w) for x, w in self.atoms if lo < abs(x) <= hi and w > 0]
            xs = np.array([x for x, _ in sel])
            p = np.array([w for _, w in sel])
            if p.size == 0:
                return lambda rng, size: np.zeros(size)
            cum = np.cumsum(p / p.sum())
            cum[-1] = 1.0
            return lambda rng, size: xs[np.searchsorted(cum, rng.random(size), side="right")]
        sides = []
        for side, (slo, shi) in zip((1.0, -1.0), self._side_limits(lo, hi)):
            if shi <= slo:
                sides.append((side, 0.0, None))
            elif self.delta is not None:
                sides.append((side, self._side_moment(0, slo, shi, side), _power_inverse(self.delta, slo, shi)))
            else:
                grid, cdf = self._cdf_table(slo, shi, side)
                sides.append((side, cdf[-1], lambda v, g=grid, c=cdf / cdf[-1]: np.interp(v, c, g)))
        w_right = sides[0][1] / (sides[0][1] + sides[1][1])

        def draw(rng, size):
            # one uniform picks the side and, rescaled, the magnitude
            u = rng.random(size)
            out = np.empty(size)
            right = u < w_right
            if sides[0][1] > 0:
                out[right] = sides[0][2](u[right] / w_right)
            if sides[1][1] > 0:
                left = ~right
                out[left] = -sides[1][2]((u[left] - w_right) / (1.0 - w_right))
            return out

        return draw

    def _cdf_table(self, lo, hi, side):
        if lo <= 0:
            raise InvalidParameter("jump tables need a positive lower threshold")
        grid = np.geomspace(lo, hi, TABLE_SIZE)
        if self.delta is not None:
            k = -1.0 - self.delta
            cdf = (grid**k - lo**k) / k
        else:
            # trapezoid in log x of x * density(x)
            g = grid * self.density(side * grid)
            dy = np.diff(np.log(grid))
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * dy * (g[1:] + g[:-1]))])
        return grid, cdf


def _power_inverse(delta, lo, hi):
    """Exact quantile function of |x|^-(2+delta) restricted to (lo, hi]."""
    k = -1.0 - delta
    a, span = lo**k, hi**k - lo**k
    return lambda v: (a + v * span) ** (1.0 / k)


def power_law(delta, a=1.0, b=1.0):
    """nu(dx) = |x|^-(2+delta) dx on [-a, b]."""
    delta = float(delta)
    if not -1.0 < delta < 1.0:
        raise InvalidParameter(f"power-law exponent delta must lie in (-1, 1), got {delta}")

    def dens(x):
        ax = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(ax > 0, ax ** -(2.0 + delta), 0.0)

    return LevyMeasure(MeasureKind.DENSITY, float(a), float(b), density=dens, delta=delta,
                       meta={"kind": "power-law", "delta": delta, "a": float(a), "b": float(b)})


def from_density(density, a, b):
    return LevyMeasure(MeasureKind.DENSITY, float(a), float(b), density=density)


def atomic(atoms):
    atoms = tuple((float(x), float(w)) for x, w in atoms)
    if not atoms:
        raise InvalidParameter("atomic measure needs at least one atom")
    a = max([-x for x, _ in atoms if x < 0], default=1.0)
    b = max([x for x, _ in atoms if x > 0], default=1.0)
    return LevyMeasure(MeasureKind.ATOMIC, a, b, atoms=atoms,
                       meta={"kind": "atomic", "atoms": [list(t) for t in atoms]})


def measure_from_config(cfg):
    kind = cfg.get("kind")
    if kind == "power-law":
        return power_law(cfg["delta"], cfg.get("a", 1.0), cfg.get("b", 1.0))
    if kind == "atomic":
        return atomic(cfg["atoms"])
    raise InvalidParameter(f"unknown measure kind {kind!r}")


# -- truncation statistics ---------------------------------------------------

def sigma_eps(m, eps):
    """sqrt of the second moment of nu over |x| <= eps."""
    eps = check_nonnegative("eps", eps)
    if eps == 0:
        return 0.0
    return math.sqrt(m.moment(2, 0.0, eps))


@dataclass(frozen=True)
class SubstitutionReport:
    eps: tuple
    ratios: tuple
    verdict: str


def gaussian_substitution_valid(m, eps_grid):
    eps = np.asarray(eps_grid, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise InvalidParameter("eps_grid must be positive and strictly decreasing")
    ratios = np.array([sigma_eps(m, e) / e for e in eps])
    verdict = "diverging" if np.all(np.diff(ratios) > 0) else "inconclusive"
    return SubstitutionReport(tuple(eps.tolist()), tuple(ratios.tolist()), verdict)


def _gl_nodes(a, b, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _h_moment(h, t, k):
    val, _ = integrate.quad(lambda s: float(h(s)) ** k, 0.0, t, limit=200, epsabs=1e-15, epsrel=1e-12)
    return val


def h_constant(h, t):
    """int|h|^3 / (int h^2)^(3/2) over [0, t]."""
    h2 = _h_moment(h, t, 2)
    if h2 <= 0:
        raise ZeroVariance("h vanishes on [0, t]")
    h3, _ = integrate.quad(lambda s: abs(float(h(s))) ** 3, 0.0, t, limit=200)
    return h3 / h2**1.5


def third_moment_ratio(m, eps, h=None, t=1.0):
    """int_{|x|<=eps}|x|^3 dnu / sigma(eps)^3, times the h constant when ``h`` is given."""
    eps = check_positive("eps", eps)
    s = sigma_eps(m, eps)
    if s == 0:
        raise ZeroVariance(f"sigma({eps}) = 0")
    c = 1.0 if h is None else h_constant(h, t)
    return c * m.moment(3, 0.0, eps) / s**3


# -- samplers ------------------------------------------------------------------

@dataclass(frozen=True)
class JumpSample:
    times: np.ndarray
    sizes: np.ndarray
    empty_tail: bool = False

    def __len__(self):
        return self.times.size


def poisson_jumps(m, lo, hi, horizon, count, rng, sampler=None):
    """Jumps for ``count`` independent paths: (counts, times, sizes) flattened by path."""
    rate = horizon * m.mass(lo, hi)
    counts = rng.poisson(rate, size=count)
    total = int(counts.sum())
    times = horizon * rng.random(total)
    draw = sampler or m.size_sampler(lo, hi)
    sizes = draw(rng, total) if total else np.zeros(0)
    return counts, times, sizes


def sample_large_jumps(m, eps, horizon, seed=0):
    eps = check_positive("eps", eps)
    horizon = check_positive("horizon", horizon)
    if m.mass(eps) == 0:
        warnings.warn(f"nu(|x| > {eps}) = 0: no jumps to sample", EmptyTailWarning, stacklevel=2)
        return JumpSample(np.zeros(0), np.zeros(0), empty_tail=True)
    rng = _rng.generator(seed, "large-jumps")
    _, times, sizes = poisson_jumps(m, eps, np.inf, horizon, 1, rng)
    order = np.argsort(times, kind="stable")
    return JumpSample(times[order], sizes[order])


class _CumulantLaw:
    """Law of sum over jumps of h(s) x / sigma, compensated, for lo < |x| <= hi.

    log phi(u) is a cumulant series kappa_k (iu)^k / k! over the jumps with
    |x| <= r, where kappa_k = m_k int h^k / sigma^k, plus a direct quadrature of
    the Levy-Khintchine integrand over r < |x| <= hi.  The CDF then follows
    from the Gil-Pelaez formula.
    """

    def __init__(self, m, lo, hi, h, t, sigma, kmax=40):
        self.var = m.moment(2, lo, hi) * _h_moment(h, t, 2) / sigma**2
        self.kappa = {}
        self.direct = None
        if self.var <= 0:
            return
        sd = math.sqrt(self.var)
        s_nodes, s_weights = _gl_nodes(0.0, t, 16, 16)
        hs = np.asarray(h(s_nodes), dtype=float) * np.ones_like(s_nodes)
        hmax = max(np.abs(hs).max(), max(abs(float(h(v))) for v in np.linspace(0.0, t, 2001)))
        self.umax = 14.0 / sd
        # series region |x| <= r where u h x / sigma stays below 1
        r = min(hi, sigma / (self.umax * hmax)) if hmax > 0 else hi
        for k in range(2, kmax + 1):
            mk = m.moment(k, lo, r, signed=True) if r > lo else 0.0
            if mk == 0:
                continue
            kap = mk * _h_moment(h, t, k) / sigma**k
            self.kappa[k] = kap
            if abs(kap) * self.umax**k / factorial(k) < 1e-18 and k > 4:
                break
        if r < hi:
            xs, xw = [], []
            for side, (slo, shi) in zip((1.0, -1.0), m._side_limits(max(lo, r), hi)):
                if shi > slo:
                    y, w = _gl_nodes(math.log(slo), math.log(shi), 64, 16)
                    x = np.exp(y)
                    xs.append(side * x)
                    xw.append(w * x * m.density(side * x))
            self.direct = (np.concatenate(xs), np.concatenate(xw), hs / sigma, s_weights)

    def cf(self, u):
        u = np.asarray(u, dtype=float)
        logphi = np.zeros(u.shape, dtype=complex)
        for k, kap in self.kappa.items():
            logphi += kap * (1j * u) ** k / factorial(k)
        if self.direct is not None:
            x, xw, hs, sw = self.direct
            flat = logphi.reshape(-1)
            for i, ui in enumerate(u.reshape(-1)):
                z = ui * np.outer(hs, x)
                flat[i] += sw @ ((np.expm1(1j * z) - 1j * z) @ xw)
            logphi = flat.reshape(u.shape)
        return np.exp(logphi)

    def quantile_table(self, points=8193):
        sd = math.sqrt(self.var)
        du = 2.0 * np.pi / (80.0 * sd)
        u = du * np.arange(1, int(np.ceil(self.umax / du)) + 1)
        y = np.linspace(-14.0 * sd, 14.0 * sd, points)
        phi = self.cf(u)
        # F(y) = 1/2 + y du / (2 pi) - (1/pi) sum_j Im(e^{-i u_j y} phi(u_j)) / j
        im = np.imag(np.exp(-1j * np.outer(y, u)) * phi[None, :]) / (u[None, :] / du)
        F = 0.5 + y * du / (2.0 * np.pi) - im.sum(axis=1) / np.pi
        F = np.clip(np.maximum.accumulate(F), 0.0, 1.0)
        keep = np.concatenate([[True], np.diff(F) > 0])
        return F[keep], y[keep]

    def sample(self, rng, size):
        if self.var <= 0:
            return np.zeros(size)
        F, y = self.quantile_table()
        return np.interp(rng.random(size), F, y)


def _validate_inner(m, eps, inner_eps, remainder):
    if inner_eps is None:
        inner_eps = eps / 100.0
    inner_eps = check_positive("inner_eps", inner_eps)
    if not inner_eps < eps:
        raise InvalidParameter("inner_eps must be smaller than eps")
    if remainder not in ("drop", "exact"):
        raise InvalidParameter(f"remainder must be 'drop' or 'exact', got {remainder!r}")
    if remainder == "drop":
        frac = m.moment(2, 0.0, inner_eps) / m.moment(2, 0.0, eps)
        if frac > MAX_DISCARDED_VARIANCE * (1.0 + 1e-9):
            raise TruncationTooCoarse(
                f"jumps below inner_eps carry {frac:.3g} of sigma(eps)^2 (limit {MAX_DISCARDED_VARIANCE})")
    return inner_eps


def sample_small_jump_functional(m, eps, h, t, inner_eps=None, count=10_000, seed=0,
                                 method="auto", remainder="drop", max_jumps=20_000_000):
    """Samples of sigma(eps)^-1 * int int h(s) x dN~ over [0,t] x {inner_eps < |x| <= eps}.

    ``method='poisson'`` simulates every jump; ``method='cumulant'`` draws from
    the exact law obtained by inverting the characteristic function.  With
    ``remainder='exact'`` the jumps below ``inner_eps`` are included as well
    (from their exact law), so nothing below ``eps`` is discarded.
    """
    eps = check_positive("eps", eps)
    t = check_positive("t", t)
    count = check_count("count", count)
    sigma = sigma_eps(m, eps)
    if sigma == 0:
        raise ZeroVariance(f"sigma({eps}) = 0")
    inner_eps = _validate_inner(m, eps, inner_eps, remainder)
    expected = t * m.mass(inner_eps, eps) * count
    if method == "auto":
        method = "poisson" if (m.kind is MeasureKind.ATOMIC or expected <= max_jumps) else "cumulant"
    if method == "cumulant" and m.kind is MeasureKind.ATOMIC:
        raise InvalidParameter("the cumulant sampler needs a density measure")
    if method == "poisson" and expected > max_jumps:
        raise InvalidParameter(f"about {expected:.3g} jumps needed; use method='cumulant'")

    rng = _rng.generator(seed, "small-jumps")
    if method == "cumulant":
        lo = 0.0 if remainder == "exact" else inner_eps
        values = _CumulantLaw(m, lo, eps, h, t, sigma).sample(rng, count)
    elif method == "poisson":
        values = _poisson_functional(m, inner_eps, eps, h, t, sigma, count, rng)
        if remainder == "exact" and m.kind is MeasureKind.DENSITY:
            values = values + _CumulantLaw(m, 0.0, inner_eps, h, t, sigma).sample(
                _rng.generator(seed, "small-jumps-remainder"), count)
    else:
        raise InvalidParameter(f"unknown method {method!r}")
    return EmpiricalSample(values, count, seed)


def _poisson_functional(m, lo, hi, h, t, sigma, count, rng, chunk=2_000_000):
    sampler = m.size_sampler(lo, hi)
    comp = m.moment(1, lo, hi, signed=True) * _h_moment(h, t, 1)
    out = np.empty(count)
    rate = t * m.mass(lo, hi)
    step = max(1, int(chunk / max(rate, 1.0)))
    for start in range(0, count, step):
        stop = min(count, start + step)
        counts, times, sizes = poisson_jumps(m, lo, hi, t, stop - start, rng, sampler)
        owner = np.repeat(np.arange(stop - start), counts)
        hv = np.asarray(h(times), dtype=float) * np.ones_like(times)
        out[start:stop] = np.bincount(owner, weights=hv * sizes, minlength=stop - start)
    return (out - comp) / sigma
