"""A finite-atom Wiener-Poisson chaos.

Each atom z carries weight mu_z.  Wiener atoms have M_z ~ N(0, mu_z); a jump
atom of size x and intensity lam has M_z = x (N_z - lam) with N_z ~ Poisson(lam)
and mu_z = x^2 lam.  Multiple integrals are off-diagonal multilinear sums, so
the product formula holds only up to diagonal terms that vanish with the mesh.
Kernels are dense arrays of shape (n,)*q, kept symmetric with zero diagonals.
"""
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _rng
from ._validation import check_count, check_positive
from .errors import (IndexOutOfRange, InvalidParameter, IoFailure, NotCentered, OrderTooLarge,
                     UnknownAtom)

MAX_ATOMS = 64
MAX_ORDER = 3


@dataclass(frozen=True)
class AtomGrid:
    times: np.ndarray
    sizes: np.ndarray        # 0 for Wiener atoms
    intensities: np.ndarray  # 0 for Wiener atoms
    weights: np.ndarray
    horizon: float
    sigma: float = 0.0
    jumps: tuple = ()        # (x, nu mass) pairs the grid was built from

    def __post_init__(self):
        for name in ("times", "sizes", "intensities", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.weights.size
        if n == 0 or n > MAX_ATOMS:
            raise InvalidParameter(f"atom count must be in 1..{MAX_ATOMS}, got {n}")
        if not np.all(self.weights > 0):
            raise InvalidParameter("all atom weights must be positive")
        jump = self.intensities > 0
        if np.any(self.sizes[jump] == 0) or np.any(self.sizes[~jump] != 0):
            raise InvalidParameter("jump atoms need nonzero sizes, Wiener atoms size 0")
        keys = set(zip(self.times.tolist(), self.sizes.tolist()))
        if len(keys) != n:
            raise InvalidParameter("atoms must be distinct")

    @classmethod
    def uniform(cls, horizon, n_steps, sigma=1.0, jumps=()):
        """Atoms on n_steps equal cells: one Wiener atom per cell (if sigma > 0)
        plus one jump atom per cell and (x, nu mass) pair."""
        horizon = check_positive("horizon", horizon)
        n_steps = check_count("n_steps", n_steps)
        dt = horizon / n_steps
        t = dt * np.arange(n_steps)
        times, sizes, lam, mu = [], [], [], []
        if sigma > 0:
            times.append(t)
            sizes.append(np.zeros(n_steps))
            lam.append(np.zeros(n_steps))
            mu.append(np.full(n_steps, sigma**2 * dt))
        for x, nu in jumps:
            if x == 0 or nu <= 0:
                raise InvalidParameter(f"invalid jump ({x}, {nu})")
            times.append(t)
            sizes.append(np.full(n_steps, float(x)))
            lam.append(np.full(n_steps, nu * dt))
            mu.append(np.full(n_steps, x * x * nu * dt))
        if not times:
            raise InvalidParameter("grid has no atoms")
        return cls(np.concatenate(times), np.concatenate(sizes), np.concatenate(lam),
                   np.concatenate(mu), horizon, float(sigma),
                   tuple((float(x), float(nu)) for x, nu in jumps))

    @property
    def n(self):
        return self.weights.size

    @property
    def is_jump(self):
        return self.intensities > 0

    @property
    def mesh(self):
        t = np.unique(self.times)
        return float(np.max(np.diff(np.append(t, self.horizon))))

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def to_dict(self):
        return {"times": self.times.tolist(), "sizes": self.sizes.tolist(),
                "intensities": self.intensities.tolist(), "weights": self.weights.tolist(),
                "horizon": self.horizon, "sigma": self.sigma,
                "jumps": [list(j) for j in self.jumps]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["times"]), np.array(d["sizes"]), np.array(d["intensities"]),
                   np.array(d["weights"]), float(d["horizon"]), float(d.get("sigma", 0.0)),
                   tuple(tuple(j) for j in d.get("jumps", ())))


@dataclass(frozen=True)
class NoiseRealization:
    """Values M of shape (reps, n); ``counts`` hold N for jump atoms (0 elsewhere)."""
    values: np.ndarray
    counts: np.ndarray
    seed: int = 0

    @property
    def reps(self):
        return self.values.shape[0]


def sample_noise(grid, reps=1, seed=0):
    reps = check_count("reps", reps)
    rng = _rng.generator(seed, "chaos-noise")
    z = rng.standard_normal((reps, grid.n)) * np.sqrt(np.where(grid.is_jump, 0.0, grid.weights))
    counts = rng.poisson(grid.intensities, size=(reps, grid.n))
    values = np.where(grid.is_jump, grid.sizes * (counts - grid.intensities), z)
    return NoiseRealization(values, counts, int(seed))


def add_jump(grid, noise, z):
    """The realization with one extra jump at jump atom ``z``."""
    _check_atom(grid, z)
    if not grid.is_jump[z]:
        raise InvalidParameter(f"atom {z} is a Wiener atom")
    values = noise.values.copy()
    counts = noise.counts.copy()
    values[:, z] += grid.sizes[z]
    counts[:, z] += 1
    return NoiseRealization(values, counts, noise.seed)


def _check_atom(grid, z):
    if not (isinstance(z, (int, np.integer)) and 0 <= z < grid.n):
        raise UnknownAtom(f"no atom {z!r} on a grid of {grid.n} atoms")


# -- kernels --------------------------------------------------------------------

@lru_cache(maxsize=64)
def _diag_mask(n, q):
    """True where some pair of indices coincides."""
    if q < 2:
        return np.zeros((n,) * q, dtype=bool)
    idx = np.indices((n,) * q)
    mask = np.zeros((n,) * q, dtype=bool)
    for a, b in itertools.combinations(range(q), 2):
        mask |= idx[a] == idx[b]
    mask.setflags(write=False)
    return mask


def symmetrize(f):
    f = np.asarray(f, dtype=float)
    q = f.ndim
    if q < 2:
        return f.copy()
    perms = list(itertools.permutations(range(q)))
    if all(np.array_equal(f, np.transpose(f, p)) for p in perms[1:]):
        return f.copy()     # already symmetric: keep it bit for bit
    avg = sum(np.transpose(f, p) for p in perms) / len(perms)
    # read every entry from its sorted index so the result is exactly symmetric
    rep = np.sort(np.indices(f.shape), axis=0)
    return avg[tuple(rep)]


def canonical(f):
    """Symmetrized kernel with every diagonal entry set to zero."""
    f = symmetrize(f)
    if f.ndim >= 2:
        f[_diag_mask(f.shape[0], f.ndim)] = 0.0
    return f


def random_kernel(grid, q, rng, scale=1.0):
    return canonical(scale * rng.standard_normal((grid.n,) * q))


def _weighted(f, mu):
    """f times prod mu over every axis."""
    out = np.asarray(f, dtype=float)
    for ax in range(out.ndim):
        shape = [1] * out.ndim
        shape[ax] = -1
        out = out * mu.reshape(shape)
    return out


def inner(f, g, grid):
    """<f, g> in L^2(mu^q)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise InvalidParameter("kernels of different shapes")
    return float(np.sum(_weighted(f * g, grid.weights)))


def _noise_values(noise):
    v = noise.values if isinstance(noise, NoiseRealization) else np.asarray(noise, dtype=float)
    return np.atleast_2d(v)


def multiple_integral(f, noise):
    """Off-diagonal sum over ordered tuples of distinct atoms of f * prod M.

    Returns one value per realization.
    """
    f = np.asarray(f, dtype=float)
    M = _noise_values(noise)
    q = f.ndim
    n = M.shape[1]
    if q == 0:
        return np.full(M.shape[0], float(f))
    if q > n:
        raise OrderTooLarge(f"order {q} exceeds the atom count {n}")
    if f.shape != (n,) * q:
        raise InvalidParameter(f"kernel shape {f.shape} does not match {n} atoms")
    if q == 1:
        return M @ f
    f = np.where(_diag_mask(n, q), 0.0, f)
    out = np.empty(M.shape[0])
    step = max(1, 2_000_000 // n ** (q - 1))
    for lo in range(0, M.shape[0], step):
        m = M[lo:lo + step]
        acc = m @ f.reshape(n, -1)          # contracts the first axis
        for _ in range(q - 2):
            acc = np.einsum("ri,rij->rj", m, acc.reshape(m.shape[0], n, -1))
        out[lo:lo + step] = np.einsum("ri,ri->r", acc.reshape(m.shape[0], n), m)
    return out


def contraction(f, g, r, s, grid):
    """f contracted with g: r indices integrated against mu, s indices shared
    and weighted by the atom's jump size (zero for Wiener atoms)."""
    f = canonical(f)
    g = canonical(g)
    p, q = f.ndim, g.ndim
    if not (0 <= r <= min(p, q) and 0 <= s <= min(p, q) - r):
        raise IndexOutOfRange(f"invalid contraction indices r={r}, s={s} for orders {p}, {q}")
    letters = iter("abcdefghijklmnopqrstuvwxyz")
    A = [next(letters) for _ in range(r)]
    S = [next(letters) for _ in range(s)]
    X = [next(letters) for _ in range(p - r - s)]
    Y = [next(letters) for _ in range(q - r - s)]
    ops = [f, g] + [grid.weights] * r + [grid.sizes] * s
    subs = ["".join(A + S + X), "".join(A + S + Y)] + A + S
    subscripts = ",".join(subs) + "->" + "".join(S + X + Y)
    out = np.einsum(subscripts, *ops, optimize=True)
    return canonical(out)


def product_formula_coefficient(p, q, r, s):
    c = math.comb
    return math.factorial(r) * math.factorial(s) * c(p, r) * c(q, r) * c(p - r, s) * c(q - r, s)


def product_formula_check(f, g, noise, grid):
    """(I_p(f) I_q(g), sum over r, s of the contraction integrals) per realization."""
    f = canonical(f)
    g = canonical(g)
    p, q = f.ndim, g.ndim
    lhs = multiple_integral(f, noise) * multiple_integral(g, noise)
    rhs = np.zeros_like(lhs)
    for r in range(min(p, q) + 1):
        for s in range(min(p, q) - r + 1):
            k = contraction(f, g, r, s, grid)
            if k.ndim > grid.n:
                continue    # no tuples of distinct atoms: the integral is empty
            rhs += product_formula_coefficient(p, q, r, s) * multiple_integral(k, noise)
    return lhs, rhs


# -- chaos functionals -----------------------------------------------------------

@dataclass(frozen=True)
class ChaosFunctional:
    grid: AtomGrid
    kernels: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for q, f in self.kernels.items():
            q = int(q)
            if q > MAX_ORDER + 1:
                raise OrderTooLarge(f"orders above {MAX_ORDER + 1} are not stored")
            if q > self.grid.n:
                raise OrderTooLarge(f"order {q} exceeds the atom count {self.grid.n}")
            clean[q] = np.asarray(f, dtype=float) if q == 0 else canonical(f)
        object.__setattr__(self, "kernels", clean)

    @property
    def max_order(self):
        nz = [q for q, f in self.kernels.items() if np.any(f != 0)]
        return max(nz, default=0)

    @property
    def mean(self):
        return float(self.kernels.get(0, 0.0))

    def kernel(self, q):
        if q in self.kernels:
            return self.kernels[q]
        return np.zeros((self.grid.n,) * q)

    def evaluate(self, noise):
        M = _noise_values(noise)
        out = np.zeros(M.shape[0])
        for f in self.kernels.values():
            out += multiple_integral(f, M)
        return out

    __call__ = evaluate

    def map_orders(self, fn):
        """New functional with kernel f_q replaced by fn(q) * f_q."""
        return ChaosFunctional(self.grid, {q: fn(q) * f for q, f in self.kernels.items()})

    def __add__(self, other):
        ks = dict(self.kernels)
        for q, f in other.kernels.items():
            ks[q] = ks[q] + f if q in ks else f
        return ChaosFunctional(self.grid, ks)

    def to_dict(self):
        return {"grid": self.grid.to_dict(),
                "kernels": {str(q): np.asarray(f).tolist() for q, f in sorted(self.kernels.items())}}

    @classmethod
    def from_dict(cls, d):
        grid = AtomGrid.from_dict(d["grid"])
        return cls(grid, {int(q): np.array(f, dtype=float) for q, f in d["kernels"].items()})

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc


def expectation_product(F, G):
    """E[F G] = sum_q q! <f_q, g_q>_mu."""
    total = F.mean * G.mean
    for q in set(F.kernels) & set(G.kernels):
        if q >= 1:
            total += math.factorial(q) * inner(F.kernels[q], G.kernels[q], F.grid)
    return total


def variance(F):
    return expectation_product(F, F) - F.mean**2


def malliavin_derivative(F, z):
    """D_z F = sum_q q I_{q-1}(f_q(z, .))."""
    _check_atom(F.grid, z)
    ks = {}
    for q, f in F.kernels.items():
        if q >= 1:
            ks[q - 1] = q * f[z]
    return ChaosFunctional(F.grid, ks)


def gradient(F, noise):
    """D_z F evaluated for every atom, shape (reps, n)."""
    M = _noise_values(noise)
    n = F.grid.n
    out = np.zeros(M.shape)
    for q, f in F.kernels.items():
        if q == 0:
            continue
        if q == 1:
            out += f[None, :]
        elif q == 2:
            out += 2.0 * M @ f
        elif q == 3:
            out += 3.0 * np.einsum("ri,rj,zij->rz", M, M, f, optimize=True)
        else:
            out += np.stack([q * multiple_integral(f[z], M) for z in range(n)], axis=1)
    return out


def quotient_derivative(F, noise, z):
    """(F(omega + jump at z) - F(omega)) / x_z."""
    grid = F.grid
    plus = add_jump(grid, noise, z)
    return (F.evaluate(plus) - F.evaluate(noise)) / grid.sizes[z]


def ou_generator(F):
    return F.map_orders(lambda q: -float(q))


def ou_pseudo_inverse(F):
    return F.map_orders(lambda q: -1.0 / q if q > 0 else 0.0)


def ou_semigroup(F, t):
    return F.map_orders(lambda q: math.exp(-q * t))


def ou_operators(F):
    return {"L": ou_generator(F), "Linv": ou_pseudo_inverse(F),
            "T": lambda t: ou_semigroup(F, t)}


def skorohod(u, grid=None):
    """delta(u) = sum_q I_{q+1}(u_q symmetrized).

    ``u`` is either a dict q -> array of order q+1 whose first axis is the atom
    z, or a list of ChaosFunctional indexed by atom.
    """
    if isinstance(u, (list, tuple)):
        grid = u[0].grid
        orders = sorted(set().union(*(uz.kernels for uz in u)))
        u = {q: np.stack([uz.kernel(q) for uz in u]) for q in orders}
    if grid is None:
        raise InvalidParameter("grid required for array-valued processes")
    return ChaosFunctional(grid, {q + 1: canonical(a) for q, a in u.items()})


def process_inner_expectation(u, G, grid):
    """E <u, DG>_mu computed atom by atom from D_z G."""
    total = 0.0
    for z in range(grid.n):
        DG = malliavin_derivative(G, z)
        uz = ChaosFunctional(grid, {q: a[z] for q, a in u.items()})
        total += grid.weights[z] * expectation_product(uz, DG)
    return total


def derivative_norm_sq(F):
    """E ||DF||^2_mu, atom by atom."""
    return sum(F.grid.weights[z] * expectation_product(D, D)
               for z in range(F.grid.n) for D in [malliavin_derivative(F, z)])


@dataclass(frozen=True)
class PoincareReport:
    variance: float
    derivative_norm: float
    pseudo_inverse_norm: float
    gf_mean: float
    poincare_holds: bool
    poincare_equality: bool
    ineq_holds: bool
    gf_identity: bool
    mc_reps: int
    mc_abs_gap: float
    mc_jump_term: float

    def __post_init__(self):
        for k, f in self.__dataclass_fields__.items():
            object.__setattr__(self, k, f.type(getattr(self, k)) if f.type in (int, float, bool)
                               else getattr(self, k))

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def poincare_and_npbound_report(F, reps=2000, seed=0, rtol=1e-12):
    if abs(F.mean) > 0:
        raise NotCentered("F must have zero order-0 kernel")
    grid = F.grid
    var = variance(F)
    edf = derivative_norm_sq(F)
    linv = ou_pseudo_inverse(F)
    edl = derivative_norm_sq(linv)
    gf = -sum(grid.weights[z] * expectation_product(malliavin_derivative(F, z),
                                                    malliavin_derivative(linv, z))
              for z in range(grid.n))
    tol = rtol * max(abs(var), abs(edf), 1e-300)
    noise = sample_noise(grid, reps, seed)
    DF = gradient(F, noise)
    DL = gradient(linv, noise)
    G = -(DF * DL) @ grid.weights
    jump = (np.abs(grid.sizes) * DF**2 * np.abs(DL)) @ grid.weights
    return PoincareReport(
        variance=var, derivative_norm=edf, pseudo_inverse_norm=edl, gf_mean=gf,
        poincare_holds=var <= edf + tol,
        poincare_equality=abs(edf - var) <= tol,
        ineq_holds=edl <= edf + tol,
        gf_identity=abs(gf - var) <= tol,
        mc_reps=reps, mc_abs_gap=float(np.mean(np.abs(var - G))),
        mc_jump_term=float(np.mean(jump)),
    )
