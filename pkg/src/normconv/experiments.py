"""Named, seeded experiments producing deterministic reports."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from . import discrete_chaos as dc
from .covmodels import get_model, predicted_rate
from .errors import InvalidExperimentWarning, InvalidParameter
from .flp_kernels import FractionalKernel, fbm_covariance, gram, hybrid_variance, simulate_flp_hybrid
from .functionals import (ProductOUConfig, SubordinatedConfig, product_ou_condition_bounds,
                          product_ou_functional, product_ou_paths, product_ou_variance_exact,
                          simulate_subordinated, subordinated_variance_oracle)
from .levy_jumps import (gaussian_substitution_valid, measure_from_config,
                         sample_small_jump_functional, sigma_eps, third_moment_ratio)
from .stats_distance import (EmpiricalSample, bootstrap_se, ks_std_normal, rate_fit, variance_se,
                             wasserstein1_std_normal)

# named test functions: (callable, declared symmetric)
FUNCTIONS = {
    "x": (lambda x: x, False),
    "x^2": (lambda x: x**2, True),
    "x^3": (lambda x: x**3, False),
    "x^3+x": (lambda x: x**3 + x, False),
    "x^4": (lambda x: x**4, True),
    "cos": (np.cos, True),
    "abs": (np.abs, True),
}


@dataclass
class Report:
    rows: list = field(default_factory=list)
    assertions: list = field(default_factory=list)

    def check(self, name, passed, value, threshold):
        self.assertions.append({"name": name, "passed": bool(passed),
                                "value": _clean(value), "threshold": _clean(threshold)})

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)


def _clean(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def _row(experiment, T, values, seed, **extra):
    v = np.asarray(values, dtype=float)
    var, se = variance_se(v)
    std = EmpiricalSample.standardized(v, seed)
    row = {"experiment": experiment, "T": float(T), "replications": int(v.size),
           "mean": float(v.mean()), "variance": var, "variance_se": se,
           "w1": wasserstein1_std_normal(std), "ks": ks_std_normal(std), "seed": int(seed)}
    row.update(_clean(extra))
    return row


def _function(name):
    try:
        return FUNCTIONS[name]
    except KeyError:
        raise InvalidParameter(f"unknown function {name!r}; known: {sorted(FUNCTIONS)}") from None


def _model(params):
    mp = dict(params.get("model_params", {}))
    return get_model(params["model"], **mp)


# -- experiments --------------------------------------------------------------------

def clt_subordinated(params, seed, reps):
    model = _model(params)
    f, sym = _function(params["f"])
    rep = Report()
    for i, T in enumerate(params["T"]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InvalidExperimentWarning)
            cfg = SubordinatedConfig(model, f, float(T), float(params["dt"]), reps, symmetric=sym)
        s = _rng.child_seed(seed, i)
        F = simulate_subordinated(cfg, s, params["method"])
        oracle = subordinated_variance_oracle(cfg)
        row = _row("clt-subordinated", T, F, s, oracle_variance=oracle,
                   limit_variance=cfg.limit_variance, predicted_rate=predicted_rate(model.decay, T))
        rep.rows.append(row)
        rep.check(f"variance T={T}", abs(row["variance"] - oracle) <= 3 * row["variance_se"],
                  row["variance"] - oracle, 3 * row["variance_se"])
        if cfg.limit_variance is not None:
            rel = abs(oracle / cfg.limit_variance - 1.0)
            rep.check(f"oracle near limit T={T}", rel <= params["limit_rtol"], rel, params["limit_rtol"])
    last = rep.rows[-1]
    rep.check("w1 at largest T", last["w1"] < params["w1_max"], last["w1"], params["w1_max"])
    return rep


def rate_table(params, seed, reps):
    model = _model(params)
    f, sym = _function(params["f"])
    rep = Report()
    pts = []
    for i, T in enumerate(params["T"]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InvalidExperimentWarning)
            cfg = SubordinatedConfig(model, f, float(T), float(params["dt"]), reps, symmetric=sym)
        s = _rng.child_seed(seed, i)
        F = simulate_subordinated(cfg, s, params["method"])
        se = bootstrap_se(F, lambda v: wasserstein1_std_normal(EmpiricalSample.standardized(v)),
                          seed=s)
        row = _row("rate-table", T, F, s, w1_se=se, predicted_rate=predicted_rate(model.decay, T))
        rep.rows.append(row)
        pts.append((T, row["w1"]))
    fit = rate_fit(pts)
    rep.rows.append({"experiment": "rate-table", "fit_slope": fit.slope,
                     "fit_intercept": fit.intercept, "fit_r2": fit.r2})
    rep.check("fitted slope", fit.slope <= params["slope_max"], fit.slope, params["slope_max"])
    return rep


def small_jumps(params, seed, reps):
    m = measure_from_config(params["measure"])
    lam, t = float(params["lambda"]), float(params["t"])
    h = lambda s: math.sqrt(2.0 * lam) * np.exp(-lam * (t - np.asarray(s, dtype=float)))
    S = sample_small_jump_functional(m, params["eps"], h, t, params["inner_eps"], reps, seed,
                                     method=params["method"], remainder=params["remainder"])
    target = -math.expm1(-2.0 * lam * t)
    std = EmpiricalSample(S.values / math.sqrt(target), reps, seed)
    ks = ks_std_normal(std)
    row = _row("small-jumps", t, S.values, seed, ks_target=ks, target_variance=target,
               sigma_eps=sigma_eps(m, params["eps"]))
    grid = params["eps_grid"]
    ratios = [third_moment_ratio(m, e, h, t) for e in grid]
    sub = gaussian_substitution_valid(m, grid)
    row.update({"third_moment_ratios": ratios, "sigma_over_eps": list(sub.ratios),
                "verdict": sub.verdict})
    rep = Report([row])
    rep.check("ks to N(0, 1-exp(-2 lambda t))", ks < params["ks_max"], ks, params["ks_max"])
    rep.check("third moment ratio decreasing", bool(np.all(np.diff(ratios) < 0)), ratios, "decreasing")
    bound = [e / sigma_eps(m, e) for e in grid]
    plain = [third_moment_ratio(m, e) for e in grid]
    rep.check("ratio <= eps/sigma(eps)", all(r <= b for r, b in zip(plain, bound)), plain, bound)
    se = math.sqrt(row["variance"] / reps)
    rep.check("mean within 3 SE", abs(row["mean"]) <= 3 * se, row["mean"], 3 * se)
    return rep


def flp_hybrid(params, seed, reps):
    H = float(params["H"])
    k = FractionalKernel(H)
    m = measure_from_config(params["measure"])
    rep = Report()
    grid_pts = params["gram_grid"]
    worst = max(abs(gram(k, a, b) - fbm_covariance(H, a, b)) for a in grid_pts for b in grid_pts)
    rep.check("gram identity", worst <= params["gram_tol"], worst, params["gram_tol"])
    t = float(params["t"])
    n = int(params["n"])
    paths = simulate_flp_hybrid(k, m, params["eps"], n, t / n, reps, seed)
    gpart, jpart = hybrid_variance(k, m, params["eps"], t)
    row = _row("flp-hybrid", t, paths.values[:, -1], seed, gauss_part=gpart, jump_part=jpart)
    rep.rows.append(row)
    diff = row["variance"] - gpart - jpart
    rep.check("variance decomposition", abs(diff) <= 3 * row["variance_se"], diff, 3 * row["variance_se"])
    return rep


def product_ou(params, seed, reps):
    lam = float(params["lambda"])
    m = measure_from_config(params["measure"])
    rep = Report()
    for i, T in enumerate(params["T"]):
        cfg = ProductOUConfig(lam, m, float(T), params.get("dt"), reps, params["mode"])
        s = _rng.child_seed(seed, i)
        Y, Z = product_ou_paths(cfg, s)
        F = product_ou_functional(Y, Z, float(T))
        exact = product_ou_variance_exact(lam, float(T))
        row = _row("product-ou", T, F, s, exact_variance=exact)
        rep.rows.append(row)
        rep.check(f"variance T={T}", abs(row["variance"] - exact) <= 3 * row["variance_se"],
                  row["variance"] - exact, 3 * row["variance_se"])
    Tmax = float(params["T"][-1])
    gap = abs(product_ou_variance_exact(lam, Tmax) - 1.0 / lam)
    rep.check("variance limit", gap < params["limit_tol"], gap, params["limit_tol"])
    rep.check("w1 at largest T", rep.rows[-1]["w1"] < params["w1_max"], rep.rows[-1]["w1"], params["w1_max"])
    b1, b2 = product_ou_condition_bounds(lam, m, 1.0), product_ou_condition_bounds(lam, m, 2.0)
    slopes = [math.log2(v2 / v1) for v1, v2 in zip(b1.as_dict().values(), b2.as_dict().values())]
    ok = all(abs(sl - e) < 1e-12 for sl, e in zip(slopes, b1.exponents))
    rep.check("bound exponents", ok, slopes, list(b1.exponents))
    rep.rows.append({"experiment": "product-ou", "bounds_T1": b1.as_dict()})
    return rep


def chaos_identities(params, seed, reps):
    g = params["grid"]
    grid = dc.AtomGrid.uniform(g["horizon"], g["n_steps"], g["sigma"], [tuple(j) for j in g["jumps"]])
    rng = _rng.generator(seed, "chaos-kernels")
    rep = Report()
    noise = dc.sample_noise(grid, reps, _rng.child_seed(seed, 1))
    kernels = {q: [dc.random_kernel(grid, q, rng) for _ in range(2)] for q in (1, 2, 3)}
    # isometry
    worst = 0.0
    for p in (1, 2, 3):
        for q in (1, 2, 3):
            a = dc.multiple_integral(kernels[p][0], noise) * dc.multiple_integral(kernels[q][1], noise)
            exact = math.factorial(p) * dc.inner(kernels[p][0], kernels[q][1], grid) if p == q else 0.0
            worst = max(worst, abs(a.mean() - exact) / (a.std(ddof=1) / math.sqrt(reps)))
    rep.check("isometry (max |z|)", worst <= 3.0 * params["z_slack"], worst, 3.0 * params["z_slack"])
    F = dc.ChaosFunctional(grid, {q: kernels[q][0] for q in (1, 2, 3)})
    few = dc.NoiseRealization(noise.values[:50], noise.counts[:50], noise.seed)
    jumps = np.flatnonzero(grid.is_jump)
    err = max((np.max(np.abs(dc.quotient_derivative(F, few, int(z)) - dc.gradient(F, few)[:, z]))
               for z in jumps), default=0.0)
    rep.check("quotient rule", err <= 1e-12 * params["scale"], err, 1e-12 * params["scale"])
    perr = 0.0
    if jumps.size:
        A = dc.ChaosFunctional(grid, {1: kernels[1][0]})
        B = dc.ChaosFunctional(grid, {1: kernels[1][1]})
        for z in jumps:
            x = grid.sizes[z]
            plus = dc.add_jump(grid, few, int(z))
            lhs = (A(plus) * B(plus) - A(few) * B(few)) / x
            da, db = kernels[1][0][z], kernels[1][1][z]
            perr = max(perr, float(np.max(np.abs(lhs - (da * B(few) + A(few) * db + x * da * db)))))
    rep.check("product rule", perr <= 1e-12 * params["scale"], perr, 1e-12 * params["scale"])
    mesh, gap = [], []
    for k, n in enumerate(params["mesh_steps"]):
        mg = dc.AtomGrid.uniform(g["horizon"], n, g["sigma"] or 1.0)
        mn = dc.sample_noise(mg, reps, _rng.child_seed(seed, 200 + k))
        lhs, rhs = dc.product_formula_check(np.ones(n), np.ones(n), mn, mg)
        mesh.append(mg.mesh)
        gap.append(float(np.sqrt(np.mean((lhs - rhs) ** 2))))
    expo = float(np.polyfit(np.log(mesh), np.log(gap), 1)[0])
    rep.check("product formula gap exponent", abs(expo - 0.5) <= 0.15, expo, "0.5 +- 0.15")
    cen = dc.ou_generator(dc.ou_pseudo_inverse(F + dc.ChaosFunctional(grid, {0: np.array(2.5)})))
    err = max(float(np.max(np.abs(cen.kernel(q) - F.kernel(q)) / (np.abs(F.kernel(q)) + 1e-300)))
              for q in (1, 2, 3))
    rep.check("L Linv = centering", err <= 1e-15 and cen.mean == 0.0, err, 1e-15)
    u = {0: kernels[1][1], 1: kernels[2][1]}
    G = dc.ChaosFunctional(grid, {1: kernels[1][0], 2: kernels[2][0]})
    lhs = dc.expectation_product(dc.skorohod(u, grid), G)
    rhs = dc.process_inner_expectation(u, G, grid)
    rep.check("skorohod adjoint", abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs)), abs(lhs - rhs), 1e-12)
    bad = 0
    for i in range(params["n_random"]):
        top = 1 + i % 3
        K = dc.ChaosFunctional(grid, {q: dc.random_kernel(grid, q, rng) for q in range(1, top + 1)})
        r = dc.poincare_and_npbound_report(K, 200, _rng.child_seed(seed, 100 + i))
        ok = r.poincare_holds and r.ineq_holds and r.gf_identity and (r.poincare_equality == (top <= 1))
        bad += not ok
    rep.check("poincare on random kernels", bad == 0, bad, 0)
    rep.rows.append({"experiment": "chaos-identities", "atoms": grid.n, "replications": reps,
                     "isometry_max_z": worst, "gap_exponent": expo})
    return rep


REGISTRY = {
    "clt-subordinated": (clt_subordinated, {
        "model": "fbm-increments", "model_params": {"H": 0.7}, "f": "x^3+x", "T": [2000.0],
        "dt": 1.0, "method": "cholesky", "limit_rtol": 0.15, "w1_max": 0.05}, 2000),
    "rate-table": (rate_table, {
        "model": "fbm-increments", "model_params": {"H": 0.3}, "f": "x^2",
        "T": [250.0, 500.0, 1000.0, 2000.0], "dt": 1.0, "method": "circulant",
        "slope_max": -0.15}, 40000),
    "small-jumps": (small_jumps, {
        "measure": {"kind": "power-law", "delta": 0.5, "a": 1.0, "b": 1.0}, "eps": 1e-4,
        "inner_eps": 1e-6, "lambda": 1.0, "t": 5.0, "method": "auto", "remainder": "exact",
        "eps_grid": [1e-2, 1e-3, 1e-4], "ks_max": 0.02}, 10000),
    "flp-hybrid": (flp_hybrid, {
        "H": 0.7, "measure": {"kind": "power-law", "delta": 0.5, "a": 1.0, "b": 1.0},
        "eps": 1e-3, "t": 1.0, "n": 1, "gram_grid": [0.4, 0.8, 1.2, 1.6, 2.0],
        "gram_tol": 1e-3}, 10000),
    "product-ou": (product_ou, {
        "lambda": 1.0, "measure": {"kind": "atomic", "atoms": [[1.0, 0.5], [-1.0, 0.5]]},
        "T": [10.0, 50.0, 200.0], "dt": None, "mode": "from-zero", "limit_tol": 0.05,
        "w1_max": 0.05}, 10000),
    "chaos-identities": (chaos_identities, {
        "grid": {"horizon": 1.0, "n_steps": 4, "sigma": 1.0, "jumps": [[0.5, 2.0], [-1.0, 1.0]]},
        "n_random": 50, "z_slack": 1.0, "scale": 1.0,
        "mesh_steps": [4, 8, 16, 32, 64]}, 20000),
}


def resolve(experiment, parameters):
    """Defaults merged with ``parameters``; unknown keys are rejected."""
    from .errors import UnknownExperiment
    if experiment not in REGISTRY:
        raise UnknownExperiment(f"experiment={experiment!r} not in {sorted(REGISTRY)}")
    _, defaults, _ = REGISTRY[experiment]
    unknown = set(parameters) - set(defaults)
    if unknown:
        raise InvalidParameter(f"unknown parameters for {experiment}: {sorted(unknown)}")
    out = dict(defaults)
    out.update(parameters)
    return out


def run_experiment(experiment, parameters, seed, replications=None):
    fn, _, default_reps = REGISTRY.get(experiment, (None, None, None))
    params = resolve(experiment, parameters)
    reps = default_reps if replications is None else int(replications)
    if reps < 2:
        raise InvalidParameter("replications must be >= 2")
    rep = fn(params, int(seed), reps)
    return params, reps, rep
