import math

import numpy as np
import pytest
from scipy import integrate, stats

from normconv.errors import (EmptyTailWarning, IntegralDiverged, InvalidParameter, TruncationTooCoarse,
                             ZeroVariance)
from normconv.levy_jumps import (atomic, from_density, gaussian_substitution_valid, measure_from_config,
                                 power_law, sample_large_jumps, sample_small_jump_functional, sigma_eps,
                                 third_moment_ratio)

PM1 = atomic([(-1.0, 0.5), (1.0, 0.5)])


def power_density(delta):
    return lambda x: np.abs(x) ** -(2 + delta)


def test_sigma_examples():
    m = power_law(0.5)
    assert sigma_eps(m, 0.0) == 0.0
    assert sigma_eps(m, 0.01) == pytest.approx(math.sqrt(0.4), rel=1e-14)
    assert sigma_eps(PM1, 0.5) == 0.0
    assert sigma_eps(PM1, 1.0) == 1.0


@pytest.mark.parametrize("delta", [-0.5, 0.0, 0.5, 0.9])
def test_power_law_generic_vs_closed_form(delta):
    closed = power_law(delta, 1.0, 1.0)
    generic = from_density(power_density(delta), 1.0, 1.0)
    for eps in (1e-4, 1e-2, 0.3, 1.0):
        ref = 2 * eps ** (1 - delta) / (1 - delta)
        assert sigma_eps(closed, eps) ** 2 / ref == pytest.approx(1.0, abs=1e-10)
        assert sigma_eps(generic, eps) ** 2 / ref == pytest.approx(1.0, abs=1e-10)


def test_sigma_monotone_and_saturates():
    m = power_law(0.3, a=0.5, b=2.0)
    vals = [sigma_eps(m, e) for e in np.geomspace(1e-5, 5.0, 30)]
    assert np.all(np.diff(vals) >= 0)
    assert sigma_eps(m, 2.0) ** 2 == pytest.approx(m.moment(2), rel=1e-14)
    assert sigma_eps(m, 5.0) == sigma_eps(m, 2.0)


def test_divergent_integral():
    with pytest.raises(IntegralDiverged):
        from_density(lambda x: np.abs(x) ** -3.5, 1.0, 1.0).moment(2, 0.0, 1.0)


def test_substitution_report():
    grid = [1e-1, 1e-2, 1e-3, 1e-4]
    r = gaussian_substitution_valid(power_law(0.5), grid)
    assert r.verdict == "diverging"
    np.testing.assert_allclose(np.diff(np.log10(r.ratios)), 0.75, rtol=1e-12)
    r = gaussian_substitution_valid(power_law(-0.5), grid)
    assert r.verdict == "diverging"
    np.testing.assert_allclose(np.diff(np.log10(r.ratios)), 0.25, rtol=1e-12)
    r = gaussian_substitution_valid(PM1, [2.0, 1.0, 0.5, 0.1])
    assert r.verdict == "inconclusive" and r.ratios[-1] == 0.0
    with pytest.raises(InvalidParameter):
        gaussian_substitution_valid(PM1, [0.1, 0.2])


def test_large_jump_counts():
    counts = np.array([len(sample_large_jumps(PM1, 0.5, 10.0, seed=s)) for s in range(1000)])
    assert abs(counts.mean() - 10) < 3 * math.sqrt(10 / 1000)
    s = sample_large_jumps(PM1, 0.5, 10.0, seed=3)
    assert set(np.abs(s.sizes)) <= {1.0}
    assert np.all(np.diff(s.times) >= 0) and np.all((s.times >= 0) & (s.times <= 10))


def test_vanishing_horizon_and_empty_tail():
    assert sum(len(sample_large_jumps(PM1, 0.5, 1e-9, seed=s)) for s in range(200)) == 0
    with pytest.warns(EmptyTailWarning):
        s = sample_large_jumps(PM1, 1.0, 5.0)
    assert s.empty_tail and len(s) == 0


def test_tail_mass_and_sizes():
    m = power_law(0.5)
    mass = (2 / 1.5) * (0.1**-1.5 - 1)
    assert m.mass(0.1) == pytest.approx(mass, rel=1e-13)
    s = sample_large_jumps(m, 0.1, 100.0, seed=1)
    n = len(s)
    assert abs(n - 100 * mass) < 3 * math.sqrt(100 * mass)
    # sizes follow the normalized restriction of nu
    cdf = lambda x: np.where(x < 0, (np.abs(x) ** -1.5 - 1) / 1.5, mass / 2 + (0.1**-1.5 - np.abs(x) ** -1.5) / 1.5) / mass
    assert stats.kstest(s.sizes, cdf).pvalue > 1e-3


def test_generic_density_sizes():
    # asymmetric generic density, sampled through the inverse-CDF table
    dens = lambda x: np.where(np.asarray(x) > 0, 2.0, 1.0) * np.exp(-np.abs(x))
    m = from_density(dens, 1.0, 3.0)
    draw = m.size_sampler(0.2)
    x = draw(np.random.default_rng(0), 20_000)
    mass = m.mass(0.2)
    right = 2 * (math.exp(-0.2) - math.exp(-3))

    def cdf(v):
        v = np.asarray(v)
        left = (np.exp(-np.abs(np.minimum(v, -0.2))) - math.exp(-1)) * (v < -0.2) + (v >= -0.2) * (math.exp(-0.2) - math.exp(-1))
        rt = np.where(v > 0.2, 2 * (math.exp(-0.2) - np.exp(-np.minimum(v, 3.0))), 0.0)
        return (left + rt) / mass

    assert mass == pytest.approx(right + math.exp(-0.2) - math.exp(-1), rel=1e-10)
    assert stats.kstest(x, cdf).pvalue > 1e-3


def test_small_jumps_zero_weight():
    x = sample_small_jump_functional(power_law(0.5), 1e-3, lambda s: 0.0 * s, 1.0, count=500, seed=0).values
    assert np.all(x == 0)


def test_small_jumps_discarded_variance():
    s = sample_small_jump_functional(power_law(0.5), 1e-3, lambda s: np.ones_like(s), 1.0,
                                     count=10_000, seed=2)
    x = s.values
    target = 1 - sigma_eps(power_law(0.5), 1e-5) ** 2 / sigma_eps(power_law(0.5), 1e-3) ** 2
    assert target == pytest.approx(0.9)
    se = math.sqrt(np.var((x - x.mean()) ** 2) / x.size)
    assert abs(x.var() - target) < 3 * se
    assert abs(x.mean()) < 3 * x.std() / math.sqrt(x.size)


def test_small_jumps_ou_weight():
    lam, t = 1.0, 5.0
    h = lambda s: math.sqrt(2 * lam) * np.exp(-lam * (t - np.asarray(s)))
    x = sample_small_jump_functional(power_law(0.5), 1e-4, h, t, inner_eps=1e-6, count=10_000, seed=1,
                                     remainder="exact").values
    sd = math.sqrt(1 - math.exp(-2 * lam * t))
    assert stats.kstest(x, "norm", args=(0, sd)).statistic < 0.02


@pytest.mark.parametrize("measure", [
    power_law(0.5),
    power_law(-0.5, a=0.2, b=1.0),
    from_density(lambda x: np.where(np.asarray(x) > 0, 3.0, 1.0) * np.abs(x) ** -2.2, 1.0, 1.0),
], ids=["sym", "power-asym", "generic-asym"])
def test_cumulant_matches_poisson(measure):
    # coarse eps so brute-force simulation of every jump is cheap
    h = lambda s: 1.0 + np.asarray(s)
    kw = dict(eps=0.2, h=h, t=1.0, inner_eps=0.002, count=2000, max_jumps=5e7)
    a = sample_small_jump_functional(measure, method="poisson", seed=1, **kw).values
    b = sample_small_jump_functional(measure, method="cumulant", seed=2, **kw).values
    assert stats.ks_2samp(a, b).pvalue > 1e-3
    assert abs(a.mean()) < 4 * a.std() / math.sqrt(a.size)


def test_small_jump_errors():
    m = power_law(0.5)
    one = lambda s: np.ones_like(s)
    with pytest.raises(TruncationTooCoarse):
        sample_small_jump_functional(m, 1e-3, one, 1.0, inner_eps=1e-4, count=10)
    sample_small_jump_functional(m, 1e-3, one, 1.0, inner_eps=1e-4, count=10, remainder="exact")
    with pytest.raises(InvalidParameter):
        sample_small_jump_functional(m, 1e-3, one, 1.0, inner_eps=1e-2, count=10)
    with pytest.raises(ZeroVariance):
        sample_small_jump_functional(PM1, 0.5, one, 1.0, count=10)
    with pytest.raises(InvalidParameter):
        sample_small_jump_functional(m, 1e-3, one, 1.0, count=10, method="poisson")


def test_third_moment_ratio():
    m = power_law(0.5)
    grid = np.geomspace(0.5, 1e-5, 12)
    r = np.array([third_moment_ratio(m, e) for e in grid])
    closed = (2 * grid**1.5 / 1.5) / (2 * grid**0.5 / 0.5) ** 1.5
    np.testing.assert_allclose(r, closed, rtol=1e-12)
    assert np.all(np.diff(r) < 0)
    np.testing.assert_allclose(np.diff(np.log(r)) / np.diff(np.log(grid)), 0.75, rtol=1e-10)
    for mm in (m, power_law(-0.7, 0.3, 1.0), atomic([(0.1, 5.0), (-0.4, 2.0), (1.0, 1.0)])):
        for e in (0.05, 0.3, 1.0):
            if sigma_eps(mm, e) > 0:
                assert third_moment_ratio(mm, e) <= e / sigma_eps(mm, e) * (1 + 1e-12)
    with pytest.raises(ZeroVariance):
        third_moment_ratio(PM1, 0.5)


def test_third_moment_ratio_with_weight():
    h = lambda s: np.exp(-np.asarray(s))
    c = integrate.quad(lambda s: math.exp(-3 * s), 0, 2)[0] / integrate.quad(lambda s: math.exp(-2 * s), 0, 2)[0] ** 1.5
    m = power_law(0.2)
    assert third_moment_ratio(m, 0.1, h, 2.0) == pytest.approx(c * third_moment_ratio(m, 0.1), rel=1e-10)


def test_measure_config():
    m = measure_from_config({"kind": "power-law", "delta": 0.5, "a": 0.5, "b": 1})
    assert (m.a, m.b, m.delta) == (0.5, 1.0, 0.5)
    m = measure_from_config({"kind": "atomic", "atoms": [[1, 0.5], [-1, 0.5]]})
    assert m.is_symmetric and m.moment(2) == 1.0
    for bad in ({"kind": "weird"}, {"kind": "power-law", "delta": 1.5}):
        with pytest.raises(InvalidParameter):
            measure_from_config(bad)
    with pytest.raises(InvalidParameter):
        atomic([(0.0, 1.0)])
