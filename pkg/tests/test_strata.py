import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from princebart.data import ColumnSpec, Dataset, RunConfig
from princebart.strata import (ALWAYS, COMPLIER, NEVER, DataAdequacyError, SurfaceSet, class_posterior,
                               compatible, fit_surfaces, fitting_subsets, initialize_gtilde, impute_gtilde,
                               is_compatible, labels, offsets, pooled_moments, run_chains)

FAST = dict(chains=1, iterations=6, burn_in=2, trees_m=10, propensity_burn_in=2, propensity_draws=3)


def brute_gamma(pc, pa, pn, w1c, w1a, w0c, w0n, y, z, w):
    # enumerate the two strata compatible with the cell and apply Bayes' rule
    if z != w:
        return 0.0
    comps = {"c": pc * ((w1c if z else w0c) if y else 1 - (w1c if z else w0c))}
    if z == 1:
        comps["a"] = pa * (w1a if y else 1 - w1a)
    else:
        comps["n"] = pn * (w0n if y else 1 - w0n)
    return comps["c"] / sum(comps.values())


def test_compatible_table():
    assert compatible(1, 1) == ("c", "a")
    assert compatible(0, 0) == ("c", "n")
    assert compatible(0, 1) == ("a",)
    assert compatible(1, 0) == ("n",)


def test_initialize_examples():
    g = initialize_gtilde([0, 1, 1, 0], [1, 0, 1, 0])
    assert labels(g).tolist() == ["a", "n", "c", "c"]


def test_gamma_examples():
    g = class_posterior(0.5, 0.5, 0.0, 0.8, 0.4, 0.5, 0.5, np.array([1, 0]), np.array([1, 1]), np.array([1, 1]))
    assert g[0] == pytest.approx(2 / 3, abs=1e-15)
    assert g[1] == pytest.approx(0.25, abs=1e-15)
    g1 = class_posterior(1.0, 0.0, 0.0, 0.3, 0.9, 0.2, 0.7, np.array([0, 1, 0, 1]), np.array([1, 1, 0, 0]),
                         np.array([1, 1, 0, 0]))
    assert g1.tolist() == [1.0, 1.0, 1.0, 1.0]


def test_gamma_zero_for_forced_cells():
    g = class_posterior(0.5, 0.3, 0.2, 0.5, 0.5, 0.5, 0.5, np.array([1, 0]), np.array([0, 1]), np.array([1, 0]))
    assert g.tolist() == [0.0, 0.0]


def test_gamma_fuzz_against_enumeration(rng):
    n = 10_000
    pc = rng.uniform(0.01, 0.98, n)
    pa = (1 - pc) * rng.uniform(0, 1, n)
    pn = (1 - pc) - pa
    w = rng.uniform(1e-6, 1 - 1e-6, (4, n))
    y, z, ww = rng.integers(0, 2, (3, n))
    g = class_posterior(pc, pa, pn, w[0], w[1], w[2], w[3], y, z, ww)
    exact = np.array([brute_gamma(pc[i], pa[i], pn[i], w[0, i], w[1, i], w[2, i], w[3, i], y[i], z[i], ww[i])
                      for i in range(n)])
    assert np.max(np.abs(g - exact)) <= 1e-12


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0, 1), st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6),
       st.integers(0, 1), st.integers(0, 1))
def test_gamma_is_probability(pc, frac, wc, wr, y, z):
    pa = (1 - pc) * frac
    g = class_posterior(pc, pa, (1 - pc) - pa, wc, wr, wc, wr, np.array([y]), np.array([z]), np.array([z]))
    assert 0.0 <= g[0] <= 1.0


def test_impute_extremes(rng):
    z = np.array([1, 1, 0, 0, 1, 0])
    w = np.array([1, 1, 0, 0, 0, 1])
    g = impute_gtilde(np.array([1.0, 0.0, 1.0, 0.0, 0.7, 0.7]), z, w, rng)
    assert g.tolist() == [COMPLIER, ALWAYS, COMPLIER, NEVER, NEVER, ALWAYS]


def test_impute_frequency(rng):
    n = 100_000
    g = impute_gtilde(np.full(n, 0.3), np.ones(n), np.ones(n), rng)
    assert abs(np.mean(g == COMPLIER) - 0.3) < 0.005


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.floats(0, 1)), min_size=1, max_size=50),
       st.integers(0, 2**32 - 1))
def test_imputation_always_compatible(cells, seed):
    z, w, gam = (np.array(v) for v in zip(*cells))
    g = impute_gtilde(gam, z, w, np.random.default_rng(seed))
    assert is_compatible(g, z, w).all()
    forced = z != w
    assert np.array_equal(g[forced], initialize_gtilde(z, w)[forced])


def test_offsets_hand_arithmetic():
    # Z=0: W rate 0.25 -> a = 0.25; Z=1: (1-W) rate 0.25 -> n = 0.25; c = 0.5
    z = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    w = np.array([1, 0, 0, 0, 1, 1, 1, 0])
    y = np.array([1, 0, 1, 0, 1, 1, 0, 0])
    off = offsets(z, w, y)
    assert off["pi_c"] == 0.5
    assert off["pi_a_given_notc"] == 0.5
    assert off["omega_1a"] == 0.99 and off["omega_0n"] == 0.01
    # y11 = 2/3, f = c/(c+a) = 2/3 -> (2/3 - 1/3)/(2/3) = 0.5
    assert off["omega_1c"] == pytest.approx(0.5)
    # y00 = 1/3, g = 2/3 -> (1/3 - 0)/(2/3) = 0.5
    assert off["omega_0c"] == pytest.approx(0.5)


def _toy(n=400, seed=0, w_all_zero=False):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, 2))
    z = (r.random(n) < 0.5).astype(int)
    g = r.integers(0, 3, n)
    w = np.where(g == 0, z, g == 2).astype(int)
    if w_all_zero:
        w = np.zeros(n, dtype=int)
    y = (r.random(n) < 0.4 + 0.2 * w).astype(int)
    return Dataset(x, z, w, y, (ColumnSpec("a", "covariate"), ColumnSpec("b", "covariate")))


def test_fitting_subsets_pool_arms():
    d = _toy()
    g = initialize_gtilde(d.z, d.w)
    sub = fitting_subsets(d, g)
    assert np.array_equal(sub["omega_1a"][1], g == ALWAYS)
    assert np.array_equal(sub["omega_0n"][1], g == NEVER)
    assert np.array_equal(sub["omega_0c"][1], (d.z == 0) & (g == COMPLIER))
    assert sub["pi_c"][1].all()


@pytest.mark.parametrize("backend", ["bart", "linear"])
def test_fit_surfaces_deterministic(backend):
    d = _toy()
    cfg = RunConfig(backend=backend, trees_m=10)
    g = initialize_gtilde(d.z, d.w)
    out = []
    for _ in range(2):
        s = SurfaceSet(d.x, d, cfg)
        rng = np.random.default_rng(3)
        fit_surfaces(s, d, g, rng)
        probs, empty = fit_surfaces(s, d, g, rng)
        out.append(probs)
        assert empty == []
        for p in probs.values():
            assert np.all((p >= 1e-6) & (p <= 1 - 1e-6))
    for k in out[0]:
        assert np.array_equal(out[0][k], out[1][k])


def test_one_retained_draw():
    d = _toy()
    res = run_chains(d, RunConfig(chains=1, iterations=4, burn_in=3, trees_m=5, propensity_burn_in=1,
                                  propensity_draws=1), keep_draws=True)
    assert len(res) == 1 and res[0].retained == 1
    assert len(res[0].draws) == 1 and res[0].estimands["satt_c"].shape == (1,)


def test_draw_invariants():
    d = _toy()
    res = run_chains(d, RunConfig(chains=2, iterations=20, burn_in=0, trees_m=10, propensity_burn_in=2,
                                  propensity_draws=3), keep_draws=True)
    for r in res:
        for dr in r.draws:
            assert is_compatible(dr.gtilde, d.z, d.w).all()
            assert np.max(np.abs(dr.pi_c + dr.pi_a + dr.pi_n - 1.0)) <= 2.3e-16
            assert np.all(dr.pi_n >= -1e-16)


def test_identical_seeds_identical_results_and_threads():
    d = _toy()
    cfg = RunConfig(chains=2, **{k: v for k, v in FAST.items() if k != "chains"})
    a = run_chains(d, cfg, threads=1, keep_units=True)
    b = run_chains(d, cfg, threads=2, keep_units=True)
    for ra, rb in zip(a, b):
        for k in ra.estimands:
            assert np.array_equal(ra.estimands[k], rb.estimands[k])
        for k in ra.unit_draws:
            assert np.array_equal(ra.unit_draws[k], rb.unit_draws[k])
    c = run_chains(d, cfg.replace(seed=cfg.seed + 1), threads=1)
    assert not np.array_equal(a[0].estimands["mate_c"], c[0].estimands["mate_c"])


def test_empty_surface_raises():
    d = _toy(w_all_zero=True)
    with pytest.raises(DataAdequacyError, match="omega_1a"):
        run_chains(d, RunConfig(backend="linear", **FAST))


def test_constant_assignment_raises():
    d = _toy()
    d = d.with_treatment(z=np.ones(d.n, dtype=int), w=np.ones(d.n, dtype=int))
    with pytest.raises(DataAdequacyError, match="assignment"):
        run_chains(d, RunConfig(backend="linear", **FAST))


def test_monotonicity_consequences_and_complier_share(small_sim2):
    from princebart.sim import gen_sim2

    d, _ = gen_sim2(seed=5)
    cfg = RunConfig(backend="linear", chains=1, iterations=120, burn_in=40)
    res = run_chains(d, cfg)
    mom = pooled_moments(res)
    pi_c = mom["pi_c"][0]
    pi_a = (1 - pi_c) * mom["pi_a_given_notc"][0]
    pi_n = 1 - pi_c - pi_a
    assert abs(pi_a.mean() - d.w[d.z == 0].mean()) < 0.02
    assert abs(pi_n.mean() - (1 - d.w[d.z == 1]).mean()) < 0.02
    assert abs(pi_c.mean() - 1 / 3) < 0.05
