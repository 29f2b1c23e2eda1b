import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from princebart.data import ColumnSpec, Dataset
from princebart.estimands import (DrawEstimator, ImputedPotentials, SegmentDefinition, conditional_missing_prob,
                                  dependence_kappa, impute_dependent, impute_independent, kappa_key, mate_c,
                                  mcate_c, satt_c, shifted_omega_0c, summarize)
from princebart.strata import COMPLIER, NEVER, PosteriorDraw


def make_data(z, y, x=None):
    z = np.asarray(z)
    n = z.size
    x = np.arange(n, dtype=float)[:, None] if x is None else x
    return Dataset(x, z, z, y, (ColumnSpec("x", "covariate"),))


def make_draw(n, omega_1c=0.5, omega_0c=0.5, pi_c=0.5, gtilde=None, seed=1, iteration=0):
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()  # noqa: E731
    g = np.zeros(n, dtype=np.int8) if gtilde is None else np.asarray(gtilde, dtype=np.int8)
    return PosteriorDraw(pi_c=full(pi_c), pi_a_given_notc=full(0.5), omega_1c=full(omega_1c),
                         omega_0c=full(omega_0c), omega_1a=full(0.5), omega_0n=full(0.5), gtilde=g,
                         propensity_index=np.zeros(n), seed=seed, iteration=iteration)


def test_certain_effect_gives_unit_ite(rng):
    n = 50
    z = rng.integers(0, 2, n)
    y = z.copy()
    d = make_data(z, y)
    pot = impute_independent(make_draw(n, 1.0, 0.0), d, rng)
    assert (pot.ite[pot.complier] == 1).all()
    assert satt_c(pot, z) == 1.0


def test_symmetric_surfaces_zero_mean(rng):
    n = 100_000
    z = rng.integers(0, 2, n)
    y = (rng.random(n) < 0.37).astype(int)
    pot = impute_independent(make_draw(n, 0.37, 0.37), make_data(z, y), rng)
    assert abs(pot.ite.mean()) < 0.01


def test_observed_arm_untouched(rng):
    n = 400
    z = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    d = make_data(z, y)
    for f in (impute_independent, impute_dependent):
        for k in (0.0, 1.3, -2.0):
            pot = f(make_draw(n, rng.random(), rng.random()), d, rng, kappa=k)
            assert np.array_equal(np.where(z == 1, pot.y1, pot.y0), y)


def test_dependent_closed_form():
    assert dependence_kappa(0.6, 0.5) == pytest.approx(5 / 6)
    assert conditional_missing_prob(0.6, 0.5, 1) == pytest.approx(5 / 6)
    assert conditional_missing_prob(0.6, 0.5, 0) == pytest.approx(0.0, abs=1e-15)
    assert 0.6 * (5 / 6) + 0.4 * 0.0 == pytest.approx(0.5)


def test_dependent_equal_probs_copies_outcome(rng):
    n = 1000
    z = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    pot = impute_dependent(make_draw(n, 0.42, 0.42), make_data(z, y), rng)
    assert np.array_equal(pot.y1, pot.y0)


@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.integers(0, 2**32 - 1))
def test_dependent_preserves_marginal(p_obs, p_mis, seed):
    r = np.random.default_rng(seed)
    n = 20_000
    y = (r.random(n) < p_obs).astype(int)
    q = conditional_missing_prob(np.full(n, p_obs), np.full(n, p_mis), y)
    ymis = r.random(n) < q
    # exact in expectation: E[q] = p_mis when y ~ Bern(p_obs); allow the MC error of both draws
    se = math.sqrt(p_mis * (1 - p_mis) / n) + dependence_kappa(p_obs, p_mis) * math.sqrt(p_obs * (1 - p_obs) / n)
    assert abs(ymis.mean() - p_mis) <= 3 * se + 1e-12


def test_dependence_correlation_uniform_probs(rng):
    n = 200_000
    p_obs = rng.random(n)
    p_mis = rng.random(n)
    y = (rng.random(n) < p_obs).astype(float)
    ymis = (rng.random(n) < conditional_missing_prob(p_obs, p_mis, y)).astype(float)
    assert abs(np.corrcoef(y, ymis)[0, 1] - 0.33) < 0.05


def test_satt_arithmetic():
    z = np.ones(3, dtype=int)
    pot = ImputedPotentials(np.array([1, 0, 0]), np.array([0, 0, 1]), np.ones(3, dtype=bool))
    assert satt_c(pot, z) == 0.0
    same = ImputedPotentials(np.array([1, 0, 1]), np.array([1, 0, 1]), np.ones(3, dtype=bool))
    assert satt_c(same, z) == 0.0
    none = ImputedPotentials(np.zeros(3), np.zeros(3), np.zeros(3, dtype=bool))
    assert math.isnan(satt_c(none, z))
    # gtilde overrides the stored complier flags
    assert satt_c(pot, z, gtilde=[COMPLIER, NEVER, NEVER]) == 1.0


def test_mate_examples():
    d = make_draw(2)
    d.pi_c[:] = [0.2, 0.8]
    d.omega_1c[:] = [0.6, 0.9]
    d.omega_0c[:] = [0.5, 0.4]
    assert mate_c(d) == pytest.approx(0.42, abs=1e-15)
    c = make_draw(4, pi_c=0.3)
    c.omega_1c[:] = [0.1, 0.5, 0.7, 0.2]
    assert mate_c(c) == pytest.approx(np.mean(c.omega_1c - c.omega_0c), abs=1e-15)
    assert mate_c(make_draw(3, 0.4, 0.4)) == 0.0


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_mcate_identities(n, seed):
    r = np.random.default_rng(seed)
    d = make_draw(n)
    d.pi_c[:] = r.uniform(0.01, 1, n)
    d.omega_1c[:] = r.random(n)
    d.omega_0c[:] = r.random(n)
    assert abs(mcate_c(d, np.ones(n, dtype=bool)) - mate_c(d)) <= 1e-15
    k = int(r.integers(0, n))
    single = np.zeros(n, dtype=bool)
    single[k] = True
    assert mcate_c(d, single) == pytest.approx(d.omega_1c[k] - d.omega_0c[k], abs=1e-15)
    m = r.random(n) < 0.5
    m[0], m[-1] = True, False
    s1, s2 = d.pi_c[m].sum(), d.pi_c[~m].sum()
    combo = (s1 * mcate_c(d, m) + s2 * mcate_c(d, ~m)) / (s1 + s2)
    assert abs(combo - mate_c(d)) <= 4e-16 * max(1.0, abs(mate_c(d))) * n


def test_segment_definitions():
    x = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], dtype=float)
    d = Dataset(x, [0, 1, 0, 1], [0, 1, 0, 1], [0, 0, 1, 1], (ColumnSpec("a", "covariate", "binary"),
                                                                ColumnSpec("b", "covariate", "binary")))
    seg = SegmentDefinition.from_dict({"name": "both", "conditions": {"a": [1], "b": [1]}})
    assert seg.mask(d).tolist() == [False, True, False, False]
    alt = SegmentDefinition.from_dict({"name": "a1", "column": "a", "values": [1]})
    assert alt.mask(d).tolist() == [False, True, True, False]
    assert SegmentDefinition.from_dict(seg.to_dict()) == seg
    empty = SegmentDefinition("none", (("a", (7.0,)),))
    with pytest.raises(ValueError, match="none"):
        DrawEstimator(d, segments=[empty])
    with pytest.raises(ValueError, match="no units"):
        mcate_c(make_draw(4), empty, d)


def test_summarize_examples(rng):
    s = summarize(np.full(10, 0.2))
    assert s.mean == pytest.approx(0.2) and s.sd == pytest.approx(0.0, abs=1e-15)
    assert s.ci90[0] == pytest.approx(s.ci90[1])
    assert summarize([0, 1] * 50).mean == 0.5
    norm = summarize(rng.normal(0.3, 0.1, 10_000))
    assert abs(norm.ci90[0] - 0.135) < 0.01 and abs(norm.ci90[1] - 0.465) < 0.01
    assert abs(norm.ci60[0] - (0.3 - 0.0842)) < 0.01
    skipped = summarize([0.1, np.nan, 0.3])
    assert skipped.skipped == 1 and skipped.draws == 2
    with pytest.raises(ValueError):
        summarize([np.nan, 1.0])


def test_shift_examples():
    assert shifted_omega_0c(np.array([0.5]), np.array([1]), 1.0)[0] == pytest.approx(0.841344746, abs=1e-9)
    base = np.array([0.3, 0.6])
    assert shifted_omega_0c(base, np.array([1, 0]), 0.0) is base
    # untreated units are not shifted
    assert shifted_omega_0c(base, np.array([0, 0]), 2.0) == pytest.approx(base, abs=1e-15)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(-1e6, 1e6))
def test_shift_stays_inside_unit_interval(p, kappa):
    v = shifted_omega_0c(np.array([p]), np.array([1]), kappa)[0]
    assert 0.0 < v < 1.0


def test_estimator_keys_and_stream_reuse(rng):
    n = 200
    z = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    d = make_data(z, y)
    seg = SegmentDefinition.from_dict({"name": "low", "column": "x", "values": list(range(50))})
    est = DrawEstimator(d, segments=[seg], kappas=[0.0, 0.5])
    draw = make_draw(n, 0.7, 0.4)
    out = est(draw)
    assert set(out) == {"satt_c", "mate_c", "mcate_c[low]", kappa_key(0.5)}
    # the imputation stream belongs to the draw, so a repeat is identical
    assert est(draw) == out
    assert DrawEstimator(d)(draw)["satt_c"] == out["satt_c"]
