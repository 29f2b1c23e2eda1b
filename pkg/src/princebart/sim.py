"""Simulation generators with known complier effects and replication metrics.

``sim1`` is a placebo: assignment and uptake are redrawn independently of a
fixed base table, so uptake has no effect on the outcome. ``sim2`` has an
interaction of two binary covariates that both lowers the assignment rate
and carries the only nonzero complier effect.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import ColumnSpec, Dataset, RunConfig

log = logging.getLogger(__name__)

SIM1_N = 6808
SIM1_BASE_SEED = 20240917
SIM2_N = 10_000
DESK = dict(chains=4, iterations=150, burn_in=50)


@dataclass
class SimScenario:
    name: str
    params: dict
    truths: dict
    reps: int = 50
    base_seed: int = 1


@dataclass
class SimMetrics:
    estimand: str
    bias: float
    rmse: float
    coverage: float
    reps: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"estimand": self.estimand, "bias": self.bias, "rmse": self.rmse,
             "coverage_90": self.coverage, "reps": self.reps}
        d.update(self.extra)
        return d


def synthetic_base(n: int = SIM1_N, seed: int = SIM1_BASE_SEED) -> Dataset:
    """Stand-in base table: 10 binary/ordinal covariates and a nonlinear probit outcome.

    Assignment and uptake are placeholders (all zero); :func:`gen_sim1`
    replaces them.
    """
    rng = np.random.default_rng(seed)
    cols = {
        "urban": rng.random(n) < 0.5,
        "married": rng.random(n) < 0.7,
        "wealth": rng.integers(1, 6, n),
        "education": rng.integers(0, 4, n),
        "age": rng.integers(15, 50, n),
        "worked_before": rng.random(n) < 0.45,
        "parity": rng.poisson(2.2, n).clip(0, 8),
        "muslim": rng.random(n) < 0.35,
        "media": rng.integers(0, 4, n),
        "partner_edu": rng.integers(0, 4, n),
    }
    x = np.column_stack([np.asarray(v, dtype=float) for v in cols.values()])
    u, m, wl, ed, age, wb, par, mu, me, pe = x.T
    f = (-0.6 + 1.1 * wb + 0.25 * (wl - 3) * u + 0.5 * np.sin((age - 15) / 7.0)
         - 0.3 * (par > 3) + 0.2 * ed * (1 - m) - 0.35 * mu * (me < 2) + 0.1 * pe)
    y = (rng.random(n) < special.ndtr(f)).astype(np.int8)
    kinds = ["binary", "binary", "ordinal", "ordinal", "ordinal", "binary", "ordinal", "binary", "ordinal", "ordinal"]
    specs = tuple(ColumnSpec(k, "covariate", kd) for k, kd in zip(cols, kinds))
    zeros = np.zeros(n, dtype=np.int8)
    return Dataset(x, zeros, zeros, y, specs, ("z", "w", "y"))


def gen_sim1(base: Dataset | None = None, seed: int = 0) -> Dataset:
    """Placebo replicate: ``Z ~ Bern(0.56)``, ``W ~ Bern(0.18 + 0.05 Z)``, X and Y kept."""
    base = synthetic_base() if base is None else base
    rng = np.random.default_rng(seed)
    z = (rng.random(base.n) < 0.56).astype(np.int8)
    w = (rng.random(base.n) < 0.18 + 0.05 * z).astype(np.int8)
    return base.with_treatment(z=z, w=w)


def sim1_truths() -> dict:
    return {"satt_c": 0.0, "mate_c": 0.0}


SIM2_CELLS = ((1, 0), (1, 1), (0, 1), (0, 0))


def sim2_covariates(n: int = SIM2_N) -> np.ndarray:
    i = np.arange(1, n + 1)
    x1 = (i <= n // 2).astype(float)
    x2 = ((i > n // 4) & (i <= 3 * n // 4)).astype(float)
    return np.column_stack([x1, x2])


def sim2_truths(n: int = SIM2_N) -> dict:
    """Complier effects implied by the generator, by enumeration over the (X1, X2) cells."""
    x = sim2_covariates(n)
    num = den = mnum = mden = 0.0
    for x1, x2 in SIM2_CELLS:
        size = float(np.sum((x[:, 0] == x1) & (x[:, 1] == x2)))
        pz = 0.75 - 0.5 * x1 * x2
        cate = 0.7 - (0.7 - 0.3 * x1 * x2)
        share = 1.0 / 3.0
        num += size * share * pz * cate
        den += size * share * pz
        mnum += size * share * cate
        mden += size * share
    return {"satt_c": num / den, "mate_c": mnum / mden, "segments": {"no_effect": 0.0, "large_effect": 0.3}}


SIM2_SEGMENTS = (
    {"name": "no_effect", "conditions": {"x1x2": [0]}},
    {"name": "large_effect", "conditions": {"x1x2": [1]}},
)


def gen_sim2(seed: int = 0, n: int = SIM2_N) -> tuple[Dataset, dict]:
    """Interaction scenario. Returns the dataset and its truths.

    Truths hold the generator values plus ``realized_satt_c``, the SATT over
    the simulated assigned compliers, and ``strata`` with the true labels
    (0 complier, 1 never-taker, 2 always-taker).
    """
    rng = np.random.default_rng(seed)
    x = sim2_covariates(n)
    inter = x[:, 0] * x[:, 1]
    g = rng.integers(0, 3, n)  # 0 complier, 1 never, 2 always
    z = (rng.random(n) < 0.75 - 0.5 * inter).astype(np.int8)
    u1 = rng.random(n)
    u0 = rng.random(n)
    y1 = (u1 < 0.7).astype(np.int8)
    y0 = np.where(g == 0, u0 < 0.7 - 0.3 * inter, u0 < 0.7).astype(np.int8)
    # always-takers take up either way, never-takers never do
    w = np.where(g == 0, z, np.where(g == 2, 1, 0)).astype(np.int8)
    y = np.where(w == 1, y1, y0).astype(np.int8)
    truths = sim2_truths(n)
    tc = (z == 1) & (g == 0)
    truths["realized_satt_c"] = float((y1[tc].astype(int) - y0[tc]).mean()) if tc.any() else math.nan
    truths["strata"] = g
    specs = (ColumnSpec("x1", "covariate", "binary"), ColumnSpec("x2", "covariate", "binary"))
    d = Dataset(x, z, w, y, specs, ("z", "w", "y"))
    return d, truths


def evaluate(means, lows, highs, truth, name: str = "estimand") -> SimMetrics:
    """Bias, RMSE and interval coverage of replicate estimates against the truth."""
    means = np.asarray(means, dtype=float)
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    if means.size < 2:
        raise ValueError("need at least 2 replications")
    truth = np.broadcast_to(np.asarray(truth, dtype=float), means.shape)
    err = means - truth
    cover = (lows <= truth) & (truth <= highs)
    return SimMetrics(name, float(err.mean()), float(math.sqrt(np.mean(err ** 2))), float(cover.mean()),
                      int(means.size))


def desk_config(backend: str = "bart", **kw) -> RunConfig:
    base = dict(DESK, backend=backend, threads=1)
    base.update(kw)
    return RunConfig(**base)


def run_replication(scenario: str, s: int, config: RunConfig, base_seed: int = 1, base=None) -> dict:
    """Generate replicate ``s`` (seed ``base_seed + s``), fit it, and summarize."""
    from .estimands import DrawEstimator, summarize_results
    from .strata import run_chains

    seed = base_seed + s
    if scenario == "sim1":
        d = gen_sim1(base, seed)
        truths = sim1_truths()
        segments = ()
        seg_data = d
    elif scenario == "sim2":
        d, truths = gen_sim2(seed)
        segments = SIM2_SEGMENTS
        # the product column only defines segments, the model never sees it
        seg_data = d.with_covariate("x1x2", d.column("x1") * d.column("x2"), "binary")
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    cfg = config.replace(seed=seed)
    t0 = time.perf_counter()
    est = DrawEstimator(seg_data, segments=segments, dependence=cfg.dependence)
    results = run_chains(d, cfg, estimator=est)
    summ = summarize_results(results)
    out = {"seed": seed, "seconds": time.perf_counter() - t0,
           "summaries": {k: v.to_dict() for k, v in summ.items()},
           "truths": {k: v for k, v in truths.items() if k != "strata"}}
    return out


def metrics_table(scenario: str, reps: list[dict]) -> list[dict]:
    """Rows shaped like the published tables: overall and per-segment metrics."""
    rows = []

    def add(label, key, truth_of):
        m = [r["summaries"][key]["mean"] for r in reps]
        lo = [r["summaries"][key]["ci90"][0] for r in reps]
        hi = [r["summaries"][key]["ci90"][1] for r in reps]
        t = [truth_of(r) for r in reps]
        met = evaluate(m, lo, hi, t, key)
        d = met.to_dict()
        d["row"] = label
        rows.append(d)

    add("overall", "satt_c", lambda r: r["truths"]["satt_c"])
    add("overall (mixed)", "mate_c", lambda r: r["truths"]["mate_c"])
    if scenario == "sim2":
        add("overall (realized)", "satt_c", lambda r: r["truths"]["realized_satt_c"])
        add("segment with no effect", "mcate_c[no_effect]", lambda r: r["truths"]["segments"]["no_effect"])
        add("segment with large effect", "mcate_c[large_effect]", lambda r: r["truths"]["segments"]["large_effect"])
    return rows


def replicate(scenario: str, reps: int, config: RunConfig | None = None, base_seed: int = 1,
              threads: int = 1, progress=None) -> dict:
    """Run ``reps`` replications and return per-replication summaries plus metrics."""
    config = desk_config() if config is None else config
    base = synthetic_base() if scenario == "sim1" else None
    out = []
    jobs = [(scenario, s, config.replace(threads=1), base_seed, base) for s in range(reps)]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for r in ex.map(_rep_job, jobs):
                out.append(r)
                if progress:
                    progress(len(out), reps)
    else:
        for j in jobs:
            out.append(_rep_job(j))
            if progress:
                progress(len(out), reps)
    return {"scenario": scenario, "backend": config.backend, "reps": out, "metrics": metrics_table(scenario, out)}


def _rep_job(args):
    return run_replication(*args)
