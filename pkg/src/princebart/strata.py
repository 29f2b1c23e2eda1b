"""Data-augmentation engine for principal strata.

Each iteration fits one posterior draw of the six model surfaces treating the
current stratum imputation as data, computes the posterior probability of
being a complier for units whose stratum is unknown, and re-imputes it.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import diagnostics
from .bart import BartSampler, RankCoder
from .data import Dataset, RunConfig
from .linear import LinearSampler

log = logging.getLogger(__name__)

COMPLIER, NEVER, ALWAYS = 0, 1, 2
LABELS = np.array(["c", "n", "a"])
SURFACES = ("pi_c", "pi_a_given_notc", "omega_1c", "omega_0c", "omega_1a", "omega_0n")
CLAMP = 1e-6
OFFSET_CLAMP = 0.01
PROPENSITY_KEY = 2**31 - 1


class DataAdequacyError(RuntimeError):
    """A model surface had no units to fit at any iteration."""


def compatible(z: int, w: int) -> tuple[str, ...]:
    """Strata consistent with an observed (assignment, uptake) cell."""
    return {(1, 1): ("c", "a"), (0, 0): ("c", "n"), (0, 1): ("a",), (1, 0): ("n",)}[(int(z), int(w))]


def initialize_gtilde(z, w) -> np.ndarray:
    """Start every unknown stratum at complier; Z != W cells get their forced label."""
    z = np.asarray(z)
    w = np.asarray(w)
    g = np.full(z.shape, COMPLIER, dtype=np.int8)
    g[(z == 0) & (w == 1)] = ALWAYS
    g[(z == 1) & (w == 0)] = NEVER
    return g


def labels(g) -> np.ndarray:
    return LABELS[np.asarray(g)]


def is_compatible(g, z, w) -> np.ndarray:
    g, z, w = np.asarray(g), np.asarray(z), np.asarray(w)
    same = z == w
    return np.where(same, (g == COMPLIER) | (g == np.where(z == 1, ALWAYS, NEVER)),
                    g == np.where(z == 1, NEVER, ALWAYS))


def _mean_or(v, default):
    return float(np.mean(v)) if len(v) else default


def offsets(z, w, y) -> dict[str, float]:
    """Method-of-moments baseline rates for the six surfaces.

    Strata shares come from the one-sided cells (monotonicity); complier
    outcome rates are deconvolved from the mixed cells. Every rate is clamped
    to ``[0.01, 0.99]`` so its probit is finite.
    """
    z, w, y = (np.asarray(v) for v in (z, w, y))
    a = _mean_or(w[z == 0], 0.0)
    nv = _mean_or(1 - w[z == 1], 0.0)
    c = 1.0 - a - nv
    a_notc = a / (a + nv) if a + nv > 0 else 0.5
    ya = _mean_or(y[(z == 0) & (w == 1)], 0.5)
    yn = _mean_or(y[(z == 1) & (w == 0)], 0.5)
    y11 = _mean_or(y[(z == 1) & (w == 1)], 0.5)
    y00 = _mean_or(y[(z == 0) & (w == 0)], 0.5)
    f = c / (c + a) if c + a > 0 else 0.0
    gc = c / (c + nv) if c + nv > 0 else 0.0
    y1c = (y11 - ya * (1 - f)) / f if f > 0 else y11
    y0c = (y00 - yn * (1 - gc)) / gc if gc > 0 else y00
    raw = {"pi_c": c, "pi_a_given_notc": a_notc, "omega_1c": y1c, "omega_0c": y0c,
           "omega_1a": ya, "omega_0n": yn}
    return {k: float(np.clip(v, OFFSET_CLAMP, 1 - OFFSET_CLAMP)) for k, v in raw.items()}


def class_posterior(pi_c, pi_a, pi_n, omega_1c, omega_1a, omega_0c, omega_0n, y, z, w) -> np.ndarray:
    """Posterior probability of being a complier given the observed outcome.

    For Z = W = 1 the rival stratum is always-taker, for Z = W = 0 it is
    never-taker; units with Z != W get 0. Inputs are used as given, callers
    clamp them away from 0 and 1.
    """
    y, z, w = (np.asarray(v) for v in (y, z, w))
    on = z == 1
    yes = y == 1
    lc = np.where(on, np.where(yes, omega_1c, 1 - np.asarray(omega_1c)),
                  np.where(yes, omega_0c, 1 - np.asarray(omega_0c)))
    lr = np.where(on, np.where(yes, omega_1a, 1 - np.asarray(omega_1a)),
                  np.where(yes, omega_0n, 1 - np.asarray(omega_0n)))
    rival = np.where(on, pi_a, pi_n)
    num = np.asarray(pi_c) * lc
    gamma = num / (num + rival * lr)
    return np.where(z == w, gamma, 0.0)


def impute_gtilde(gamma, z, w, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(gamma) choice between complier and the cell's rival stratum.

    One uniform is drawn per unit whether or not its label is random, so the
    stream position does not depend on the data.
    """
    z, w = np.asarray(z), np.asarray(w)
    u = rng.random(z.shape[0])
    g = initialize_gtilde(z, w)
    same = z == w
    rival = np.where(z == 1, ALWAYS, NEVER).astype(np.int8)
    g[same] = np.where(u[same] < np.asarray(gamma)[same], COMPLIER, rival[same])
    return g


@dataclass
class PosteriorDraw:
    """One retained DA iteration: the six surfaces at every unit plus strata."""

    pi_c: np.ndarray
    pi_a_given_notc: np.ndarray
    omega_1c: np.ndarray
    omega_0c: np.ndarray
    omega_1a: np.ndarray
    omega_0n: np.ndarray
    gtilde: np.ndarray
    propensity_index: np.ndarray
    chain: int = 0
    iteration: int = 0
    seed: int = 0

    @property
    def pi_a(self) -> np.ndarray:
        return (1.0 - self.pi_c) * self.pi_a_given_notc

    @property
    def pi_n(self) -> np.ndarray:
        return (1.0 - self.pi_c) - self.pi_a

    @property
    def omega(self) -> dict[str, np.ndarray]:
        return {"1c": self.omega_1c, "0c": self.omega_0c, "1a": self.omega_1a, "0n": self.omega_0n}

    @property
    def key(self) -> tuple[int, int, int]:
        return (int(self.seed), int(self.chain), int(self.iteration))

    def imputation_rng(self) -> np.random.Generator:
        """Generator reserved for potential-outcome imputation of this draw."""
        return np.random.default_rng(np.random.SeedSequence(int(self.seed), spawn_key=(int(self.chain), int(self.iteration), 1)))


@dataclass
class ChainResult:
    chain: int
    estimands: dict[str, np.ndarray]
    draws: list[PosteriorDraw] = field(default_factory=list)
    moments: dict[str, np.ndarray] = field(default_factory=dict)
    retained: int = 0
    empty_fits: dict[str, int] = field(default_factory=dict)
    acceptance: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, dict] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)
    unit_draws: dict[str, np.ndarray] = field(default_factory=dict)
    propensity: np.ndarray | None = None


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain),)))


def _probit(p):
    return float(special.ndtri(p))


def _link_offset(p, link):
    return _probit(p) if link == "probit" else float(special.logit(p))


class SurfaceSet:
    """The six samplers of one chain, each drawing on its own fitting subset."""

    def __init__(self, x, d: Dataset, config: RunConfig, coder=None):
        self.config = config
        off = offsets(d.z, d.w, d.y)
        self.p0 = off
        self.samplers = {}
        for name in SURFACES:
            if config.backend == "bart":
                self.samplers[name] = BartSampler(x, m=config.trees_m, k=config.k, alpha=config.alpha,
                                                  beta=config.beta, offset=_probit(off[name]), coder=coder)
            else:
                self.samplers[name] = LinearSampler(x, prior_scale=config.prior_scale,
                                                    offset=_link_offset(off[name], config.link),
                                                    link=config.link)

    def acceptance(self) -> dict[str, float]:
        out = {}
        for name, s in self.samplers.items():
            mv = getattr(s, "moves", None)
            if mv is not None and mv[:, 0].sum() > 0:
                out[name] = float(mv[:, 1].sum() / mv[:, 0].sum())
        return out


def fitting_subsets(d: Dataset, gtilde) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Response and active-row mask for each surface under the current strata.

    Always-taker and never-taker outcome surfaces pool both assignment arms,
    since exclusion makes their outcome independent of assignment.
    """
    g = np.asarray(gtilde)
    z = d.z
    isc = g == COMPLIER
    isa = g == ALWAYS
    isn = g == NEVER
    y = d.y
    return {
        "pi_c": (isc.astype(np.int8), np.ones(d.n, dtype=bool)),
        "pi_a_given_notc": (isa.astype(np.int8), ~isc),
        "omega_1c": (y, (z == 1) & isc),
        "omega_0c": (y, (z == 0) & isc),
        "omega_1a": (y, isa),
        "omega_0n": (y, isn),
    }


def fit_surfaces(surfaces: SurfaceSet, d: Dataset, gtilde, rng: np.random.Generator):
    """One posterior draw of every surface given ``gtilde``.

    Returns ``(probabilities, empty)`` where probabilities are clamped to
    ``[1e-6, 1 - 1e-6]`` and ``empty`` lists surfaces whose subset had no
    units; those fall back to their offset-only prediction.
    """
    probs = {}
    empty = []
    for name, (resp, mask) in fitting_subsets(d, gtilde).items():
        s = surfaces.samplers[name]
        if not mask.any():
            empty.append(name)
            log.warning("surface %s has no units this iteration; using its offset", name)
            p = np.full(d.n, surfaces.p0[name])
        else:
            s.set_data(resp, mask)
            s.step(rng)
            p = s.probability
        probs[name] = np.clip(p, CLAMP, 1 - CLAMP)
    return probs, empty


def fit_propensity_index(d: Dataset, config: RunConfig) -> np.ndarray:
    """Posterior-mean latent index of ``P(Z = 1 | X)`` for the run.

    Uses probit BART for the tree backend and the linear probit otherwise.
    """
    zbar = float(d.z.mean())
    if zbar in (0.0, 1.0):
        raise DataAdequacyError("assignment has no variation; propensity is not estimable")
    rng = np.random.default_rng(np.random.SeedSequence(int(config.seed), spawn_key=(PROPENSITY_KEY,)))
    if config.backend == "bart":
        s = BartSampler(d.x, m=config.trees_m, k=config.k, alpha=config.alpha, beta=config.beta,
                        offset=_probit(zbar))
    else:
        s = LinearSampler(d.x, prior_scale=config.prior_scale, offset=_probit(zbar))
    s.set_data(d.z)
    acc = np.zeros(d.n)
    for it in range(config.propensity_burn_in + config.propensity_draws):
        s.step(rng)
        if it >= config.propensity_burn_in:
            acc += s.index
    return acc / config.propensity_draws


def surface_covariates(d: Dataset, propensity, config: RunConfig) -> np.ndarray:
    """Covariates for the six surfaces; the tree backend also sees the propensity index."""
    if config.backend == "bart":
        return np.column_stack([d.x, propensity])
    return np.asarray(d.x, dtype=float)


MOMENT_KEYS = SURFACES + ("cate_c", "is_complier")


UNIT_KEYS = ("pi_c", "cate_c")


def run_chain(d: Dataset, config: RunConfig, chain: int, propensity, estimator=None,
              keep_draws: bool = False, keep_units: bool = False) -> ChainResult:
    """Run one DA chain and collect its retained draws.

    ``keep_draws`` stores every :class:`PosteriorDraw`; ``keep_units`` stores
    only float32 copies of the complier share and complier CATE per draw.
    """
    rng = chain_rng(config.seed, chain)
    x = surface_covariates(d, propensity, config)
    coder = RankCoder(x) if config.backend == "bart" else None
    surfaces = SurfaceSet(x, d, config, coder)
    g = initialize_gtilde(d.z, d.w)
    empty_count = dict.fromkeys(SURFACES, 0)
    values: dict[str, list] = {}
    skipped: dict[str, int] = {}
    sums = {k: np.zeros(d.n) for k in MOMENT_KEYS}
    sqs = {k: np.zeros(d.n) for k in MOMENT_KEYS}
    draws = []
    units = {k: [] for k in UNIT_KEYS} if keep_units else {}
    for it in range(config.iterations):
        probs, empty = fit_surfaces(surfaces, d, g, rng)
        for name in empty:
            empty_count[name] += 1
        pi_c = probs["pi_c"]
        pi_a = (1.0 - pi_c) * probs["pi_a_given_notc"]
        pi_n = (1.0 - pi_c) - pi_a
        gamma = class_posterior(pi_c, pi_a, pi_n, probs["omega_1c"], probs["omega_1a"],
                                probs["omega_0c"], probs["omega_0n"], d.y, d.z, d.w)
        g = impute_gtilde(gamma, d.z, d.w, rng)
        if it < config.burn_in:
            continue
        draw = PosteriorDraw(gtilde=g, propensity_index=propensity, chain=chain, iteration=it,
                             seed=config.seed, **probs)
        if estimator is not None:
            for key, v in estimator(draw).items():
                values.setdefault(key, []).append(v)
                if not np.isfinite(v):
                    skipped[key] = skipped.get(key, 0) + 1
        cur = dict(probs, cate_c=probs["omega_1c"] - probs["omega_0c"], is_complier=(g == COMPLIER).astype(float))
        for k in MOMENT_KEYS:
            sums[k] += cur[k]
            sqs[k] += cur[k] ** 2
        if keep_draws:
            draws.append(draw)
        for k in units:
            units[k].append(cur[k].astype(np.float32))
    always_empty = [k for k, v in empty_count.items() if v == config.iterations]
    if always_empty:
        raise DataAdequacyError(f"no units available to fit {', '.join(always_empty)} at any iteration")
    return ChainResult(chain=chain, estimands={k: np.asarray(v, dtype=float) for k, v in values.items()},
                       draws=draws, moments={"sum": sums, "sumsq": sqs}, retained=config.retained,
                       empty_fits=empty_count, acceptance=surfaces.acceptance(), skipped=skipped,
                       unit_draws={k: np.vstack(v) for k, v in units.items()})


def _chain_job(args):
    return run_chain(*args)


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("PRINCE_BART_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_chains(d: Dataset, config: RunConfig, estimator=None, keep_draws: bool = False,
               propensity=None, threads: int | None = None, keep_units: bool = False) -> list[ChainResult]:
    """Fit the propensity index once, then run ``config.chains`` DA chains.

    ``estimator`` maps a :class:`PosteriorDraw` to a dict of scalars; when
    omitted the default complier estimands are recorded. Split R-hat and
    bulk ESS of every scalar are attached to each result's ``diagnostics``.
    Chains run in worker processes when ``threads > 1``; results do not
    depend on the worker count.
    """
    if estimator is None:
        from .estimands import DrawEstimator
        estimator = DrawEstimator(d, dependence=config.dependence)
    if propensity is None:
        propensity = fit_propensity_index(d, config)
    jobs = [(d, config, c, propensity, estimator, keep_draws, keep_units) for c in range(config.chains)]
    nt = min(resolve_threads(threads if threads is not None else config.threads), config.chains)
    if nt > 1:
        with ProcessPoolExecutor(max_workers=nt) as ex:
            results = list(ex.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    diag = chain_diagnostics(results)
    for r in results:
        r.diagnostics = diag
        r.propensity = propensity
    return results


def stack_estimand(results: list[ChainResult], name: str) -> np.ndarray:
    """Per-chain draws of one scalar estimand as a ``(chains, draws)`` array."""
    return np.vstack([r.estimands[name] for r in results])


def chain_diagnostics(results: list[ChainResult]) -> dict[str, dict]:
    out = {}
    if not results:
        return out
    for name in results[0].estimands:
        x = stack_estimand(results, name)
        ok = np.isfinite(x).all()
        out[name] = {"rhat": diagnostics.rhat(x) if ok else float("nan"),
                     "ess": diagnostics.ess(x) if ok else float("nan")}
    return out


def pooled_moments(results: list[ChainResult]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Posterior mean and sd per unit of each surface across all retained draws."""
    total = sum(r.retained for r in results)
    out = {}
    for k in MOMENT_KEYS:
        s = sum(r.moments["sum"][k] for r in results)
        q = sum(r.moments["sumsq"][k] for r in results)
        mean = s / total
        var = np.maximum(q / total - mean ** 2, 0.0)
        out[k] = (mean, np.sqrt(var))
    return out
