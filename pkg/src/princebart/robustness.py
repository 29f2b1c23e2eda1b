"""Overlap checks, confounding sensitivity and the cross-site reference scale.

Propensity thresholds apply to the probit index, so a bound of 1.282 flags
exactly the units whose propensity lies outside (0.10, 0.90).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .bart import BartSampler
from .data import Dataset, RunConfig
from .estimands import DrawEstimator, EffectSummary, kappa_key, satt_c, summarize
from .strata import ChainResult, pooled_moments, run_chains, stack_estimand

log = logging.getLogger(__name__)

CRUMP_BOUND = 1.2815515655446004  # probit of 0.9
DEFAULT_ZETA = tuple(0.5 * k for k in range(11))


def flag_extreme_propensity(propensity_index, bound: float = CRUMP_BOUND) -> np.ndarray:
    """Flag units whose propensity index exceeds ``bound`` in absolute value."""
    e = np.asarray(propensity_index, dtype=float)
    if not np.all(np.isfinite(e)):
        raise ValueError("propensity index must be finite")
    return np.abs(e) > bound


def flag_causal_support(s0, s1, z) -> np.ndarray:
    """Flag assigned units whose untreated-surface sd exceeds every assigned unit's treated sd."""
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    z = np.asarray(z)
    treated = z == 1
    if not treated.any():
        raise ValueError("no assigned units")
    return treated & (s0 > s1[treated].max())


@dataclass
class OverlapReport:
    rule: str
    flags: np.ndarray
    excluded_fraction: float
    summary: EffectSummary | None = None

    def to_dict(self) -> dict:
        return {"rule": self.rule, "excluded": int(self.flags.sum()), "excluded_fraction": self.excluded_fraction,
                "satt_c": None if self.summary is None else self.summary.to_dict()}


def overlap_refit(d: Dataset, config: RunConfig, flags, rule: str, dependence: str | None = None) -> OverlapReport:
    """Refit the whole model on the unflagged units and summarize SATT there."""
    flags = np.asarray(flags, dtype=bool)
    keep = ~flags
    rep = OverlapReport(rule, flags, float(flags.mean()))
    if not keep.any():
        log.warning("%s flags every unit; nothing left to refit", rule)
        return rep
    sub = d.subset(np.nonzero(keep)[0])
    dep = dependence or config.dependence
    res = run_chains(sub, config, estimator=DrawEstimator(sub, dependence=dep))
    rep.summary = summarize(stack_estimand(res, "satt_c").ravel(), "satt_c")
    return rep


def overlap_reports(d: Dataset, config: RunConfig, results: list[ChainResult], bound: float = CRUMP_BOUND,
                    refit: bool = True) -> list[OverlapReport]:
    """Both exclusion rules: extreme propensity and lack of common causal support."""
    prop = results[0].propensity
    if prop is None:
        raise ValueError("overlap reports need the run's propensity index")
    mom = pooled_moments(results)
    rules = [("abs(propensity index) > %.3f" % bound, flag_extreme_propensity(prop, bound)),
             ("common causal support", flag_causal_support(mom["omega_0c"][1], mom["omega_1c"][1], d.z))]
    out = []
    for name, fl in rules:
        out.append(overlap_refit(d, config, fl, name) if refit else OverlapReport(name, fl, float(fl.mean())))
    return out


@dataclass
class SensitivityResult:
    zeta: list[float]
    nu: float
    summaries: list[EffectSummary]
    draws: list[np.ndarray] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [{"zeta": z, "kappa": z * self.nu, "mean": s.mean, "sd": s.sd, "ci60_lo": s.ci60[0],
                 "ci60_hi": s.ci60[1], "ci90_lo": s.ci90[0], "ci90_hi": s.ci90[1]}
                for z, s in zip(self.zeta, self.summaries)]


def _check_grid(zeta_grid, nu):
    grid = [float(z) for z in zeta_grid]
    if not grid:
        raise ValueError("empty zeta grid")
    if not np.isfinite(nu) or nu < 0:
        raise ValueError("nu must be a nonnegative number")
    return grid


def sensitivity_curve(chains: list[ChainResult], zeta_grid, nu: float, data: Dataset,
                      dependence: str = "independent") -> SensitivityResult:
    """SATT under the shifted untreated surface for each ``zeta``, from stored draws.

    Every draw reuses its own imputation stream, so ``zeta = 0`` reproduces
    the baseline draws bit for bit.
    """
    grid = _check_grid(zeta_grid, nu)
    if not any(c.draws for c in chains):
        raise ValueError("chains were run without keeping draws; use sensitivity_run instead")
    est = DrawEstimator(data, dependence=dependence)
    per_zeta = []
    for z in grid:
        k = nu * z
        vals = np.array([satt_c(est.impute(dr, k), data.z) for c in chains for dr in c.draws])
        per_zeta.append(vals)
    return SensitivityResult(grid, float(nu), [summarize(v, f"satt_c[zeta={z:g}]") for z, v in zip(grid, per_zeta)],
                             per_zeta)


def sensitivity_run(d: Dataset, config: RunConfig, zeta_grid, nu: float, segments=(),
                    propensity=None) -> tuple[SensitivityResult, list[ChainResult]]:
    """Run the chains once, recording SATT for every shift alongside the baseline."""
    grid = _check_grid(zeta_grid, nu)
    kappas = [nu * z for z in grid]
    est = DrawEstimator(d, segments=segments, dependence=config.dependence, kappas=kappas)
    res = run_chains(d, config, estimator=est, propensity=propensity)
    per = []
    for k in kappas:
        per.append(stack_estimand(res, "satt_c" if k == 0 else kappa_key(k)).ravel())
    summ = [summarize(v, f"satt_c[zeta={z:g}]") for z, v in zip(grid, per)]
    return SensitivityResult(grid, float(nu), summ, per), res


def estimate_nu(d: Dataset, group, config: RunConfig | None = None, burn_in: int = 100, draws: int = 100,
                gibbs: int = 1000, seed: int | None = None) -> float:
    """Cross-group residual sd on the probit scale.

    Step 1 fits probit BART for ``P(Y = 1 | X, W)``; step 2 fits a probit of Y
    on group indicators with the step-1 index as a fixed offset and Normal(0, 1)
    intercept priors. Returns the population sd of the posterior-mean
    intercepts.
    """
    config = RunConfig() if config is None else config
    g = np.asarray(group)
    if g.shape[0] != d.n:
        raise ValueError("group labels do not match the number of units")
    levels, codes = np.unique(g, return_inverse=True)
    if levels.size < 2:
        raise ValueError("no across-group variation estimable: a single group")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2**31 - 2,)))
    ybar = float(np.clip(d.y.mean(), 0.01, 0.99))
    s = BartSampler(np.column_stack([d.x, d.w]), m=config.trees_m, k=config.k, alpha=config.alpha,
                    beta=config.beta, offset=float(special.ndtri(ybar)))
    s.set_data(d.y)
    prob = np.zeros(d.n)
    for it in range(burn_in + draws):
        s.step(rng)
        if it >= burn_in:
            prob += s.probability
    b = special.ndtri(np.clip(prob / draws, 1e-6, 1 - 1e-6))
    return float(np.std(group_intercepts(d.y, codes, b, rng, gibbs), ddof=0))


def group_intercepts(y, codes, offset, rng, iterations: int = 1000, burn_in: int | None = None) -> np.ndarray:
    """Posterior-mean group intercepts of a probit with a fixed offset and N(0, 1) priors."""
    from .bart import kernels as K

    y = np.asarray(y, dtype=np.int8)
    codes = np.asarray(codes)
    ng = int(codes.max()) + 1
    counts = np.bincount(codes, minlength=ng).astype(float)
    burn_in = iterations // 2 if burn_in is None else burn_in
    a = np.zeros(ng)
    acc = np.zeros(ng)
    latent = np.zeros(y.size)
    act = np.arange(y.size, dtype=np.int64)
    offset = np.asarray(offset, dtype=float)
    for it in range(iterations):
        K.draw_latents(offset + a[codes], 0.0, y, act, latent, rng)
        # conjugate update per group: precision n_g + 1
        sums = np.bincount(codes, weights=latent - offset, minlength=ng)
        prec = counts + 1.0
        a = sums / prec + rng.standard_normal(ng) / np.sqrt(prec)
        if it >= burn_in:
            acc += a
    return acc / (iterations - burn_in)
