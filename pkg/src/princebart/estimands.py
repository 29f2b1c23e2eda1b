"""Potential-outcome imputation and complier effect estimands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .strata import CLAMP, COMPLIER, PosteriorDraw, stack_estimand


@dataclass
class ImputedPotentials:
    """Potential outcomes for one draw; only complier entries are meaningful."""

    y1: np.ndarray
    y0: np.ndarray
    complier: np.ndarray

    @property
    def ite(self) -> np.ndarray:
        return self.y1.astype(np.int64) - self.y0.astype(np.int64)


@dataclass(frozen=True)
class SegmentDefinition:
    """Units whose covariates fall in the listed value sets (all conditions must hold)."""

    name: str
    conditions: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentDefinition":
        if "conditions" in d:
            cond = d["conditions"]
        else:
            cond = {d["column"]: d["values"]}
        return cls(str(d.get("name", "segment")),
                   tuple((str(k), tuple(float(v) for v in vs)) for k, vs in sorted(cond.items())))

    def to_dict(self) -> dict:
        return {"name": self.name, "conditions": {k: list(v) for k, v in self.conditions}}

    def describe(self) -> str:
        return " & ".join(f"{k} in {{{', '.join(f'{v:g}' for v in vs)}}}" for k, vs in self.conditions) or "all units"

    def mask(self, d: Dataset) -> np.ndarray:
        m = np.ones(d.n, dtype=bool)
        for col, vals in self.conditions:
            m &= np.isin(d.column(col), vals)
        return m


def shifted_omega_0c(omega_0c, z, kappa: float) -> np.ndarray:
    """``Phi(Phi^-1(omega_0c) + z * kappa)``; with ``kappa == 0`` the input is returned as is.

    Shifted values are clamped like the fitted surfaces, so they stay
    strictly inside (0, 1) for any finite ``kappa``.
    """
    omega_0c = np.asarray(omega_0c, dtype=float)
    if kappa == 0:
        return omega_0c
    return np.clip(special.ndtr(special.ndtri(omega_0c) + np.asarray(z) * kappa), CLAMP, 1 - CLAMP)


def dependence_kappa(p_obs, p_mis):
    """Largest multiplier keeping both conditional probabilities inside [0, 1]."""
    p_obs = np.asarray(p_obs, dtype=float)
    p_mis = np.asarray(p_mis, dtype=float)
    return np.minimum((1 - p_mis) / (1 - p_obs), p_mis / p_obs)


def conditional_missing_prob(p_obs, p_mis, y):
    """``P(Y_mis = 1 | Y = y)`` under maximal positive residual dependence."""
    p = np.asarray(p_mis, dtype=float) + (np.asarray(y) - np.asarray(p_obs)) * dependence_kappa(p_obs, p_mis)
    return np.clip(p, 0.0, 1.0)


def _arm_probs(draw: PosteriorDraw, d: Dataset, kappa: float):
    z = d.z
    w0 = shifted_omega_0c(draw.omega_0c, z, kappa)
    p_mis = np.where(z == 1, w0, draw.omega_1c)
    p_obs = np.where(z == 1, draw.omega_1c, draw.omega_0c)
    return p_obs, p_mis


def _assemble(draw, d, ymis):
    z = d.z
    y = d.y.astype(np.int8)
    y1 = np.where(z == 1, y, ymis).astype(np.int8)
    y0 = np.where(z == 1, ymis, y).astype(np.int8)
    return ImputedPotentials(y1, y0, np.asarray(draw.gtilde) == COMPLIER)


def impute_independent(draw: PosteriorDraw, data: Dataset, rng=None, kappa: float = 0.0) -> ImputedPotentials:
    """Draw the missing arm from its complier outcome surface; the observed arm is data.

    ``kappa`` shifts the untreated surface of assigned units on the probit
    scale. Without ``rng`` the draw's own imputation stream is used.
    """
    rng = draw.imputation_rng() if rng is None else rng
    u = rng.random(data.n)
    _, p_mis = _arm_probs(draw, data, kappa)
    return _assemble(draw, data, (u < p_mis).astype(np.int8))


def impute_dependent(draw: PosteriorDraw, data: Dataset, rng=None, kappa: float = 0.0) -> ImputedPotentials:
    """Like :func:`impute_independent` but with maximal positive residual dependence."""
    rng = draw.imputation_rng() if rng is None else rng
    u = rng.random(data.n)
    p_obs, p_mis = _arm_probs(draw, data, kappa)
    p = conditional_missing_prob(p_obs, p_mis, data.y)
    return _assemble(draw, data, (u < p).astype(np.int8))


def satt_c(potentials: ImputedPotentials, z, gtilde=None) -> float:
    """Mean ITE over assigned compliers; nan when the draw has none."""
    comp = potentials.complier if gtilde is None else np.asarray(gtilde) == COMPLIER
    sel = (np.asarray(z) == 1) & comp
    if not sel.any():
        return float("nan")
    return float(potentials.ite[sel].mean())


def _weighted_cate(draw, mask=None):
    cate = np.asarray(draw.omega_1c) - np.asarray(draw.omega_0c)
    pc = np.asarray(draw.pi_c)
    if mask is not None:
        cate, pc = cate[mask], pc[mask]
    return float(np.dot(cate, pc) / pc.sum())


def mate_c(draw: PosteriorDraw) -> float:
    """Complier-share weighted mean of ``omega_1c - omega_0c`` over the sample."""
    return _weighted_cate(draw)


def mcate_c(draw: PosteriorDraw, segment, data: Dataset | None = None) -> float:
    """:func:`mate_c` restricted to a segment (a definition or a boolean mask)."""
    if isinstance(segment, SegmentDefinition):
        if data is None:
            raise ValueError("a SegmentDefinition needs the dataset")
        mask = segment.mask(data)
        label = segment.describe()
    else:
        mask = np.asarray(segment, dtype=bool)
        label = "mask"
    if not mask.any():
        raise ValueError(f"segment {label!r} contains no units")
    return _weighted_cate(draw, mask)


@dataclass
class EffectSummary:
    name: str
    mean: float
    sd: float
    ci60: tuple[float, float]
    ci90: tuple[float, float]
    draws: int = 0
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"estimand": self.name, "mean": self.mean, "sd": self.sd,
               "ci60": list(self.ci60), "ci90": list(self.ci90), "draws": self.draws, "skipped": self.skipped}
        out.update(self.extra)
        return out

    def covers(self, truth: float, level: int = 90) -> bool:
        lo, hi = self.ci90 if level == 90 else self.ci60
        return lo <= truth <= hi


def summarize(values, name: str = "estimand") -> EffectSummary:
    """Posterior mean, sd and central 60% / 90% intervals; nan draws are skipped."""
    v = np.asarray(values, dtype=float).ravel()
    ok = v[np.isfinite(v)]
    if ok.size < 2:
        raise ValueError(f"{name}: need at least 2 finite draws, got {ok.size}")
    q = np.quantile(ok, [0.05, 0.2, 0.8, 0.95])
    return EffectSummary(name, float(ok.mean()), float(ok.std(ddof=1)), (float(q[1]), float(q[2])),
                         (float(q[0]), float(q[3])), draws=int(ok.size), skipped=int(v.size - ok.size))


def kappa_key(kappa: float) -> str:
    return f"satt_c[kappa={kappa!r}]"


class DrawEstimator:
    """Per-draw scalar estimands recorded while the chains run.

    Produces ``satt_c``, ``mate_c``, one ``mcate_c[<segment>]`` per segment
    and, for every nonzero sensitivity shift in ``kappas``, an extra SATT
    entry keyed by :func:`kappa_key`.
    """

    def __init__(self, d: Dataset, segments=(), dependence: str = "independent", kappas=()):
        if dependence not in ("independent", "dependent"):
            raise ValueError(f"unknown dependence {dependence!r}")
        self.d = d
        self.segments = [s if isinstance(s, SegmentDefinition) else SegmentDefinition.from_dict(s) for s in segments]
        self.masks = []
        for s in self.segments:
            m = s.mask(d)
            if not m.any():
                raise ValueError(f"segment {s.name!r} ({s.describe()}) contains no units")
            self.masks.append(m)
        self.dependence = dependence
        self.kappas = [float(k) for k in kappas]

    def impute(self, draw, kappa=0.0):
        f = impute_independent if self.dependence == "independent" else impute_dependent
        return f(draw, self.d, kappa=kappa)

    def __call__(self, draw: PosteriorDraw) -> dict[str, float]:
        out = {"satt_c": satt_c(self.impute(draw), self.d.z)}
        out["mate_c"] = mate_c(draw)
        for s, m in zip(self.segments, self.masks):
            out[f"mcate_c[{s.name}]"] = _weighted_cate(draw, m)
        for k in self.kappas:
            if k != 0:
                out[kappa_key(k)] = satt_c(self.impute(draw, k), self.d.z)
        return out


def summarize_results(results, names=None) -> dict[str, EffectSummary]:
    """Pool every chain's draws of each scalar and summarize them."""
    names = names if names is not None else list(results[0].estimands)
    out = {}
    for name in names:
        x = stack_estimand(results, name)
        s = summarize(x.ravel(), name)
        diag = results[0].diagnostics.get(name, {})
        s.extra = {"rhat": diag.get("rhat", math.nan), "ess": diag.get("ess", math.nan)}
        out[name] = s
    return out
