"""Linear-index binary regression sampled by data augmentation.

This is the parametric comparator for the tree backend. Probit draws use the
Albert-Chib truncated-normal augmentation; the logit link uses Polya-Gamma
auxiliary variables drawn from a truncated infinite-convolution series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .bart import kernels as K

PG_TERMS = 200


@dataclass(frozen=True)
class LinearModelDraw:
    """Coefficients (intercept first) for one posterior draw."""

    coefficients: np.ndarray
    link: str = "probit"

    def index(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.coefficients[0] + x @ self.coefficients[1:]

    def predict(self, x) -> np.ndarray:
        eta = self.index(x)
        p = special.ndtr(eta) if self.link == "probit" else special.expit(eta)
        return np.clip(p, 1e-12, 1 - 1e-12)


def _design(x, center=None, scale=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if center is None:
        center = x.mean(axis=0) if x.shape[0] else np.zeros(x.shape[1])
        scale = x.std(axis=0) if x.shape[0] else np.ones(x.shape[1])
        scale = np.where(scale > 0, scale, 1.0)
    return np.column_stack([np.ones(x.shape[0]), (x - center) / scale]), center, scale


def draw_pg(c, rng: np.random.Generator, terms: int = PG_TERMS) -> np.ndarray:
    """Approximate PG(1, c) draws from the first ``terms`` series terms.

    The neglected tail is replaced by its expectation, so the mean is exact
    up to floating point.
    """
    c = np.abs(np.asarray(c, dtype=float))
    k = np.arange(1, terms + 1) - 0.5
    denom = k[None, :] ** 2 + (c[:, None] / (2 * math.pi)) ** 2
    g = rng.standard_exponential((c.size, terms))
    head = (g / denom).sum(axis=1) / (2 * math.pi ** 2)
    # E[PG(1, c)] = tanh(c/2) / (2c), the series head has mean sum 1/denom
    with np.errstate(invalid="ignore", divide="ignore"):
        full = np.where(c > 1e-8, np.tanh(c / 2) / (2 * c), 0.25)
    tail = full - (1.0 / denom).sum(axis=1) / (2 * math.pi ** 2)
    return head + np.maximum(tail, 0.0)


def _gauss_draw(prec, b, rng):
    # draw from N(prec^-1 b, prec^-1)
    ch = linalg.cholesky(prec, lower=True)
    mean = linalg.cho_solve((ch, True), b)
    e = linalg.solve_triangular(ch.T, rng.standard_normal(b.size), lower=False)
    return mean + e


def linear_draw(x, response, rng: np.random.Generator, prior_scale: float = 2.5, offset=0.0,
                link: str = "probit", iterations: int = 200, burn_in: int = 100) -> LinearModelDraw:
    """Run a short augmentation chain and return its last coefficient draw.

    Coefficients are on the standardized covariate scale and are mapped back
    to the raw scale in the returned draw.
    """
    s = LinearSampler(x, prior_scale=prior_scale, offset=offset, link=link)
    s.set_data(response)
    for _ in range(max(iterations, burn_in + 1)):
        s.step(rng)
    return s.draw()


class LinearSampler:
    """Gibbs state for ``P(y = 1 | x) = F(offset + b0 + x'b)``.

    Matches the :class:`~princebart.bart.BartSampler` contract: ``set_data``,
    ``step``, ``index`` and ``probability`` over all ``n`` training rows.
    Coefficients get independent Normal(0, prior_scale^2) priors on the
    standardized scale, which also keeps separated designs proper.
    """

    def __init__(self, x, prior_scale: float = 2.5, offset=0.0, link: str = "probit"):
        if link not in ("probit", "logit"):
            raise ValueError(f"unknown link {link!r}")
        if prior_scale <= 0:
            raise ValueError("prior_scale must be positive")
        self.design, self.center, self.scale = _design(x)
        self.n, self.q = self.design.shape
        self.link = link
        self.prior_prec = np.eye(self.q) / prior_scale ** 2
        self.offset = float(offset)
        self.beta = np.zeros(self.q)
        self.total = np.zeros(self.n)
        self.latent = np.zeros(self.n)
        self.y = np.zeros(self.n, dtype=np.int8)
        self.act = np.arange(self.n, dtype=np.int64)

    def set_data(self, y, active=None):
        self.y = np.ascontiguousarray(np.asarray(y, dtype=np.int8))
        if active is None:
            self.act = np.arange(self.n, dtype=np.int64)
        else:
            active = np.asarray(active)
            self.act = (np.nonzero(active)[0] if active.dtype == bool else active).astype(np.int64)

    def step(self, rng):
        xa = self.design[self.act]
        if self.link == "probit":
            K.draw_latents(self.total, self.offset, self.y, self.act, self.latent, rng)
            prec = self.prior_prec + xa.T @ xa
            b = xa.T @ (self.latent[self.act] - self.offset)
        else:
            eta = self.offset + self.total[self.act]
            om = draw_pg(eta, rng)
            prec = self.prior_prec + (xa * om[:, None]).T @ xa
            b = xa.T @ (self.y[self.act] - 0.5 - om * self.offset)
        self.beta = _gauss_draw(prec, b, rng)
        self.total = self.design @ self.beta

    @property
    def index(self) -> np.ndarray:
        return self.offset + self.total

    @property
    def probability(self) -> np.ndarray:
        if self.link == "probit":
            return special.ndtr(self.index)
        return special.expit(self.index)

    def draw(self) -> LinearModelDraw:
        """Current coefficients mapped back to the raw covariate scale."""
        slopes = self.beta[1:] / self.scale
        b0 = self.offset + self.beta[0] - float(slopes @ self.center)
        return LinearModelDraw(np.concatenate([[b0], slopes]), self.link)
