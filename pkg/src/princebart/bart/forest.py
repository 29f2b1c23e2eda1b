"""Probit BART: prior, backfitting sampler state, prediction, propensity fit."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import kernels as K

log = logging.getLogger(__name__)


def split_probability(depth: int, alpha: float, beta: float) -> float:
    """Prior probability that a node at ``depth`` is split: ``alpha (1 + depth)^-beta``."""
    if not 0 < alpha < 1 and alpha != 0:
        raise ValueError("alpha must lie in [0, 1)")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return alpha * (1.0 + depth) ** (-beta)


@dataclass(frozen=True)
class SplitRule:
    var: int
    cut: float


@dataclass
class Node:
    rule: SplitRule | None = None
    value: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


@dataclass
class Tree:
    """A binary regression tree; rows with ``x[var] <= cut`` go left."""

    root: Node = field(default_factory=Node)

    def leaves(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            nd = stack.pop()
            if nd.is_leaf:
                out.append(nd)
            else:
                stack += [nd.right, nd.left]
        return out

    @property
    def leaf_count(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        def d(nd):
            return 0 if nd.is_leaf else 1 + max(d(nd.left), d(nd.right))
        return d(self.root)

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            nd = self.root
            while not nd.is_leaf:
                nd = nd.left if row[nd.rule.var] <= nd.rule.cut else nd.right
            out[i] = nd.value
        return out

    @classmethod
    def from_heap(cls, var_j, cut_j, kind_j, mu_j, grids) -> "Tree":
        def build(k):
            if kind_j[k] == K.LEAF:
                return Node(value=float(mu_j[k]))
            v = int(var_j[k])
            return Node(rule=SplitRule(v, float(grids[v][cut_j[k]])), left=build(2 * k + 1), right=build(2 * k + 2))
        return cls(build(0))


def sample_prior_tree(rng: np.random.Generator, alpha: float, beta: float, available_cuts) -> Tree:
    """Draw a tree structure from the branching-process prior.

    ``available_cuts`` holds, per covariate, the sorted candidate values. A
    node splits with probability ``alpha (1 + d)^-beta``; the variable is
    uniform over covariates with a cut left in the node's region and the cut is
    uniform over those values. Nodes without any admissible cut (or at the
    depth cap) stay terminal. Leaf values are left at zero.
    """
    grids = [np.asarray(g, dtype=float) for g in available_cuts]
    # a grid of g values leaves g - 1 cuts, so append a sentinel
    ngrid = [len(g) + 1 for g in grids]

    def grow(depth, lo, hi):
        if depth >= K.MAX_DEPTH or rng.random() >= alpha * (1.0 + depth) ** (-beta):
            return Node()
        valid = [v for v in range(len(ngrid)) if hi[v] - lo[v] > 1]
        if not valid:
            return Node()
        v = valid[min(int(rng.random() * len(valid)), len(valid) - 1)]
        ncut = hi[v] - lo[v] - 1
        c = lo[v] + 1 + min(int(rng.random() * ncut), ncut - 1)
        left_hi = list(hi)
        left_hi[v] = c
        right_lo = list(lo)
        right_lo[v] = c
        return Node(rule=SplitRule(v, float(grids[v][c])),
                    left=grow(depth + 1, lo, left_hi), right=grow(depth + 1, right_lo, hi))

    return Tree(grow(0, [-1] * len(ngrid), [n - 1 for n in ngrid]))


def leaf_value_draw(residuals, sigma_mu: float, rng: np.random.Generator) -> float:
    """Conjugate draw of a leaf value given unit-variance residuals in the leaf."""
    r = np.asarray(residuals, dtype=float)
    s2 = sigma_mu * sigma_mu
    prec = r.size + 1.0 / s2
    return float(r.sum() / prec + math.sqrt(1.0 / prec) * rng.standard_normal())


def leaf_posterior(residuals, sigma_mu: float) -> tuple[float, float]:
    """Mean and variance of the conjugate leaf posterior."""
    r = np.asarray(residuals, dtype=float)
    s2 = sigma_mu * sigma_mu
    den = r.size * s2 + 1.0
    return float(s2 * r.sum() / den), float(s2 / den)


class RankCoder:
    """Maps covariate values to ranks within each column's sorted unique values."""

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        self.grids = [np.unique(x[:, v]) for v in range(x.shape[1])]
        self.ngrid = np.array([len(g) for g in self.grids], dtype=np.int64)

    @property
    def p(self) -> int:
        return len(self.grids)

    def encode(self, x) -> np.ndarray:
        """Rank codes as a (p, n) int32 array; ``x <= grid[c]`` iff ``code <= c``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.p:
            raise ValueError(f"expected {self.p} covariates, got {x.shape[1]}")
        return np.ascontiguousarray(
            np.stack([np.searchsorted(g, x[:, v], side="left") for v, g in enumerate(self.grids)]).astype(np.int32))


class Forest:
    """Sum of ``m`` trees on the probit scale plus a constant offset."""

    def __init__(self, m: int, coder: RankCoder, offset: float = 0.0, k: float = 2.0):
        self.m = int(m)
        self.coder = coder
        self.offset = float(offset)
        self.sigma_mu = 3.0 / (k * math.sqrt(m)) if m > 0 else 1.0
        self.var = np.zeros((self.m, K.NMAX), dtype=np.int32)
        self.cut = np.zeros((self.m, K.NMAX), dtype=np.int32)
        self.kind = np.zeros((self.m, K.NMAX), dtype=np.int8)
        self.kind[:, 0] = K.LEAF
        self.mu = np.zeros((self.m, K.NMAX))
        self.top = np.ones(self.m, dtype=np.int64)

    def tree(self, j: int) -> Tree:
        return Tree.from_heap(self.var[j], self.cut[j], self.kind[j], self.mu[j], self.coder.grids)

    def trees(self) -> list[Tree]:
        return [self.tree(j) for j in range(self.m)]

    def tree_sum(self, x) -> np.ndarray:
        xr = self.coder.encode(x)
        out = np.zeros(xr.shape[1])
        for j in range(self.m):
            K.tree_predict(xr, self.var[j], self.cut[j], self.kind[j], self.mu[j], out)
        return out

    def predict_index(self, x) -> np.ndarray:
        return self.offset + self.tree_sum(x)

    def predict_probability(self, x) -> np.ndarray:
        return special.ndtr(self.predict_index(x))


def predict_probability(forest: Forest, x) -> np.ndarray | float:
    """``Phi(offset + sum of trees)`` at one row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(forest.predict_probability(x[None, :])[0])
    return forest.predict_probability(x)


class BartSampler:
    """Backfitting MCMC state for one probit BART surface.

    The trees are evaluated at all ``n`` training rows, while only the rows
    flagged in the current ``active`` set enter the likelihood. This lets one
    sampler follow a response whose fitting subset changes between calls.
    """

    def __init__(self, x, m: int = 200, k: float = 2.0, alpha: float = 0.95, beta: float = 2.0,
                 offset: float = 0.0, move_probs=None, coder: RankCoder | None = None):
        x = np.asarray(x, dtype=float)
        self.coder = coder if coder is not None else RankCoder(x)
        self.xr = self.coder.encode(x)
        self.n = x.shape[0]
        self.forest = Forest(m, self.coder, offset, k)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.probs = np.asarray(K.DEFAULT_MOVE_PROBS if move_probs is None else move_probs, dtype=float)
        self.leaf_of = np.zeros((self.forest.m, self.n), dtype=np.int16)
        self.total = np.zeros(self.n)
        self.latent = np.zeros(self.n)
        self.y = np.zeros(self.n, dtype=np.int8)
        self.act = np.arange(self.n, dtype=np.int64)
        self.moves = np.zeros((4, 2), dtype=np.int64)
        self._r = np.zeros(self.n)
        self._cnt = np.zeros(K.NMAX, dtype=np.int64)
        self._sm = np.zeros(K.NMAX)
        self._ncnt = np.zeros(K.NMAX, dtype=np.int64)
        self._nsm = np.zeros(K.NMAX)
        self._mu_old = np.zeros(K.NMAX)
        self._insub = np.zeros(K.NMAX, dtype=np.bool_)
        self._lo = np.zeros(self.coder.p, dtype=np.int64)
        self._hi = np.zeros(self.coder.p, dtype=np.int64)
        self._counts = np.zeros(4, dtype=np.int64)
        self._counts_new = np.zeros(4, dtype=np.int64)

    @property
    def offset(self) -> float:
        return self.forest.offset

    @property
    def sigma_mu(self) -> float:
        return self.forest.sigma_mu

    def set_data(self, y, active=None):
        """Set the binary response and the rows that enter the likelihood."""
        self.y = np.ascontiguousarray(np.asarray(y, dtype=np.int8))
        if active is None:
            self.act = np.arange(self.n, dtype=np.int64)
        else:
            active = np.asarray(active)
            self.act = (np.nonzero(active)[0] if active.dtype == bool else active).astype(np.int64)

    def draw_latents(self, rng):
        K.draw_latents(self.total, self.forest.offset, self.y, self.act, self.latent, rng)

    def sweep(self, rng):
        f = self.forest
        K.sweep(f.var, f.cut, f.kind, f.mu, f.top, self.leaf_of, self.total, self.latent, self.act,
                self.xr, self.coder.ngrid, f.offset, f.sigma_mu ** 2, self.alpha, self.beta, self.probs, rng,
                self._r, self._cnt, self._sm, self._ncnt, self._nsm, self._mu_old, self._insub,
                self._lo, self._hi, self._counts, self._counts_new, self.moves)

    def step(self, rng):
        """Redraw latents for the active rows, then backfit each tree once."""
        self.draw_latents(rng)
        self.sweep(rng)

    @property
    def index(self) -> np.ndarray:
        """Latent-scale fit ``offset + sum of trees`` at every training row."""
        return self.forest.offset + self.total

    @property
    def probability(self) -> np.ndarray:
        return special.ndtr(self.index)

    def recompute_total(self) -> np.ndarray:
        out = np.zeros(self.n)
        f = self.forest
        for j in range(f.m):
            out += f.mu[j][self.leaf_of[j]]
        return out

    def tree_log_prior(self, j: int) -> float:
        f = self.forest
        return K.tree_summary(f.var[j], f.cut[j], f.kind[j], int(f.top[j]), self.coder.ngrid, self.alpha,
                              self.beta, K.DEPTH, self._lo, self._hi, self._counts)


BartFitState = BartSampler


def bart_iteration(state: BartSampler, y, rng, active=None) -> BartSampler:
    """One full Gibbs cycle: latent redraw for ``y`` then one pass over all trees."""
    state.set_data(y, active)
    state.step(rng)
    return state


def draw_latents(forest_state: BartSampler, y, rng) -> np.ndarray:
    forest_state.set_data(y)
    forest_state.draw_latents(rng)
    return forest_state.latent


def fit_propensity(x, z, rng, m: int = 200, k: float = 2.0, alpha: float = 0.95, beta: float = 2.0,
                   burn_in: int = 100, draws: int = 150) -> np.ndarray:
    """Posterior-mean latent index of ``P(Z = 1 | X)`` under probit BART.

    The offset is the probit of the marginal assignment rate.
    """
    z = np.asarray(z)
    zbar = float(z.mean())
    if zbar in (0.0, 1.0):
        raise ValueError("assignment has no variation; propensity is not estimable")
    s = BartSampler(x, m=m, k=k, alpha=alpha, beta=beta, offset=float(special.ndtri(zbar)))
    s.set_data(z)
    acc = np.zeros(s.n)
    for it in range(burn_in + draws):
        s.step(rng)
        if it >= burn_in:
            acc += s.index
    return acc / draws
