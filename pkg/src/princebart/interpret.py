"""Surrogate trees and marginal dependence summaries of fitted surfaces.

A deep regression tree fit to posterior-mean predictions measures how much of
a surface a covariate subset can reproduce (forward selection by R^2); a
depth-3 tree on the selected covariates turns the surface into a handful of
readable segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

REL_TOL = 1e-9


@dataclass
class CartNode:
    value: float
    n: int
    sse: float
    depth: int
    var: int | None = None
    cut: float | None = None
    left: "CartNode | None" = None
    right: "CartNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.var is None


@dataclass
class CartTree:
    """Greedy least-squares regression tree; rows with ``x[var] <= cut`` go left."""

    root: CartNode
    max_depth: int | None
    min_node_size: int
    names: list[str] = field(default_factory=list)

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            nd = self.root
            while not nd.is_leaf:
                nd = nd.left if row[nd.var] <= nd.cut else nd.right
            out[i] = nd.value
        return out

    def apply(self, x) -> np.ndarray:
        """Leaf number (left-to-right order) of every row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ids = {id(nd): k for k, (nd, _) in enumerate(self.leaves())}
        out = np.empty(x.shape[0], dtype=np.int64)
        for i, row in enumerate(x):
            nd = self.root
            while not nd.is_leaf:
                nd = nd.left if row[nd.var] <= nd.cut else nd.right
            out[i] = ids[id(nd)]
        return out

    def leaves(self) -> list[tuple[CartNode, list[tuple[int, str, float]]]]:
        """Leaves left to right, each with its path of ``(var, op, cut)`` conditions."""
        out = []

        def walk(nd, path):
            if nd.is_leaf:
                out.append((nd, path))
                return
            walk(nd.left, path + [(nd.var, "<=", nd.cut)])
            walk(nd.right, path + [(nd.var, ">", nd.cut)])

        walk(self.root, [])
        return out

    @property
    def leaf_count(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        return max(nd.depth for nd, _ in self.leaves())

    def _name(self, v):
        return self.names[v] if v < len(self.names) else f"x{v}"

    def describe_path(self, path) -> str:
        return " & ".join(f"{self._name(v)} {op} {c:g}" for v, op, c in path) or "all units"

    def to_text(self) -> str:
        lines = []

        def walk(nd, pad):
            if nd.is_leaf:
                lines.append(f"{pad}leaf: value={nd.value:.6g} n={nd.n}")
                return
            lines.append(f"{pad}{self._name(nd.var)} <= {nd.cut:g} (n={nd.n})")
            walk(nd.left, pad + "  ")
            lines.append(f"{pad}{self._name(nd.var)} > {nd.cut:g}")
            walk(nd.right, pad + "  ")

        walk(self.root, "")
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        lines = ["digraph surrogate {", "  node [shape=box];"]
        counter = [0]

        def walk(nd):
            k = counter[0]
            counter[0] += 1
            if nd.is_leaf:
                lines.append(f'  n{k} [label="{nd.value:.4g}\\nn={nd.n}"];')
                return k
            lines.append(f'  n{k} [label="{self._name(nd.var)} <= {nd.cut:g}\\nn={nd.n}"];')
            a = walk(nd.left)
            lines.append(f'  n{k} -> n{a} [label="yes"];')
            b = walk(nd.right)
            lines.append(f'  n{k} -> n{b} [label="no"];')
            return k

        walk(self.root)
        lines.append("}")
        return "\n".join(lines) + "\n"


def best_split(t: np.ndarray, x: np.ndarray, min_node_size: int = 1):
    """Exhaustive least-squares split search.

    Returns ``(var, cut, gain)`` or ``None`` if no admissible split strictly
    lowers the SSE. Gains within a relative ``1e-9`` of the best count as
    ties, resolved by lowest variable index and then lowest cut.
    """
    n = t.size
    if n < 2 * min_node_size:
        return None
    tc = t - t.mean()
    sse = float(np.dot(tc, tc))
    best = None
    best_gain = 0.0
    for v in range(x.shape[1]):
        order = np.argsort(x[:, v], kind="stable")
        xs = x[order, v]
        ts = tc[order]
        cs = np.cumsum(ts)[:-1]
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        ok = (xs[:-1] < xs[1:]) & (nl >= min_node_size) & (nr >= min_node_size)
        if not ok.any():
            continue
        # SSE reduction of a split with centered targets: S_l^2 / n_l + S_r^2 / n_r, S_r = -S_l
        gain = cs * cs * (1.0 / nl + 1.0 / nr)
        gain = np.where(ok, gain, -np.inf)
        top = gain.max()
        k = int(np.argmax(gain >= top - abs(top) * REL_TOL))  # lowest cut among near-ties
        g = float(gain[k])
        if best is None or g > best_gain * (1 + REL_TOL) + 1e-300:
            best, best_gain = (v, float(xs[k])), g
    if best is None or not best_gain > REL_TOL * max(sse, 1e-300):
        return None
    return best[0], best[1], best_gain


def fit_cart(targets, x, max_depth: int | None = None, min_node_size: int = 5, names=None) -> CartTree:
    """Grow a greedy regression tree (unbounded depth when ``max_depth`` is None)."""
    t = np.asarray(targets, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if t.shape[0] != x.shape[0]:
        raise ValueError("targets and covariates disagree on the number of rows")
    if not np.all(np.isfinite(t)):
        raise ValueError("targets must be finite")

    def grow(rows, depth):
        tt = t[rows]
        mean = float(tt.mean())
        node = CartNode(mean, rows.size, float(np.sum((tt - mean) ** 2)), depth)
        if max_depth is not None and depth >= max_depth:
            return node
        s = best_split(tt, x[rows], min_node_size)
        if s is None:
            return node
        v, c, _ = s
        go_left = x[rows, v] <= c
        node.var, node.cut = v, c
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    root = grow(np.arange(t.size), 0)
    return CartTree(root, max_depth, min_node_size, list(names) if names is not None else [])


def pearson_r2(a, b) -> float:
    """Squared Pearson correlation; 0 when either side is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1] ** 2)


@dataclass
class SelectionTrace:
    """Forward-selection path: ``steps`` holds ``(covariate, cumulative R^2)``."""

    steps: list[tuple[str, float]]
    selected: list[int]
    candidates: list[dict]
    status: str = "ok"

    def to_rows(self) -> list[dict]:
        return [{"step": i + 1, "covariate": v, "r2": r} for i, (v, r) in enumerate(self.steps)]


def surrogate_deep_select(predictions, x, names=None, min_gain: float = 0.01, min_node_size: int = 5,
                          max_vars: int | None = None) -> SelectionTrace:
    """Greedy forward selection of covariates by deep-tree R^2 against ``predictions``.

    The best single covariate always enters; afterwards a covariate enters only
    if it raises R^2 by more than ``min_gain``.
    """
    yhat = np.asarray(predictions, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    p = x.shape[1]
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if np.ptp(yhat) == 0:
        return SelectionTrace([], [], [], status="constant predictions: nothing to explain")
    selected: list[int] = []
    steps: list[tuple[str, float]] = []
    cands: list[dict] = []
    current = 0.0
    limit = p if max_vars is None else min(p, max_vars)
    while len(selected) < limit:
        scores = {}
        for v in range(p):
            if v in selected:
                continue
            cols = sorted(selected + [v])
            tree = fit_cart(yhat, x[:, cols], None, min_node_size)
            scores[v] = pearson_r2(tree.predict(x[:, cols]), yhat)
        cands.append({names[v]: r for v, r in scores.items()})
        v_best = min(scores, key=lambda v: (-scores[v], v))
        r = scores[v_best]
        if selected and not r - current > min_gain:
            break
        selected.append(v_best)
        steps.append((names[v_best], r))
        current = max(current, r)
    return SelectionTrace(steps, selected, cands)


def surrogate_shallow(predictions, x, selected, names=None, max_depth: int = 3, min_node_size: int = 20) -> CartTree:
    """Depth-limited tree on the selected covariates; its leaves are the segments.

    Split variables refer to columns of the full ``x``.
    """
    selected = list(selected)
    if not selected:
        raise ValueError("surrogate_shallow needs at least one selected covariate")
    x = np.asarray(x, dtype=float)
    sub = fit_cart(predictions, x[:, selected], max_depth, min_node_size)

    def remap(nd):
        if not nd.is_leaf:
            nd.var = selected[nd.var]
            remap(nd.left)
            remap(nd.right)

    remap(sub.root)
    sub.names = list(names) if names is not None else [f"x{j}" for j in range(x.shape[1])]
    return sub


def leaf_summaries(tree: CartTree, x, cate_draws, pi_draws) -> list[dict]:
    """Complier-share weighted CATE per leaf, summarized across draws.

    ``cate_draws`` and ``pi_draws`` are ``(draws, n)`` arrays.
    """
    from .estimands import summarize

    leaf = tree.apply(x)
    cate = np.asarray(cate_draws, dtype=float)
    pc = np.asarray(pi_draws, dtype=float)
    rows = []
    for k, (nd, path) in enumerate(tree.leaves()):
        m = leaf == k
        vals = (cate[:, m] * pc[:, m]).sum(axis=1) / pc[:, m].sum(axis=1)
        s = summarize(vals, f"mcate_c[leaf {k}]") if vals.size >= 2 else None
        row = {"leaf": k, "segment": tree.describe_path(path), "n": int(m.sum()), "surrogate_value": nd.value}
        if s is not None:
            row.update(mean=s.mean, sd=s.sd, ci60=list(s.ci60), ci90=list(s.ci90))
        rows.append(row)
    return rows


def marginal_dependence(surface_draws, group, small_cell: int = 10) -> list[dict]:
    """Group means of the probit-scale surface, per draw, then summarized.

    ``surface_draws`` is a ``(draws, n)`` array of probabilities (a single
    vector counts as one draw); ``group`` holds one covariate's values.
    """
    s = np.atleast_2d(np.asarray(surface_draws, dtype=float))
    g = np.asarray(group)
    if g.shape[0] != s.shape[1]:
        raise ValueError("group labels and surface draws disagree on the number of units")
    levels = np.unique(g)
    if levels.size < 2:
        raise ValueError("grouping covariate needs at least 2 observed values")
    z = special.ndtri(np.clip(s, 1e-12, 1 - 1e-12))
    rows = []
    for lv in levels:
        m = g == lv
        per_draw = z[:, m].mean(axis=1)
        lo, hi = np.quantile(per_draw, [0.05, 0.95])
        rows.append({"group": float(lv), "n": int(m.sum()), "mean": float(per_draw.mean()),
                     "lo90": float(lo), "hi90": float(hi), "small_cell": bool(m.sum() < small_cell)})
    return rows
