"""Shared constructed datasets for the tests."""

import numpy as np

XOR_CELLS = {(0, 0): 250, (0, 1): 250, (1, 0): 250, (1, 1): 240}


def xor_design(n_distractors: int = 4, seed: int = 0):
    """Binary x1, x2 with y = XOR(x1, x2) plus distractor columns.

    Exactly balanced XOR gives every greedy root split zero gain, so one
    cell is made slightly smaller. Each distractor cycles through its levels
    inside every (x1, x2) cell, which makes its splits gain-free.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for (a, b), size in XOR_CELLS.items():
        levels = [np.resize(np.arange(k + 2), size) for k in range(n_distractors)]
        for j in range(size):
            rows.append([a, b] + [lv[j] for lv in levels])
    x = np.array(rows, dtype=float)
    x = x[rng.permutation(len(x))]
    y = np.logical_xor(x[:, 0], x[:, 1]).astype(float)
    return x, y


def brute_best_split(t, x, min_node_size=1):
    """Exhaustive (var, cut) search by direct SSE evaluation."""
    n = t.size
    sse0 = float(((t - t.mean()) ** 2).sum())
    best = None
    for v in range(x.shape[1]):
        for c in np.unique(x[:, v])[:-1]:
            left = x[:, v] <= c
            nl = int(left.sum())
            if nl < min_node_size or n - nl < min_node_size:
                continue
            tl, tr = t[left], t[~left]
            gain = sse0 - ((tl - tl.mean()) ** 2).sum() - ((tr - tr.mean()) ** 2).sum()
            if best is None or gain > best[2] * (1 + 1e-9) + 1e-300:
                best = (v, float(c), float(gain))
    if best is None or not best[2] > 1e-9 * max(sse0, 1e-300):
        return None
    return best
