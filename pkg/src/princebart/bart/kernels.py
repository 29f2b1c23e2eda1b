"""Hot loops of the probit sum-of-trees sampler.

Trees live in fixed-size heap arrays: node ``k`` has children ``2k+1`` (rows
with ``x <= cut``) and ``2k+2``. Covariates enter as integer ranks into the
sorted unique values of each column, so a rule ``(var, cut)`` with rank
region ``(lo, hi]`` admits cuts ``lo < cut < hi``.

Row-level primitives come in two versions (numba loops or vectorized numpy,
picked by ``PRINCE_BART_NUMBA``). Tree-level code is written once and is
compiled only when numba is on. Both versions consume the random stream in
the same order.
"""

import math

import numpy as np
from scipy import special

from .._jit import USE_NUMBA, jit, ndtr, ndtri

MAX_DEPTH = 10
NMAX = 2 ** (MAX_DEPTH + 1) - 1
MIN_SPLIT = 5
LEAF = 1
INTERNAL = 2
GROW, PRUNE, CHANGE, SWAP = 0, 1, 2, 3
DEFAULT_MOVE_PROBS = np.array([0.25, 0.25, 0.40, 0.10])
TAIL = 5.0

DEPTH = np.floor(np.log2(np.arange(NMAX) + 1.0) + 1e-12).astype(np.int64)


# ---------------------------------------------------------------- primitives

@jit
def _in_subtree(leaf, node, depth):
    dl = depth[leaf]
    dn = depth[node]
    if dl < dn:
        return False
    return ((leaf + 1) >> (dl - dn)) - 1 == node


@jit
def _route(xr, i, var_j, cut_j, kind_j, start):
    k = start
    while kind_j[k] == INTERNAL:
        k = 2 * k + 1 + (xr[var_j[k], i] > cut_j[k])
    return k


@jit
def _robert_tail(a, rng):
    # standard normal truncated to (a, inf) by exponential rejection
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        x = a - math.log(1.0 - rng.random()) / lam
        if rng.random() <= math.exp(-0.5 * (x - lam) * (x - lam)):
            return x


if USE_NUMBA:

    @jit
    def resid_stats(leaf_j, mu_j, total, latent, offset, act, r, cnt, sm, top):
        for k in range(top):
            cnt[k] = 0
            sm[k] = 0.0
        for t in range(act.shape[0]):
            i = act[t]
            l = leaf_j[i]
            v = latent[i] - offset - total[i] + mu_j[l]
            r[t] = v
            cnt[l] += 1
            sm[l] += v

    @jit
    def grow_split(leaf_j, act, r, xr_v, node, cut):
        cl = 0
        cr = 0
        sl = 0.0
        sr = 0.0
        for t in range(act.shape[0]):
            i = act[t]
            if leaf_j[i] == node:
                if xr_v[i] <= cut:
                    cl += 1
                    sl += r[t]
                else:
                    cr += 1
                    sr += r[t]
        return cl, sl, cr, sr

    @jit
    def route_active(leaf_j, act, r, xr, var_j, cut_j, kind_j, node, insub, ncnt, nsm):
        for t in range(act.shape[0]):
            i = act[t]
            if insub[leaf_j[i]]:
                k = _route(xr, i, var_j, cut_j, kind_j, node)
                ncnt[k] += 1
                nsm[k] += r[t]

    @jit
    def finish_tree(total, leaf_j, xr, var_j, cut_j, kind_j, node, insub, moved, mu_new, mu_old):
        # reroute rows of an accepted move and refresh the running tree sum
        if moved:
            for i in range(total.shape[0]):
                l = leaf_j[i]
                if insub[l]:
                    k = _route(xr, i, var_j, cut_j, kind_j, node)
                    leaf_j[i] = k
                    total[i] += mu_new[k] - mu_old[l]
                else:
                    total[i] += mu_new[l] - mu_old[l]
        else:
            for i in range(total.shape[0]):
                l = leaf_j[i]
                total[i] += mu_new[l] - mu_old[l]

    @jit
    def draw_latents(total, offset, y, act, latent, rng):
        na = act.shape[0]
        u = rng.random(na)
        tail = np.zeros(na, dtype=np.bool_)
        for t in range(na):
            i = act[t]
            mean = offset + total[i]
            up = 1.0 - u[t]
            if y[i] == 1:
                if mean < -TAIL:
                    tail[t] = True
                    continue
                v = mean - ndtri(up * ndtr(mean))
                latent[i] = v if v > 0.0 else 1e-12
            else:
                if mean > TAIL:
                    tail[t] = True
                    continue
                v = mean + ndtri(up * ndtr(-mean))
                latent[i] = v if v <= 0.0 else 0.0
        for t in range(na):
            if tail[t]:
                i = act[t]
                mean = offset + total[i]
                if y[i] == 1:
                    latent[i] = mean + _robert_tail(-mean, rng)
                else:
                    latent[i] = mean - _robert_tail(mean, rng)

else:

    def _route_vec(xr, rows, var_j, cut_j, kind_j, start):
        nodes = np.full(rows.shape[0], start, dtype=np.int64)
        while True:
            idx = np.nonzero(kind_j[nodes] == INTERNAL)[0]
            if idx.size == 0:
                return nodes
            nd = nodes[idx]
            left = xr[var_j[nd], rows[idx]] <= cut_j[nd]
            nodes[idx] = np.where(left, 2 * nd + 1, 2 * nd + 2)

    def resid_stats(leaf_j, mu_j, total, latent, offset, act, r, cnt, sm, top):
        leaf = leaf_j[act].astype(np.int64)
        na = act.shape[0]
        r[:na] = latent[act] - offset - total[act] + mu_j[leaf]
        cnt[:top] = np.bincount(leaf, minlength=top)[:top]
        sm[:top] = np.bincount(leaf, weights=r[:na], minlength=top)[:top]

    def grow_split(leaf_j, act, r, xr_v, node, cut):
        na = act.shape[0]
        inside = leaf_j[act] == node
        rows = act[inside]
        rr = r[:na][inside]
        left = xr_v[rows] <= cut
        cl = int(left.sum())
        cr = int(rows.shape[0] - cl)
        sl = float(np.bincount(left.astype(np.int64), weights=rr, minlength=2)[1]) if rows.size else 0.0
        sr = float(np.bincount((~left).astype(np.int64), weights=rr, minlength=2)[1]) if rows.size else 0.0
        return cl, sl, cr, sr

    def route_active(leaf_j, act, r, xr, var_j, cut_j, kind_j, node, insub, ncnt, nsm):
        na = act.shape[0]
        sel = np.nonzero(insub[leaf_j[act]])[0]
        if sel.size == 0:
            return
        dest = _route_vec(xr, act[sel], var_j, cut_j, kind_j, node)
        size = ncnt.shape[0]
        ncnt += np.bincount(dest, minlength=size)[:size]
        nsm += np.bincount(dest, weights=r[:na][sel], minlength=size)[:size]

    def finish_tree(total, leaf_j, xr, var_j, cut_j, kind_j, node, insub, moved, mu_new, mu_old):
        old = leaf_j.astype(np.int64)
        new = old
        if moved:
            rows = np.nonzero(insub[old])[0]
            if rows.size:
                new = old.copy()
                new[rows] = _route_vec(xr, rows, var_j, cut_j, kind_j, node)
                leaf_j[rows] = new[rows]
        total += mu_new[new] - mu_old[old]

    def draw_latents(total, offset, y, act, latent, rng):
        na = act.shape[0]
        u = rng.random(na)
        mean = offset + total[act]
        yy = y[act]
        up = 1.0 - u
        pos = yy == 1
        tail = np.where(pos, mean < -TAIL, mean > TAIL)
        with np.errstate(all="ignore"):
            phi_pos = 0.5 * special.erfc(-mean / math.sqrt(2.0))
            phi_neg = 0.5 * special.erfc(mean / math.sqrt(2.0))
            v1 = mean - special.ndtri(up * phi_pos)
            v0 = mean + special.ndtri(up * phi_neg)
        v1 = np.where(v1 > 0.0, v1, 1e-12)
        v0 = np.where(v0 <= 0.0, v0, 0.0)
        vals = np.where(pos, v1, v0)
        keep = ~tail
        latent[act[keep]] = vals[keep]
        for t in np.nonzero(tail)[0]:
            i = act[t]
            m_ = mean[t]
            if yy[t] == 1:
                latent[i] = m_ + _robert_tail(-m_, rng)
            else:
                latent[i] = m_ - _robert_tail(m_, rng)


# ------------------------------------------------------------ tree structure

@jit
def split_prob(depth, alpha, beta):
    if depth >= MAX_DEPTH:
        return 0.0
    return alpha * (1.0 + depth) ** (-beta)


@jit
def node_region(var_j, cut_j, node, ngrid, lo, hi):
    for v in range(ngrid.shape[0]):
        lo[v] = -1
        hi[v] = ngrid[v] - 1
    k = node
    while k > 0:
        par = (k - 1) // 2
        v = var_j[par]
        c = cut_j[par]
        if k == 2 * par + 1:
            if c < hi[v]:
                hi[v] = c
        else:
            if c > lo[v]:
                lo[v] = c
        k = par


@jit
def count_valid_vars(lo, hi):
    c = 0
    for v in range(lo.shape[0]):
        if hi[v] - lo[v] > 1:
            c += 1
    return c


@jit
def nth_valid_var(lo, hi, r):
    c = 0
    for v in range(lo.shape[0]):
        if hi[v] - lo[v] > 1:
            if c == r:
                return v
            c += 1
    return -1


@jit
def tree_summary(var_j, cut_j, kind_j, top, ngrid, alpha, beta, depth, lo, hi, counts):
    """Log prior of one tree and its move-target counts.

    ``counts`` receives (growable leaves, prunable nodes, internal nodes,
    internal parent/child pairs). The log prior is ``-inf`` when some rule
    has no admissible cut inside its region.
    """
    for q in range(4):
        counts[q] = 0
    lp = 0.0
    for k in range(top):
        kk = kind_j[k]
        if kk == 0:
            continue
        d = depth[k]
        node_region(var_j, cut_j, k, ngrid, lo, hi)
        padj = count_valid_vars(lo, hi)
        if kk == INTERNAL:
            v = var_j[k]
            c = cut_j[k]
            if not (lo[v] < c < hi[v]):
                return -np.inf
            lp += math.log(split_prob(d, alpha, beta)) - math.log(padj) - math.log(hi[v] - lo[v] - 1)
            counts[2] += 1
            lk = kind_j[2 * k + 1]
            rk = kind_j[2 * k + 2]
            if lk == LEAF and rk == LEAF:
                counts[1] += 1
            if lk == INTERNAL:
                counts[3] += 1
            if rk == INTERNAL:
                counts[3] += 1
        else:
            if d < MAX_DEPTH and padj > 0:
                lp += math.log(1.0 - split_prob(d, alpha, beta))
                counts[0] += 1
    return lp


@jit
def log_kind_prob(counts, probs, kind):
    tot = 0.0
    for q in range(4):
        if counts[q] > 0:
            tot += probs[q]
    if counts[kind] == 0 or tot == 0.0:
        return -np.inf
    return math.log(probs[kind] / tot)


@jit
def choose_kind(counts, probs, u):
    tot = 0.0
    for q in range(4):
        if counts[q] > 0:
            tot += probs[q]
    acc = 0.0
    last = -1
    for q in range(4):
        if counts[q] > 0:
            acc += probs[q] / tot
            last = q
            if u < acc:
                return q
    return last


@jit
def nth_target(var_j, cut_j, kind_j, top, ngrid, depth, lo, hi, kind, r):
    """Node index (and child for swaps) of the r-th target of a move kind."""
    c = 0
    for k in range(top):
        kk = kind_j[k]
        if kk == 0:
            continue
        if kind == GROW:
            if kk == LEAF and depth[k] < MAX_DEPTH:
                node_region(var_j, cut_j, k, ngrid, lo, hi)
                if count_valid_vars(lo, hi) > 0:
                    if c == r:
                        return k, -1
                    c += 1
        elif kk == INTERNAL:
            if kind == PRUNE:
                if kind_j[2 * k + 1] == LEAF and kind_j[2 * k + 2] == LEAF:
                    if c == r:
                        return k, -1
                    c += 1
            elif kind == CHANGE:
                if c == r:
                    return k, -1
                c += 1
            else:
                for ch in (2 * k + 1, 2 * k + 2):
                    if kind_j[ch] == INTERNAL:
                        if c == r:
                            return k, ch
                        c += 1
    return -1, -1


@jit
def leaf_loglik(c, s, s2):
    """Log marginal likelihood of a leaf with unit noise and N(0, s2) value, up to shared terms."""
    den = 1.0 + c * s2
    return -0.5 * math.log(den) + 0.5 * s2 * s * s / den


@jit
def mark_subtree(insub, top, node, depth):
    for k in range(top):
        insub[k] = _in_subtree(k, node, depth)


@jit
def subtree_loglik(kind_j, top, node, depth, cnt, sm, s2):
    ll = 0.0
    for k in range(top):
        if kind_j[k] == LEAF and _in_subtree(k, node, depth):
            ll += leaf_loglik(cnt[k], sm[k], s2)
    return ll


@jit
def subtree_min_count(kind_j, top, node, depth, cnt):
    mn = 1 << 62
    for k in range(top):
        if kind_j[k] == LEAF and _in_subtree(k, node, depth):
            if cnt[k] < mn:
                mn = cnt[k]
    return mn


# -------------------------------------------------------------- tree update

@jit
def propose_move(var_j, cut_j, kind_j, top_j, leaf_j, act, r, cnt, sm, ncnt, nsm,
                 xr, ngrid, s2, alpha, beta, probs, depth, lo, hi, counts, counts_new, insub, rng):
    """One Metropolis-Hastings structural move on a single tree.

    Modifies the tree arrays and the leaf statistics in place when the move is
    accepted. Returns ``(kind, accepted, new_top, node)``; rows whose leaf
    lies under ``node`` still have to be rerouted by the caller.
    """
    lp_old = tree_summary(var_j, cut_j, kind_j, top_j, ngrid, alpha, beta, depth, lo, hi, counts)
    kind = choose_kind(counts, probs, rng.random())
    if kind < 0:
        return -1, False, top_j, 0
    ntarget = counts[kind]
    r_idx = int(rng.random() * ntarget)
    if r_idx >= ntarget:
        r_idx = ntarget - 1
    node, child = nth_target(var_j, cut_j, kind_j, top_j, ngrid, depth, lo, hi, kind, r_idx)
    log_u = math.log(1.0 - rng.random())
    top_new = top_j

    if kind == GROW:
        node_region(var_j, cut_j, node, ngrid, lo, hi)
        padj = count_valid_vars(lo, hi)
        v = nth_valid_var(lo, hi, min(int(rng.random() * padj), padj - 1))
        ncut = hi[v] - lo[v] - 1
        c = lo[v] + 1 + min(int(rng.random() * ncut), ncut - 1)
        if cnt[node] < MIN_SPLIT:
            return kind, False, top_j, 0
        cl, sl, cr, sr = grow_split(leaf_j, act, r, xr[v], node, c)
        if cl == 0 or cr == 0:
            return kind, False, top_j, 0
        dll = leaf_loglik(cl, sl, s2) + leaf_loglik(cr, sr, s2) - leaf_loglik(cnt[node], sm[node], s2)
        lq_fwd = log_kind_prob(counts, probs, GROW) - math.log(counts[GROW]) - math.log(padj) - math.log(ncut)
        kind_j[node] = INTERNAL
        var_j[node] = v
        cut_j[node] = c
        kind_j[2 * node + 1] = LEAF
        kind_j[2 * node + 2] = LEAF
        top_new = max(top_j, 2 * node + 3)
        lp_new = tree_summary(var_j, cut_j, kind_j, top_new, ngrid, alpha, beta, depth, lo, hi, counts_new)
        lq_rev = log_kind_prob(counts_new, probs, PRUNE) - math.log(counts_new[PRUNE])
        if log_u < dll + lp_new - lp_old + lq_rev - lq_fwd:
            cnt[2 * node + 1] = cl
            sm[2 * node + 1] = sl
            cnt[2 * node + 2] = cr
            sm[2 * node + 2] = sr
            return kind, True, top_new, node
        kind_j[node] = LEAF
        kind_j[2 * node + 1] = 0
        kind_j[2 * node + 2] = 0
        return kind, False, top_j, 0

    if kind == PRUNE:
        lch = 2 * node + 1
        rch = 2 * node + 2
        cm = cnt[lch] + cnt[rch]
        smm = sm[lch] + sm[rch]
        dll = leaf_loglik(cm, smm, s2) - leaf_loglik(cnt[lch], sm[lch], s2) - leaf_loglik(cnt[rch], sm[rch], s2)
        lq_fwd = log_kind_prob(counts, probs, PRUNE) - math.log(counts[PRUNE])
        node_region(var_j, cut_j, node, ngrid, lo, hi)
        padj = count_valid_vars(lo, hi)
        v = var_j[node]
        ncut = hi[v] - lo[v] - 1
        kind_j[node] = LEAF
        kind_j[lch] = 0
        kind_j[rch] = 0
        lp_new = tree_summary(var_j, cut_j, kind_j, top_j, ngrid, alpha, beta, depth, lo, hi, counts_new)
        lq_rev = (log_kind_prob(counts_new, probs, GROW) - math.log(counts_new[GROW])
                  - math.log(padj) - math.log(ncut))
        if log_u < dll + lp_new - lp_old + lq_rev - lq_fwd:
            cnt[node] = cm
            sm[node] = smm
            return kind, True, top_j, node
        kind_j[node] = INTERNAL
        kind_j[lch] = LEAF
        kind_j[rch] = LEAF
        return kind, False, top_j, 0

    # change / swap: same structure, rules move
    if kind == CHANGE:
        node_region(var_j, cut_j, node, ngrid, lo, hi)
        padj = count_valid_vars(lo, hi)
        v_old = var_j[node]
        c_old = cut_j[node]
        nc_old = hi[v_old] - lo[v_old] - 1
        v = nth_valid_var(lo, hi, min(int(rng.random() * padj), padj - 1))
        ncut = hi[v] - lo[v] - 1
        c = lo[v] + 1 + min(int(rng.random() * ncut), ncut - 1)
        var_j[node] = v
        cut_j[node] = c
        root = node
        lq = math.log(ncut) - math.log(nc_old)
    else:
        v_old = var_j[node]
        c_old = cut_j[node]
        var_j[node] = var_j[child]
        cut_j[node] = cut_j[child]
        var_j[child] = v_old
        cut_j[child] = c_old
        root = node
        lq = 0.0

    lp_new = tree_summary(var_j, cut_j, kind_j, top_j, ngrid, alpha, beta, depth, lo, hi, counts_new)
    ok = lp_new > -np.inf
    if ok:
        for k in range(top_j):
            if _in_subtree(k, root, depth):
                ncnt[k] = 0
                nsm[k] = 0.0
            else:
                ncnt[k] = cnt[k]
                nsm[k] = sm[k]
        mark_subtree(insub, top_j, root, depth)
        route_active(leaf_j, act, r, xr, var_j, cut_j, kind_j, root, insub, ncnt, nsm)
        ok = subtree_min_count(kind_j, top_j, root, depth, ncnt) >= 1
    if ok:
        dll = (subtree_loglik(kind_j, top_j, root, depth, ncnt, nsm, s2)
               - subtree_loglik(kind_j, top_j, root, depth, cnt, sm, s2))
        lq += log_kind_prob(counts_new, probs, kind) - log_kind_prob(counts, probs, kind)
        if log_u < dll + lp_new - lp_old + lq:
            for k in range(top_j):
                cnt[k] = ncnt[k]
                sm[k] = nsm[k]
            return kind, True, top_j, root
    if kind == CHANGE:
        var_j[node] = v_old
        cut_j[node] = c_old
    else:
        var_j[child] = var_j[node]
        cut_j[child] = cut_j[node]
        var_j[node] = v_old
        cut_j[node] = c_old
    return kind, False, top_j, 0


@jit
def draw_leaf_values(kind_j, mu_j, top, cnt, sm, s2, rng):
    for k in range(top):
        if kind_j[k] == LEAF:
            prec = cnt[k] + 1.0 / s2
            mu_j[k] = sm[k] / prec + math.sqrt(1.0 / prec) * rng.standard_normal()


@jit
def sweep(var, cut, kind, mu, top, leaf_of, total, latent, act, xr, ngrid, offset, s2,
          alpha, beta, probs, rng, r, cnt, sm, ncnt, nsm, mu_old, insub, lo, hi,
          counts, counts_new, moves):
    """Backfit every tree once against its partial residuals.

    ``moves`` is a (4, 2) tally of proposed/accepted moves by kind.
    """
    m = var.shape[0]
    depth = DEPTH
    for j in range(m):
        var_j = var[j]
        cut_j = cut[j]
        kind_j = kind[j]
        mu_j = mu[j]
        leaf_j = leaf_of[j]
        tj = top[j]
        resid_stats(leaf_j, mu_j, total, latent, offset, act, r, cnt, sm, tj)
        kd, acc, tnew, node = propose_move(var_j, cut_j, kind_j, tj, leaf_j, act, r, cnt, sm, ncnt, nsm,
                                           xr, ngrid, s2, alpha, beta, probs, depth, lo, hi, counts,
                                           counts_new, insub, rng)
        if kd >= 0:
            moves[kd, 0] += 1
            if acc:
                moves[kd, 1] += 1
        top[j] = tnew
        mu_old[:tnew] = mu_j[:tnew]
        for k in range(tj, tnew):
            mu_old[k] = 0.0
        draw_leaf_values(kind_j, mu_j, tnew, cnt, sm, s2, rng)
        if acc:
            mark_subtree(insub, tnew, node, depth)
        finish_tree(total, leaf_j, xr, var_j, cut_j, kind_j, node, insub, acc, mu_j, mu_old)


@jit
def tree_predict(xr_rows, var_j, cut_j, kind_j, mu_j, out):
    """Add one tree's values for rows given as rank-coded columns ``xr_rows`` (p, n)."""
    for i in range(xr_rows.shape[1]):
        out[i] += mu_j[_route(xr_rows, i, var_j, cut_j, kind_j, 0)]
