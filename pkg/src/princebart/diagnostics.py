"""Split-chain convergence diagnostics on rank-normalized draws.

``rhat`` and ``ess`` follow the rank-normalized, folded split-R-hat and bulk
effective sample size of Vehtari et al. (2021). Input arrays have shape
``(chains, draws)``.
"""

from __future__ import annotations

import numpy as np
from scipy import fft, special, stats


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    return x


def split_chains(x) -> np.ndarray:
    """Halve every chain; with an odd length the middle draw is dropped."""
    x = _as_chains(x)
    half = x.shape[1] // 2
    return np.vstack([x[:, :half], x[:, x.shape[1] - half:]])


def rank_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return special.ndtri((r - 0.375) / (x.size + 0.25))


def _rhat(x):
    m, n = x.shape
    w = x.var(axis=1, ddof=1).mean()
    b = n * x.mean(axis=1).var(ddof=1)
    if w <= 0:
        return np.nan
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


def rhat(x) -> float:
    """Rank-normalized split R-hat, the max of the bulk and the folded (tail) value.

    Returns nan when every draw is equal or chains are shorter than 4.
    """
    x = _as_chains(x)
    if x.shape[1] < 4 or np.ptp(x) == 0:
        return float("nan")
    s = split_chains(x)
    bulk = _rhat(rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat(rank_normalize(folded)) if np.ptp(folded) > 0 else bulk
    return float(max(bulk, tail))


def _autocov(x):
    # FFT autocovariance per chain, biased normalization
    n = x.shape[1]
    nfft = fft.next_fast_len(2 * n)
    xc = x - x.mean(axis=1, keepdims=True)
    f = fft.rfft(xc, nfft, axis=1)
    return fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n] / n


def _ess(x):
    m, n = x.shape
    acov = _autocov(x)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return np.nan
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer's initial positive sequence with the monotone adjustment
    t = 0
    pairs = []
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        pairs.append(p)
        t += 2
    pairs = np.minimum.accumulate(np.asarray(pairs)) if pairs else np.array([1.0])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n)) if m * n > 1 else 1.0
    return float(m * n / tau)


def ess(x) -> float:
    """Bulk effective sample size of rank-normalized split chains."""
    x = _as_chains(x)
    if x.shape[1] < 4 or np.ptp(x) == 0:
        return float("nan")
    return _ess(rank_normalize(split_chains(x)))


def summarize_chains(x) -> dict:
    return {"rhat": rhat(x), "ess": ess(x)}
