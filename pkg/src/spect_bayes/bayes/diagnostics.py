"""Split-R-hat and effective sample size for arrays shaped ``(chains, draws[, dims])``."""

from __future__ import annotations

import numpy as np


def _as_3d(draws) -> np.ndarray:
    a = np.asarray(draws, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :, None]
    elif a.ndim == 2:
        a = a[:, :, None]
    return a


def split_rhat(draws) -> np.ndarray:
    """Potential scale reduction on half-chains (Gelman et al. split form), per dimension."""
    a = _as_3d(draws)
    n = a.shape[1] // 2
    if n < 2:
        raise ValueError("need at least four draws per chain")
    halves = np.concatenate([a[:, :n], a[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return np.sqrt(var_plus / within)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, m, axis=-1)
    return np.fft.irfft(f * np.conj(f), m, axis=-1)[..., :n] / n


def effective_sample_size(draws) -> np.ndarray:
    """Multi-chain ESS with Geyer's initial monotone sequence, per dimension."""
    a = _as_3d(draws)
    m, n, d = a.shape
    out = np.empty(d)
    for k in range(d):
        x = a[:, :, k]
        acov = _autocov(x)
        chain_var = acov[:, 0] * n / (n - 1.0)
        within = chain_var.mean()
        var_plus = within * (n - 1.0) / n + (x.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
        if var_plus <= 0:
            out[k] = float(m * n)
            continue
        rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        # pair sums, truncated at the first negative and forced non-increasing
        total = 0.0
        prev = np.inf
        t = 0
        while t + 1 < n:
            pair = rho[t] + rho[t + 1]
            if pair < 0:
                break
            pair = min(pair, prev)
            total += pair
            prev = pair
            t += 2
        tau = -1.0 + 2.0 * total
        out[k] = m * n / max(tau, 1.0 / np.log10(m * n))
    return out


def mcse_mean(draws) -> np.ndarray:
    a = _as_3d(draws)
    flat = a.reshape(-1, a.shape[2])
    return flat.std(axis=0, ddof=1) / np.sqrt(effective_sample_size(a))
