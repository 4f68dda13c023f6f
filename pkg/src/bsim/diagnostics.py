"""Convergence diagnostics: split R-hat and effective sample size."""

from __future__ import annotations

import numpy as np


def _split(chains):
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    half = chains.shape[1] // 2
    if half < 2:
        return None
    return np.vstack([chains[:, :half], chains[:, half:2 * half]])


def split_rhat(chains) -> float:
    """Split R-hat for an array of shape (n_chains, n_draws)."""
    sub = _split(chains)
    if sub is None:
        return float("nan")
    n = sub.shape[1]
    W = np.mean(np.var(sub, axis=1, ddof=1))
    B = n * np.var(np.mean(sub, axis=1), ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    sub = _split(chains)
    if sub is None:
        return float("nan")
    m, n = sub.shape
    W = np.mean(np.var(sub, axis=1, ddof=1))
    if W == 0:
        return float(m * n)
    B = n * np.var(np.mean(sub, axis=1), ddof=1)
    var_plus = (n - 1) / n * W + B / n

    centred = sub - sub.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n] / n
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    total = 0.0
    prev = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = -1.0 + 2.0 * total
    return float(m * n / max(tau, 1.0 / np.log10(max(m * n, 10))))
