"""Convergence diagnostics and interval summaries for MCMC draws."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def _as_chains(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError("draws must be chains x draws (x dims)")
    if x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("need at least 2 chains of at least 4 draws")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    c, n, d = x.shape
    flat = x.reshape(c * n, d)
    r = stats.rankdata(flat, axis=0, method="average")
    z = stats.norm.ppf((r - 0.375) / (c * n + 0.25))
    return z.reshape(c, n, d)


def _basic_rhat(x: np.ndarray) -> np.ndarray:
    m, n, _ = x.shape
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_plus = (n - 1) / n * W + B / n
        return np.sqrt(var_plus / W)


def _degenerate(x: np.ndarray) -> np.ndarray:
    """Dimensions where some chain never moves or values are non-finite."""
    const = np.any(np.ptp(x, axis=1) == 0, axis=0)
    return const | ~np.all(np.isfinite(x), axis=(0, 1))


def rhat(draws) -> np.ndarray:
    """Rank-normalised split R-hat (maximum of bulk and folded-tail versions).

    ``draws`` is chains x draws or chains x draws x dims. Constant or
    non-finite dimensions return +inf.
    """
    x = _as_chains(draws)
    bad = _degenerate(x)
    s = _split(x)
    bulk = _basic_rhat(_rank_normalize(s))
    med = np.median(s.reshape(-1, s.shape[2]), axis=0)
    tail = _basic_rhat(_rank_normalize(np.abs(s - med)))
    out = np.maximum(bulk, tail)
    out[bad | ~np.isfinite(out)] = np.inf
    return out if np.ndim(draws) == 3 else out[0]


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def _ess_1d(x: np.ndarray) -> float:
    """Geyer initial-monotone-sequence ESS on a chains x draws array."""
    m, n = x.shape
    if np.ptp(x) == 0 or not np.all(np.isfinite(x)):
        return float("nan")
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    rho = np.empty(n)
    rho[0] = 1.0
    rho[1:] = 1.0 - (mean_var - acov[:, 1:].mean(axis=0)) / var_plus
    # sum consecutive pairs while positive, enforcing monotone decrease
    total = 0.0
    prev = math.inf
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
    tau = max(tau, 1.0 / math.log10(m * n))
    return m * n / tau


def ess(draws) -> np.ndarray:
    """Bulk effective sample size on rank-normalised split chains."""
    x = _as_chains(draws)
    z = _rank_normalize(_split(x))
    out = np.array([_ess_1d(z[:, :, k]) for k in range(z.shape[2])])
    out[_degenerate(x)] = np.nan
    return out if np.ndim(draws) == 3 else out[0]


def hdi(draws_1d, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval spanning ceil(mass * n) sorted draws; ties go to the lowest start."""
    if not 0.0 < mass < 1.0:
        raise ValueError(f"mass must lie in (0, 1), got {mass}")
    x = np.sort(np.asarray(draws_1d, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise ValueError("hdi needs at least 20 draws")
    k = math.ceil(mass * n)
    widths = x[k - 1:] - x[:n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])
