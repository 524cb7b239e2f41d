"""Rank-normalized split-R-hat, bulk/tail ESS, HDI and posterior summaries.

Inputs are ``(chains, draws)`` arrays. ESS sums autocorrelations with Geyer's
initial positive sequence followed by the initial monotone adjustment.
"""
from __future__ import annotations

import json

import numpy as np
from scipy import stats


def _check(ary):
    ary = np.asarray(ary, dtype=float)
    if ary.ndim != 2:
        raise ValueError("expected a (chains, draws) array")
    if ary.shape[0] < 2 or ary.shape[1] < 4:
        raise ValueError("need at least 2 chains with 4 draws each")
    return ary


def _split(ary):
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def _z_scale(ary):
    ranks = stats.rankdata(ary, method="average").reshape(ary.shape)
    return stats.norm.ppf((ranks - 0.375) / (ary.size + 0.25))


def _rhat_basic(ary):
    n = ary.shape[1]
    chain_mean = ary.mean(axis=1)
    within = ary.var(axis=1, ddof=1).mean()
    between = n * chain_mean.var(ddof=1)
    if within == 0:
        return np.nan
    return float(np.sqrt(((n - 1) / n * within + between / n) / within))


def split_rhat(ary) -> float:
    """Rank-normalized split-R-hat: max of the bulk and folded (tail) versions.

    Returns ``nan`` for constant input, where the statistic is undefined.
    """
    ary = _check(ary)
    if np.ptp(ary) == 0:
        return np.nan
    bulk = _rhat_basic(_z_scale(_split(ary)))
    folded = np.abs(ary - np.median(ary))
    tail = _rhat_basic(_z_scale(_split(folded))) if np.ptp(folded) > 0 else bulk
    return max(bulk, tail)


def _autocov(x):
    n = x.size
    x = x - x.mean()
    m = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n]
    return ac / n


def _ess(ary) -> float:
    n_chain, n_draw = ary.shape
    if np.ptp(ary) == 0:
        return np.nan
    acov = np.array([_autocov(c) for c in ary])
    chain_mean = ary.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n_draw - 2 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1]
    tau = max(tau, 1.0 / np.log10(n_chain * n_draw))
    return float(n_chain * n_draw / tau)


def ess_bulk(ary) -> float:
    ary = _check(ary)
    if np.ptp(ary) == 0:
        return np.nan
    return _ess(_z_scale(_split(ary)))


def _ess_quantile(ary, prob):
    q = np.quantile(ary, prob)
    ind = (ary <= q).astype(float)
    return _ess(_split(ind))


def ess_tail(ary) -> float:
    """Minimum of the ESS of the 5% and 95% quantile indicators."""
    ary = _check(ary)
    if np.ptp(ary) == 0:
        return np.nan
    return min(_ess_quantile(ary, 0.05), _ess_quantile(ary, 0.95))


def hdi(x, prob=0.94):
    """Shortest interval holding ``prob`` of the sorted draws; ties go to the lowest."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = x.size
    k = int(np.floor(prob * n))
    if k >= n:
        return float(x[0]), float(x[-1])
    k = max(k, 1) if n > 1 else 0
    widths = x[k:] - x[: n - k]
    i = int(np.argmin(widths))  # argmin returns the first minimum
    return float(x[i]), float(x[i + k])


def summarize(draws, names=None, prob=0.94) -> dict:
    """Per-parameter mean, sd, HDI bounds, R-hat and ESS of a ``PosteriorDraws``."""
    names = list(draws.param_names if names is None else names)
    out = {}
    for name in names:
        a = draws[name]
        lo, hi = hdi(a, prob)
        enough = a.shape[0] >= 2 and a.shape[1] >= 4
        out[name] = {
            "mean": float(a.mean()),
            "sd": float(a.std(ddof=1)) if a.size > 1 else 0.0,
            "hdi94_low": lo,
            "hdi94_high": hi,
            "rhat": split_rhat(a) if enough else np.nan,
            "ess_bulk": ess_bulk(a) if enough else np.nan,
            "ess_tail": ess_tail(a) if enough else np.nan,
        }
    return out


def diagnostics(draws) -> dict:
    """Summary of every structural parameter plus the divergence count."""
    return {"parameters": summarize(draws), "divergences": draws.divergences,
            "draws": int(draws.n_chains * draws.n_draws)}


def converged(diag: dict, rhat_max=1.01, ess_min=400.0) -> bool:
    return all(
        v["rhat"] < rhat_max and v["ess_bulk"] > ess_min for v in diag["parameters"].values()
    )


def diagnostics_to_json(diag: dict) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, float) and not np.isfinite(o):
            return None
        return o

    return json.dumps(clean(diag), indent=2)
