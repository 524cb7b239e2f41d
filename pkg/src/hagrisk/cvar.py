"""Posterior-predictive annual-loss simulation and VaR/CVaR estimation.

Each simulated year picks one posterior draw uniformly at random, draws a
loss count and that many GPD exceedances, and records
``S = sum_k (u + Y_k)``. Simulations are generated in fixed-size blocks;
block ``b`` uses ``SeedSequence(seed, spawn_key=(b,))``, so the output for a
given ``(seed, M, block_size)`` does not depend on how many workers run it.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .copula import gumbel_sample_exponents, normal_scores
from .models import MAX_BRANCHING
from .panel import _atomic_write

DEFAULT_LEVELS = (0.999, 0.9995, 0.99995)
DEFAULT_M = 10**6
DEFAULT_BLOCK = 1 << 16
LAMBDA_CAP = 500.0
MIN_TAIL = 10

PARAM_NAMES = {
    "indep": ("mu_lambda", "mu_sigma", "xi"),
    "shared": ("mu_lambda", "alpha", "mu_sigma", "beta", "xi"),
    "hag": ("phi", "mu_lambda", "alpha", "eta", "kappa", "mu_sigma", "beta_s", "xi", "theta"),
}


@dataclass
class CvarReport:
    """VaR/CVaR at each level with the CVaR Monte Carlo standard error."""

    model: str
    levels: list
    var: list
    cvar: list
    mc_standard_error: list
    n_tail: list
    m_draws: int
    seed: int | None = None
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["se"] = d.pop("mc_standard_error")
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CvarReport":
        d = json.loads(text)
        d["mc_standard_error"] = d.pop("se")
        return cls(**d)

    def to_table(self, scale=1e6) -> str:
        rows = [("Level", "VaR", "CVaR", "MC s.e.", "tail n")]
        for k, q in enumerate(self.levels):
            rows.append((
                f"{100 * q:.3f}%",
                f"{self.var[k] / scale:.1f}",
                f"{self.cvar[k] / scale:.1f}",
                f"{self.mc_standard_error[k] / scale:.2f}",
                str(self.n_tail[k]),
            ))
        head = f"{self.model}: M={self.m_draws} seed={self.seed} (millions)"
        return head + "\n" + _align(rows)


def _align(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for j, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def save_report(report: CvarReport, path):
    _atomic_write(path, report.to_json() + "\n")


def load_report(path) -> CvarReport:
    with open(path) as fh:
        return CvarReport.from_json(fh.read())


# -- simulation -----------------------------------------------------------------

def _aggregate(counts, sigma, xi, u, rng):
    """``S_i = sum of counts[i] draws of (u + GPD(sigma[i], xi[i]))``."""
    total = int(counts.sum())
    owner = np.repeat(np.arange(counts.size), counts)
    p = rng.random(total)
    s, x = sigma[owner], xi[owner]
    y = s / x * np.expm1(-x * np.log1p(-p))
    return counts * u + np.bincount(owner, weights=y, minlength=counts.size)


def simulate_losses(tag: str, params: dict, u: float, rng: np.random.Generator,
                    fixed_count=None) -> np.ndarray:
    """Vectorized annual losses, one per entry of the parameter arrays in ``params``.

    ``params`` maps each of the model's parameter names to an array of equal
    length. ``fixed_count`` replaces the Poisson draw by a constant count,
    which is useful for checks with a known answer.
    """
    if tag not in PARAM_NAMES:
        raise ValueError(f"unknown model {tag!r}")
    p = {k: np.atleast_1d(np.asarray(params[k], dtype=float)) for k in PARAM_NAMES[tag]}
    n = p["xi"].size

    if tag == "indep":
        lam = np.exp(p["mu_lambda"])
        sigma = np.exp(p["mu_sigma"])
    elif tag == "shared":
        z = rng.standard_normal(n)
        lam = np.minimum(np.exp(p["mu_lambda"] + p["alpha"] * z), LAMBDA_CAP)
        sigma = np.exp(p["mu_sigma"] + p["beta"] * z)
    else:
        r = p["eta"] / np.expm1(p["kappa"])
        if np.any(r >= MAX_BRANCHING):
            raise ValueError("branching ratio must stay below 0.95")
        xu, xv = gumbel_sample_exponents(p["theta"], rng, n)
        w_f, w_s = normal_scores(xu), normal_scores(xv)
        phi = p["phi"]
        z = rng.standard_normal(n) * np.abs(phi) / np.sqrt(1.0 - phi**2) + w_f
        with np.errstate(over="ignore"):
            lam = np.minimum(np.exp(p["mu_lambda"] + p["alpha"] * z) / (1.0 - r), LAMBDA_CAP)
        sigma = np.exp(p["mu_sigma"] + p["beta_s"] * w_s)

    if fixed_count is None:
        counts = rng.poisson(np.broadcast_to(lam, (n,)))
    else:
        counts = np.full(n, int(fixed_count), dtype=np.int64)
    return _aggregate(counts, np.broadcast_to(sigma, (n,)), p["xi"], u, rng)


def _as_mapping(draw) -> dict:
    if is_dataclass(draw):
        return asdict(draw)
    return dict(draw)


def simulate_annual_loss(tag: str, draw, u: float, rng: np.random.Generator,
                         fixed_count=None) -> float:
    """One annual loss under a single parameter vector (dataclass or mapping)."""
    return float(simulate_losses(tag, _as_mapping(draw), u, rng, fixed_count)[0])


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _run_block(args):
    tag, table, u, seed, block, size, fixed_count = args
    rng = _block_rng(seed, block)
    idx = rng.integers(0, table.shape[0], size)
    params = dict(zip(PARAM_NAMES[tag], table[idx].T))
    return simulate_losses(tag, params, u, rng, fixed_count)


def simulate_predictive(tag: str, table, u: float, M: int, seed: int, workers=1,
                        block_size=DEFAULT_BLOCK, fixed_count=None) -> np.ndarray:
    """``M`` posterior-predictive annual losses.

    ``table`` is a ``(J, n_params)`` array of posterior draws in the model's
    parameter order; every simulation draws its row uniformly.
    """
    table = np.ascontiguousarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != len(PARAM_NAMES[tag]) or table.shape[0] < 1:
        raise ValueError(f"posterior table must have shape (J, {len(PARAM_NAMES[tag])})")
    n_blocks = math.ceil(M / block_size)
    jobs = [(tag, table, u, seed, b, min(block_size, M - b * block_size), fixed_count)
            for b in range(n_blocks)]
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    return np.concatenate(parts)


# -- risk measures --------------------------------------------------------------

def var_cvar(losses, levels):
    """Empirical VaR (order statistic ``ceil(q M)``, no interpolation), CVaR,
    CVaR standard error and tail count at each level."""
    s = np.sort(np.asarray(losses, dtype=float))
    m = s.size
    out = []
    for q in levels:
        # exact ceil(q M) on the decimal value of q, immune to float rounding
        k = min(max(math.ceil(Fraction(repr(float(q))) * m), 1), m)
        var = s[k - 1]
        first = np.searchsorted(s, var, side="left")
        tail = s[first:]
        se = tail.std(ddof=1) / math.sqrt(tail.size) if tail.size > 1 else float("nan")
        # mean of the excesses keeps CVaR >= VaR under rounding
        cvar = var + float(np.mean(tail - var))
        out.append((float(var), cvar, float(se), int(tail.size)))
    return out


def _check_levels(levels):
    levels = [float(q) for q in levels]
    if not levels or any(not 0.0 < q < 1.0 for q in levels):
        raise ValueError("levels must lie in (0, 1)")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    return levels


def estimate_cvar(draws, u: float, levels=DEFAULT_LEVELS, M: int = DEFAULT_M, seed: int = 0,
                  workers: int = 1, block_size: int = DEFAULT_BLOCK,
                  fixed_count=None) -> CvarReport:
    """Posterior-predictive VaR and CVaR from a ``PosteriorDraws``.

    A level with fewer than 10 simulations at or above its VaR gets a
    warning in the report. ``M`` below ``10 / (1 - max(levels))`` is
    accepted but always produces such a warning.
    """
    levels = _check_levels(levels)
    if M < 1:
        raise ValueError("M must be positive")
    table = np.column_stack([np.ravel(draws[name]) for name in PARAM_NAMES[draws.model]])
    losses = simulate_predictive(draws.model, table, u, M, seed, workers, block_size, fixed_count)
    rows = var_cvar(losses, levels)
    warnings = []
    if M < 10.0 / (1.0 - levels[-1]):
        warnings.append(f"M={M} is below 10/(1-q) for q={levels[-1]}")
    for q, (_, _, _, n_tail) in zip(levels, rows):
        if n_tail < MIN_TAIL:
            warnings.append(f"only {n_tail} tail samples at level {q}")
    return CvarReport(
        model=draws.model,
        levels=levels,
        var=[r[0] for r in rows],
        cvar=[r[1] for r in rows],
        mc_standard_error=[r[2] for r in rows],
        n_tail=[r[3] for r in rows],
        m_draws=int(M),
        seed=seed,
        warnings=warnings,
    )


def compare_reports(reports, scale=1e6) -> str:
    """Side-by-side CVaR table; adds an HAG/independent ratio column when both are present."""
    if not reports:
        raise ValueError("no reports given")
    levels = reports[0].levels
    for r in reports[1:]:
        if not np.allclose(r.levels, levels, rtol=0, atol=1e-12):
            raise ValueError(f"levels of {r.model!r} differ from those of {reports[0].model!r}")
    by_model = {r.model: r for r in reports}
    labels = {"indep": "Independent", "shared": "Shared factor", "hag": "Hawkes-AR-Gumbel"}
    header = ["Level"] + [labels.get(r.model, r.model) for r in reports]
    ratio = "indep" in by_model and "hag" in by_model
    if ratio:
        header.append("Ratio (HAG/Indep.)")
    rows = [tuple(header)]
    for k, q in enumerate(levels):
        row = [f"{100 * q:.3f}%"] + [f"{r.cvar[k] / scale:.1f}" for r in reports]
        if ratio:
            row.append(f"{by_model['hag'].cvar[k] / by_model['indep'].cvar[k]:.2f}x")
        rows.append(tuple(row))
    return _align(rows)
