"""Posterior sampling for the three models and draw persistence."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..models import MAX_BRANCHING, make_model
from ..panel import PanelDataset, _atomic_write
from .nuts import SamplerError, run_chain

log = logging.getLogger(__name__)

MAX_INIT_ATTEMPTS = 100


@dataclass
class SamplerConfig:
    chains: int = 2
    warmup: int = 2000
    draws: int = 2000
    target_accept: float | None = None  # None: 0.98 for hag, 0.90 otherwise
    max_tree_depth: int = 10
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.draws < 1 or self.warmup < 0:
            raise ValueError("chains and draws must be positive, warmup non-negative")
        if self.target_accept is not None and not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be positive")


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Random stream of chain ``chain``: ``SeedSequence(seed, spawn_key=(chain,))``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


@dataclass
class PosteriorDraws:
    """Natural-scale draws, shape ``(chains, draws, columns)``.

    Columns are the model's structural parameters followed by its latent
    innovations (``column_names``). ``sample_stats`` maps each per-transition
    statistic to a ``(chains, draws)`` array; ``warmup_stats`` likewise for
    the warmup phase.
    """

    model: str
    column_names: list
    n_struct: int
    samples: np.ndarray
    sample_stats: dict = field(default_factory=dict)
    warmup_stats: dict = field(default_factory=dict)
    step_size: np.ndarray | None = None
    inv_mass: np.ndarray | None = None
    seed: int | None = None

    @property
    def param_names(self):
        return self.column_names[: self.n_struct]

    @property
    def n_chains(self):
        return self.samples.shape[0]

    @property
    def n_draws(self):
        return self.samples.shape[1]

    def __getitem__(self, name) -> np.ndarray:
        return self.samples[:, :, self.column_names.index(name)]

    def pooled(self, struct_only=True) -> np.ndarray:
        cols = self.n_struct if struct_only else self.samples.shape[2]
        return self.samples[:, :, :cols].reshape(-1, cols)

    @property
    def divergences(self) -> int:
        d = self.sample_stats.get("diverging")
        return int(d.sum()) if d is not None else 0


def _run_one(args):
    tag, data, priors, cfg, chain = args
    model = make_model(tag, data, priors) if priors is not None else make_model(tag, data)
    rng = chain_rng(cfg.seed, chain)
    for _ in range(MAX_INIT_ATTEMPTS):
        q0 = model.initial_point(rng)
        if math.isfinite(model.logp(q0)):
            break
    else:
        raise SamplerError(f"chain {chain}: no finite starting point after {MAX_INIT_ATTEMPTS} jitters")
    target = cfg.target_accept if cfg.target_accept is not None else model.target_accept
    res = run_chain(model.logp_and_grad, q0, rng, cfg.warmup, cfg.draws, target, cfg.max_tree_depth)
    res["natural"] = np.array([model.to_natural(q) for q in res["draws"]])
    if res["depth_saturations"]:
        log.info("chain %d: %d transitions hit max tree depth", chain, res["depth_saturations"])
    return res


def sample_posterior(tag: str, data: PanelDataset, cfg: SamplerConfig = SamplerConfig(),
                     priors=None) -> PosteriorDraws:
    """Run ``cfg.chains`` independent NUTS chains on model ``tag`` and collect natural-scale draws.

    Chains run in worker processes when ``cfg.workers > 1``; results are
    identical either way and merged in chain order.
    """
    model = make_model(tag, data) if priors is None else make_model(tag, data, priors)
    jobs = [(tag, data, priors, cfg, c) for c in range(cfg.chains)]
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, cfg.chains)) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    samples = np.stack([r["natural"] for r in results])
    stat_names = results[0]["stats"].keys()
    w = cfg.warmup
    sample_stats = {k: np.stack([r["stats"][k][w:] for r in results]) for k in stat_names}
    warmup_stats = {k: np.stack([r["stats"][k][:w] for r in results]) for k in stat_names}
    draws = PosteriorDraws(
        model=tag,
        column_names=model.column_names,
        n_struct=model.n_struct,
        samples=samples,
        sample_stats=sample_stats,
        warmup_stats=warmup_stats,
        step_size=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
        seed=cfg.seed,
    )
    if tag == "hag":
        eta, kappa = draws["eta"], draws["kappa"]
        if not np.all(eta / np.expm1(kappa) < MAX_BRANCHING):
            raise SamplerError("retained draw with branching ratio >= 0.95")
    return draws


# -- columnar text format -------------------------------------------------------
#
#   # model=hag seed=1 n_struct=9
#   chain iteration diverging phi mu_lambda ... w_s[14]
#   0 0 0 0.71234 ...
#
# Values are written with repr, so files round-trip exactly.

def draws_to_text(d: PosteriorDraws) -> str:
    lines = [f"# model={d.model} seed={d.seed} n_struct={d.n_struct}"]
    lines.append(" ".join(["chain", "iteration", "diverging", *d.column_names]))
    div = d.sample_stats.get("diverging", np.zeros(d.samples.shape[:2]))
    for c in range(d.n_chains):
        for i in range(d.n_draws):
            vals = " ".join(repr(float(v)) for v in d.samples[c, i])
            lines.append(f"{c} {i} {int(div[c, i])} {vals}")
    return "\n".join(lines) + "\n"


def save_draws(d: PosteriorDraws, path):
    _atomic_write(path, draws_to_text(d))


def load_draws(path) -> PosteriorDraws:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# model=...' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    header = lines[1].split()
    if header[:3] != ["chain", "iteration", "diverging"]:
        raise ValueError(f"{path}: unexpected column header")
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[2:] if ln.strip()])
    chains = rows[:, 0].astype(int)
    n_chains = chains.max() + 1
    n_draws = rows.shape[0] // n_chains
    if n_chains * n_draws != rows.shape[0]:
        raise ValueError(f"{path}: ragged chains")
    samples = rows[:, 3:].reshape(n_chains, n_draws, -1)
    seed = meta.get("seed")
    return PosteriorDraws(
        model=meta["model"],
        column_names=header[3:],
        n_struct=int(meta["n_struct"]),
        samples=samples,
        sample_stats={"diverging": rows[:, 2].reshape(n_chains, n_draws)},
        seed=None if seed in (None, "None") else int(seed),
    )
