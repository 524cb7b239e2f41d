"""Gradient-based posterior sampling and convergence diagnostics."""
from .diagnostics import (
    converged,
    diagnostics,
    diagnostics_to_json,
    ess_bulk,
    ess_tail,
    hdi,
    split_rhat,
    summarize,
)
from .nuts import DualAveraging, NutsKernel, SamplerError, adaptation_windows, run_chain
from .sampler import (
    PosteriorDraws,
    SamplerConfig,
    chain_rng,
    load_draws,
    sample_posterior,
    save_draws,
)

__all__ = [
    "DualAveraging", "NutsKernel", "PosteriorDraws", "SamplerConfig", "SamplerError",
    "adaptation_windows", "chain_rng", "converged", "diagnostics", "diagnostics_to_json",
    "ess_bulk", "ess_tail", "hdi", "load_draws", "run_chain", "sample_posterior",
    "save_draws", "split_rhat", "summarize",
]
