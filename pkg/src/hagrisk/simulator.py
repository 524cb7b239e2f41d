"""Ground-truth panels drawn from the Hawkes-AR-Gumbel data-generating process."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copula import gumbel_sample_exponents, normal_scores
from .distributions import gpd_sample
from .models import HagParams, LatentState, ar1_scan
from .panel import PanelDataset, export_panel, import_panel  # noqa: F401  (re-exported)


@dataclass
class DgpTruth:
    params: HagParams
    latents: LatentState
    intensities: np.ndarray


def simulate_panel(p: HagParams, T: int, u: float, seed) -> tuple[PanelDataset, DgpTruth]:
    """Simulate ``T`` years of counts and exceedances above threshold ``u``.

    Per year: a Gumbel pair mapped to normal innovations, the AR(1) stress
    (``z_1 = w_f_1``), the Hawkes intensity from past counts, a Poisson count
    and GPD exceedances at scale ``exp(mu_sigma + beta_s w_s)``. The same
    ``seed`` always yields the same panel.
    """
    p.validate()
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    xu, xv = gumbel_sample_exponents(p.theta, rng, T)
    w_f = normal_scores(xu)
    w_s = normal_scores(xv)
    z = ar1_scan(p.phi, w_f)

    decay = np.exp(-p.kappa)
    counts = np.zeros(T, dtype=np.int64)
    lam = np.zeros(T)
    excite = 0.0  # sum_{s<t} N_s exp(-kappa (t - s)), see models.excitation
    with np.errstate(over="ignore"):
        for t in range(T):
            lam[t] = np.exp(p.mu_lambda + p.alpha * z[t]) + p.eta * excite
            if not np.isfinite(lam[t]) or lam[t] > 1e15:
                raise OverflowError(f"intensity overflow in year {t + 1}: {lam[t]}")
            counts[t] = rng.poisson(lam[t])
            excite = decay * (excite + float(counts[t]))

    sigma = np.exp(p.mu_sigma + p.beta_s * w_s)
    exceed = [gpd_sample(sigma[t], p.xi, rng, int(counts[t])) for t in range(T)]
    # u = 0 exactly gives y = 0, which is not a strict exceedance
    exceed = [np.where(e > 0, e, np.nextafter(0.0, 1.0)) for e in exceed]
    data = PanelDataset(u, counts, exceed)
    return data, DgpTruth(p, LatentState(w_f, w_s, z), lam)
