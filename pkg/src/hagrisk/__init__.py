"""Bayesian operational-loss models with frequency-severity dependence.

Three nested models of an annual loss panel (independent LDA, shared
latent factor, Hawkes-AR-Gumbel), NUTS inference, a ground-truth simulator
and posterior-predictive VaR/CVaR estimation.
"""
from .models import (
    DEFAULT_PRIORS,
    TABLE2_PARAMS,
    TABLE2_THRESHOLD,
    HagParams,
    IndepParams,
    LatentState,
    PriorSpec,
    SharedParams,
    make_model,
)
from .panel import PanelDataset, export_panel, import_panel
from .simulator import DgpTruth, simulate_panel

__version__ = "0.1.0"
