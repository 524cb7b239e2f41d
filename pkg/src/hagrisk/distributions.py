"""Scalar distribution kernels: GPD, positive stable, standard normal, Poisson.

All samplers take a caller-owned ``numpy.random.Generator``; nothing here
touches global random state.

The GPD kernels assume a strictly positive shape. Model-facing code truncates
the shape to ``[XI_MIN, XI_MAX]`` so the exponential limit ``xi -> 0`` is never
reached and is not special-cased.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

XI_MIN = 0.01
XI_MAX = 2.0

# numpy's Poisson sampler switches from inversion to PTRS transformed
# rejection at this rate (numpy/random/src/distributions/distributions.c).
POISSON_INVERSION_LIMIT = 10.0


@dataclass(frozen=True)
class GpdParams:
    """Generalized Pareto scale ``sigma`` (> 0) and shape ``xi`` (> 0)."""

    sigma: float
    xi: float

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"GPD scale must be positive and finite, got {self.sigma}")
        if not (self.xi > 0 and np.isfinite(self.xi)):
            raise ValueError(f"GPD shape must be positive, got {self.xi}")


def gpd_logpdf(y, sigma, xi):
    """Log density of the GPD for exceedances ``y >= 0``.

    Returns ``-inf`` where ``1 + xi * y / sigma <= 0`` or ``y < 0`` instead of
    raising, so that an MCMC proposal outside the support is simply rejected.
    Broadcasts over array arguments.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = np.asarray(xi, dtype=float)
    arg = 1.0 + xi * y / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(sigma) - (1.0 + 1.0 / xi) * np.log(arg)
    out = np.where((arg > 0) & (y >= 0), out, -np.inf)
    return out[()] if out.ndim == 0 else out


def gpd_cdf(y, sigma, xi):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    return -np.expm1(-np.log1p(xi * y / sigma) / xi)


def gpd_quantile(p, sigma, xi):
    """Inverse CDF, ``(sigma / xi) * ((1 - p)**(-xi) - 1)``.

    Raises ``ValueError`` for ``p`` outside ``[0, 1)``: the upper quantile is
    unbounded for a positive shape.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p >= 1) or np.any(np.isnan(p)):
        raise ValueError("GPD quantile requires 0 <= p < 1")
    # expm1/log1p keep accuracy for p near 0
    out = sigma / xi * np.expm1(-xi * np.log1p(-p))
    return out[()] if np.ndim(out) == 0 else out


def gpd_sample(sigma, xi, rng: np.random.Generator, size=None):
    """Draw GPD variates by inverse-CDF transform of uniforms on ``[0, 1)``."""
    u = rng.random(size)
    return sigma / xi * np.expm1(-xi * np.log1p(-u))


def positive_stable_sample(a: float, rng: np.random.Generator, size=None):
    """Positive stable variates with Laplace transform ``E[exp(-t M)] = exp(-t**a)``.

    Chambers-Mallows-Stuck construction from one uniform angle on
    ``(-pi/2, pi/2)`` and one unit exponential. ``a`` (scalar or array
    broadcastable to ``size``) must lie strictly inside ``(0, 1)``; ``a == 1``
    is the degenerate point mass at 1 and callers route it elsewhere.
    """
    a = np.asarray(a, dtype=float)
    if not np.all((a > 0.0) & (a < 1.0)):
        raise ValueError(f"stability index must lie in (0, 1), got {a}")
    v = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.standard_exponential(size)
    shifted = a * (v + 0.5 * np.pi)
    m = (np.sin(shifted) / np.cos(v) ** (1.0 / a)) * (
        np.cos(v - shifted) / w
    ) ** ((1.0 - a) / a)
    return m


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_logcdf(x):
    return special.log_ndtr(x)


def std_normal_quantile(p):
    """Inverse standard normal CDF. Returns ``-inf``/``+inf`` at ``p`` = 0/1."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probability outside [0, 1]")
    out = special.ndtri(p)
    return out[()] if out.ndim == 0 else out


def poisson_sample(lam, rng: np.random.Generator, size=None):
    """Poisson counts; rejects negative or non-finite rates."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam_arr)) or np.any(lam_arr < 0):
        raise ValueError(f"Poisson rate must be finite and non-negative, got {lam}")
    return rng.poisson(lam_arr, size)
