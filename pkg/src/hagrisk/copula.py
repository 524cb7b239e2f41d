"""Bivariate Gumbel copula.

The density is evaluated in log space in terms of ``l_u = -log u`` and
``l_v = -log v``:

    log c = -A**(1/theta) + l_u + l_v + (theta - 1) (log l_u + log l_v)
            - (2 - 1/theta) log A + log(A**(1/theta) + theta - 1),

with ``A = l_u**theta + l_v**theta`` formed by log-sum-exp so that large
``theta`` does not overflow.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .distributions import positive_stable_sample

CLAMP_EPS = 1e-12


def _check_theta(theta):
    if not np.all(np.asarray(theta) >= 1.0):
        raise ValueError(f"Gumbel parameter must be >= 1, got {theta}")


def gumbel_cdf(u, v, theta):
    """``C(u, v) = exp(-[(-ln u)**theta + (-ln v)**theta]**(1/theta))``."""
    _check_theta(theta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise ValueError("copula arguments must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        lu = -np.log(u)
        lv = -np.log(v)
        log_a = np.logaddexp(theta * np.log(lu), theta * np.log(lv))
    out = np.exp(-np.exp(log_a / theta))
    # exact margins; the log-sum-exp path loses a few ulps there
    out = np.where(u == 1.0, v, np.where(v == 1.0, u, out))
    out = np.where((u == 0) | (v == 0), 0.0, out)
    return out[()] if out.ndim == 0 else out


def upper_tail_dependence(theta):
    """Upper-tail dependence coefficient ``2 - 2**(1/theta)``."""
    _check_theta(theta)
    return 2.0 - 2.0 ** (1.0 / np.asarray(theta, dtype=float))


def gumbel_logpdf_l(lu, lv, theta):
    """Log density as a function of ``l = -log(uniform)``; ``lu, lv > 0``."""
    # ordered arguments make the result exactly symmetric
    lu, lv = np.minimum(lu, lv), np.maximum(lu, lv)
    log_lu = np.log(lu)
    log_lv = np.log(lv)
    log_a = np.logaddexp(theta * log_lu, theta * log_lv)
    b = np.exp(log_a / theta)
    return (
        -b
        + lu
        + lv
        + (theta - 1.0) * (log_lu + log_lv)
        - (2.0 - 1.0 / theta) * log_a
        + np.log(b + theta - 1.0)
    )


def gumbel_logpdf_l_grad(lu, lv, theta):
    """Log density and its partials with respect to ``lu``, ``lv`` and ``theta``."""
    log_lu = np.log(lu)
    log_lv = np.log(lv)
    log_a = np.logaddexp(theta * log_lu, theta * log_lv)
    pu = np.exp(theta * log_lu - log_a)
    pv = np.exp(theta * log_lv - log_a)
    b = np.exp(log_a / theta)
    k = 2.0 - 1.0 / theta
    denom = b + theta - 1.0
    val = (
        -b + lu + lv + (theta - 1.0) * (log_lu + log_lv) - k * log_a + np.log(denom)
    )
    # dB/dl = B * dlogA/dl / theta, dlogA/dl = theta * p / l
    coef = -b + b / denom
    d_lu = coef * pu / lu + 1.0 + (theta - 1.0) / lu - k * theta * pu / lu
    d_lv = coef * pv / lv + 1.0 + (theta - 1.0) / lv - k * theta * pv / lv
    dlogA = pu * log_lu + pv * log_lv
    db = b * (dlogA / theta - log_a / theta**2)
    d_theta = (
        -db
        + log_lu
        + log_lv
        - log_a / theta**2
        - k * dlogA
        + (db + 1.0) / denom
    )
    return val, d_lu, d_lv, d_theta


def gumbel_logpdf(u, v, theta):
    """Log copula density at ``(u, v)``.

    Arguments at or beyond the open unit interval edges are clamped to
    ``[CLAMP_EPS, 1 - CLAMP_EPS]``. ``theta == 1`` is the independence copula
    and returns exactly 0.
    """
    _check_theta(theta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(np.isfinite(theta))):
        raise ValueError("non-finite copula argument")
    if np.all(np.asarray(theta) == 1.0):
        out = np.zeros(np.broadcast(u, v).shape)
        return out[()] if out.ndim == 0 else out
    u = np.clip(u, CLAMP_EPS, 1.0 - CLAMP_EPS)
    v = np.clip(v, CLAMP_EPS, 1.0 - CLAMP_EPS)
    out = gumbel_logpdf_l(-np.log(u), -np.log(v), theta)
    return out[()] if np.ndim(out) == 0 else out


def gumbel_sample_exponents(theta, rng: np.random.Generator, size=None):
    """Marshall-Olkin draw returned as ``(-log U, -log V)``.

    ``M`` is positive stable with index ``a = 1/theta`` and ``E1, E2`` are unit
    exponentials; ``-log U = (E1/M)**a``. ``theta`` may be an array matching
    ``size``; entries equal to 1 give independent uniforms. Keeping the
    exponents avoids the rounding of ``U`` to exactly 1.
    """
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    if np.all(theta == 1.0):
        e1 = rng.standard_exponential(size)
        e2 = rng.standard_exponential(size)
        return e1, e2
    indep = theta == 1.0
    a = np.where(indep, 0.5, 1.0 / theta)
    m = positive_stable_sample(a, rng, size)
    e1 = rng.standard_exponential(size)
    e2 = rng.standard_exponential(size)
    xu = np.where(indep, e1, (e1 / m) ** a)
    xv = np.where(indep, e2, (e2 / m) ** a)
    return xu, xv


def gumbel_sample(theta, rng: np.random.Generator, size=None):
    """Draw ``(U, V)`` from the Gumbel copula by the Marshall-Olkin frailty construction.

    ``M`` is positive stable with index ``1/theta``; with ``E1, E2`` unit
    exponentials, ``U = exp(-(E1/M)**(1/theta))`` and likewise for ``V``.
    ``theta == 1`` draws two independent uniforms.
    """
    xu, xv = gumbel_sample_exponents(theta, rng, size)
    return np.exp(-xu), np.exp(-xv)


def normal_scores(x):
    """``Phi^{-1}(exp(-x))`` evaluated without forming ``exp(-x)`` near 1."""
    x = np.asarray(x, dtype=float)
    small = x < np.log(2.0)  # U > 1/2: work with the upper tail 1 - U
    with np.errstate(over="ignore"):
        out = np.where(small, -special.ndtri(-np.expm1(-np.where(small, x, 1.0))),
                       special.ndtri(np.exp(-np.where(small, 1.0, x))))
    return out[()] if out.ndim == 0 else out
