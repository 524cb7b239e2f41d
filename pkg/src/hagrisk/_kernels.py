"""Compiled log-posterior/gradient kernels on the unconstrained scale.

Layouts of ``q`` (natural parameter in brackets):

indep   mu_lambda, mu_sigma, logit-xi
shared  mu_lambda, log alpha, mu_sigma, log beta, logit-xi, z[T]
hag     logit phi, mu_lambda, log alpha, log eta, log kappa, mu_sigma,
        log beta_s, logit-xi, log(theta - 1), w_f[T], w_s[T]

``logit-xi`` is the logit of ``(xi - xi_low) / (xi_high - xi_low)``.
``hyper`` packs the prior hyperparameters in ``PriorSpec`` field order, with
the log normalizer of the truncated xi prior appended.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
HALF_LOG_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)
SQRT1_2 = math.sqrt(0.5)
MAX_BRANCHING = 0.95

(PHI_A, PHI_B, MUL_LOC, MUL_SCALE, ALPHA_SCALE, ETA_SCALE, KAPPA_SCALE,
 MUS_LOC, MUS_SCALE, BETA_SCALE, XI_LOC, XI_SCALE, XI_LOW, XI_HIGH,
 THETA_SCALE, XI_LOGNORM) = range(16)


@njit(cache=True)
def log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def log_ndtr(x):
    if x > 6.0:
        return math.log1p(-0.5 * math.erfc(x * SQRT1_2))
    if x > -37.0:
        return math.log(0.5 * math.erfc(-x * SQRT1_2))
    # Mills-ratio asymptotic series
    x2 = x * x
    s = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)
    return -0.5 * x2 - 0.5 * LOG_2PI - math.log(-x) + math.log(s)


@njit(cache=True)
def _halfnormal_raw(x_log, scale):
    # log HalfNormal(exp(x)) + x, and d/dx
    v = math.exp(x_log) / scale
    return HALF_LOG_2_OVER_PI - math.log(scale) - 0.5 * v * v + x_log, 1.0 - v * v


@njit(cache=True)
def _normal(x, loc, scale):
    d = (x - loc) / scale
    return -0.5 * d * d - math.log(scale) - 0.5 * LOG_2PI, -d / scale


@njit(cache=True)
def _xi_prior_raw(x_xi, dlik_dxi, hyper):
    """Truncated-normal prior on xi plus scaled-logit Jacobian; value and d/dx_xi."""
    s = sigmoid(x_xi)
    width = hyper[XI_HIGH] - hyper[XI_LOW]
    xi = hyper[XI_LOW] + width * s
    v, d = _normal(xi, hyper[XI_LOC], hyper[XI_SCALE])
    v += -hyper[XI_LOGNORM] + math.log(width) + log_sigmoid(x_xi) + log_sigmoid(-x_xi)
    return v, (dlik_dxi + d) * width * s * (1.0 - s) + (1.0 - 2.0 * s)


@njit(cache=True)
def _gpd(y, year_idx, s_year, xi, d_s_year):
    """GPD log-likelihood with per-year log scale; accumulates d/ds into d_s_year."""
    c = 1.0 + 1.0 / xi
    val = 0.0
    sum_lq = 0.0
    sum_ratio = 0.0
    for i in range(y.size):
        t = year_idx[i]
        x = xi * y[i] * math.exp(-s_year[t])
        lq = math.log1p(x)
        ratio = x / (1.0 + x)
        val -= s_year[t] + c * lq
        sum_lq += lq
        sum_ratio += ratio
        d_s_year[t] += -1.0 + c * ratio
    d_xi = sum_lq / (xi * xi) - c / xi * sum_ratio
    return val, d_xi


@njit(cache=True)
def indep_logp_grad(q, n, y, year_idx, log_fact, hyper):
    T = n.size
    grad = np.zeros(3)
    mu_l, mu_s, x_xi = q[0], q[1], q[2]
    lam = math.exp(mu_l)
    n_tot = n.sum()
    val = n_tot * mu_l - T * lam - log_fact
    d_mu_l = n_tot - T * lam

    xi = hyper[XI_LOW] + (hyper[XI_HIGH] - hyper[XI_LOW]) * sigmoid(x_xi)
    s_year = np.full(T, mu_s)
    d_s = np.zeros(T)
    v, d_xi = _gpd(y, year_idx, s_year, xi, d_s)
    val += v

    v, d = _normal(mu_l, hyper[MUL_LOC], hyper[MUL_SCALE])
    val += v
    grad[0] = d_mu_l + d
    v, d = _normal(mu_s, hyper[MUS_LOC], hyper[MUS_SCALE])
    val += v
    grad[1] = d_s.sum() + d
    v, grad[2] = _xi_prior_raw(x_xi, d_xi, hyper)
    val += v
    return val, grad


@njit(cache=True)
def shared_logp_grad(q, n, y, year_idx, log_fact, hyper):
    T = n.size
    grad = np.zeros(5 + T)
    mu_l, la, mu_s, lb, x_xi = q[0], q[1], q[2], q[3], q[4]
    z = q[5:]
    alpha = math.exp(la)
    beta = math.exp(lb)

    val = -log_fact
    d_mu_l = 0.0
    d_alpha = 0.0
    s_year = np.empty(T)
    for t in range(T):
        e = mu_l + alpha * z[t]
        lam = math.exp(e)
        val += n[t] * e - lam
        g = n[t] - lam
        d_mu_l += g
        d_alpha += g * z[t]
        grad[5 + t] = g * alpha - z[t]
        val -= 0.5 * z[t] * z[t] + 0.5 * LOG_2PI
        s_year[t] = mu_s + beta * z[t]

    xi = hyper[XI_LOW] + (hyper[XI_HIGH] - hyper[XI_LOW]) * sigmoid(x_xi)
    d_s = np.zeros(T)
    v, d_xi = _gpd(y, year_idx, s_year, xi, d_s)
    val += v
    d_beta = 0.0
    for t in range(T):
        d_beta += d_s[t] * z[t]
        grad[5 + t] += d_s[t] * beta

    v, d = _normal(mu_l, hyper[MUL_LOC], hyper[MUL_SCALE])
    val += v
    grad[0] = d_mu_l + d
    v, dj = _halfnormal_raw(la, hyper[ALPHA_SCALE])
    val += v
    grad[1] = d_alpha * alpha + dj
    v, d = _normal(mu_s, hyper[MUS_LOC], hyper[MUS_SCALE])
    val += v
    grad[2] = d_s.sum() + d
    v, dj = _halfnormal_raw(lb, hyper[BETA_SCALE])
    val += v
    grad[3] = d_beta * beta + dj
    v, grad[4] = _xi_prior_raw(x_xi, d_xi, hyper)
    val += v
    return val, grad


@njit(cache=True)
def _gumbel_l_grad(lu, lv, theta):
    log_lu = math.log(lu)
    log_lv = math.log(lv)
    a1 = theta * log_lu
    a2 = theta * log_lv
    m = max(a1, a2)
    log_a = m + math.log(math.exp(a1 - m) + math.exp(a2 - m))
    pu = math.exp(a1 - log_a)
    pv = math.exp(a2 - log_a)
    b = math.exp(log_a / theta)
    k = 2.0 - 1.0 / theta
    denom = b + theta - 1.0
    val = -b + lu + lv + (theta - 1.0) * (log_lu + log_lv) - k * log_a + math.log(denom)
    coef = -b + b / denom
    d_lu = coef * pu / lu + 1.0 + (theta - 1.0) / lu - k * theta * pu / lu
    d_lv = coef * pv / lv + 1.0 + (theta - 1.0) / lv - k * theta * pv / lv
    dlog_a = pu * log_lu + pv * log_lv
    db = b * (dlog_a / theta - log_a / (theta * theta))
    d_theta = -db + log_lu + log_lv - log_a / (theta * theta) - k * dlog_a + (db + 1.0) / denom
    return val, d_lu, d_lv, d_theta


@njit(cache=True)
def hag_logp_grad(q, n, y, year_idx, log_fact, hyper):
    T = n.size
    grad = np.zeros(9 + 2 * T)
    x_phi, mu_l, la, le, lk, mu_s, lb, x_xi, lt = q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8]
    w_f = q[9 : 9 + T]
    w_s = q[9 + T :]
    phi = sigmoid(x_phi)
    alpha = math.exp(la)
    eta = math.exp(le)
    kappa = math.exp(lk)
    beta = math.exp(lb)
    texc = math.exp(lt)
    theta = 1.0 + texc

    r = eta / math.expm1(kappa)
    if not r < MAX_BRANCHING:
        return -np.inf, grad

    # AR(1) scan and Hawkes recursion h_t = e^-k (h_{t-1} + N_{t-1})
    z = np.empty(T)
    base = np.empty(T)
    h = np.empty(T)
    dh = np.empty(T)  # dh/dkappa
    decay = math.exp(-kappa)
    prev_z = 0.0
    h_prev = 0.0
    dh_prev = 0.0
    for t in range(T):
        prev_z = phi * prev_z + w_f[t] if t > 0 else w_f[0]
        z[t] = prev_z
        if t == 0:
            h[t] = 0.0
            dh[t] = 0.0
        else:
            h[t] = decay * (h_prev + n[t - 1])
            dh[t] = decay * (dh_prev - h_prev - n[t - 1])
        h_prev = h[t]
        dh_prev = dh[t]
        base[t] = math.exp(mu_l + alpha * z[t])

    val = -log_fact
    d_mu_l = 0.0
    d_alpha = 0.0
    d_eta = 0.0
    d_kappa = 0.0
    gz = np.empty(T)
    for t in range(T):
        lam = base[t] + eta * h[t]
        if not math.isfinite(lam):
            return -np.inf, grad
        if n[t] > 0:
            val += n[t] * math.log(lam)
        val -= lam
        g = n[t] / lam - 1.0
        gb = g * base[t]
        d_mu_l += gb
        d_alpha += gb * z[t]
        d_eta += g * h[t]
        d_kappa += g * eta * dh[t]
        gz[t] = alpha * gb

    # adjoint of the scan
    d_phi = 0.0
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = gz[t] + phi * acc
        grad[9 + t] = acc
        if t > 0:
            d_phi += acc * z[t - 1]

    # severity
    s_year = np.empty(T)
    for t in range(T):
        s_year[t] = mu_s + beta * w_s[t]
    xi = hyper[XI_LOW] + (hyper[XI_HIGH] - hyper[XI_LOW]) * sigmoid(x_xi)
    d_s = np.zeros(T)
    v, d_xi = _gpd(y, year_idx, s_year, xi, d_s)
    val += v
    d_beta = 0.0
    d_theta = 0.0
    for t in range(T):
        d_beta += d_s[t] * w_s[t]
        grad[9 + T + t] = d_s[t] * beta

        # copula correction on l = -log Phi(w)
        lcf = log_ndtr(w_f[t])
        lcs = log_ndtr(w_s[t])
        lu = max(-lcf, 1e-300)
        lv = max(-lcs, 1e-300)
        cv, c_lu, c_lv, c_th = _gumbel_l_grad(lu, lv, theta)
        val += cv
        d_theta += c_th
        grad[9 + t] -= c_lu * math.exp(-0.5 * w_f[t] * w_f[t] - 0.5 * LOG_2PI - lcf)
        grad[9 + T + t] -= c_lv * math.exp(-0.5 * w_s[t] * w_s[t] - 0.5 * LOG_2PI - lcs)

        # standard normal innovation priors
        val -= 0.5 * (w_f[t] * w_f[t] + w_s[t] * w_s[t]) + LOG_2PI
        grad[9 + t] -= w_f[t]
        grad[9 + T + t] -= w_s[t]

    # structural priors with Jacobians
    v_phi = (hyper[PHI_A] * log_sigmoid(x_phi) + hyper[PHI_B] * log_sigmoid(-x_phi)
             - (math.lgamma(hyper[PHI_A]) + math.lgamma(hyper[PHI_B])
                - math.lgamma(hyper[PHI_A] + hyper[PHI_B])))
    val += v_phi
    grad[0] = d_phi * phi * (1.0 - phi) + hyper[PHI_A] * (1.0 - phi) - hyper[PHI_B] * phi
    v, d = _normal(mu_l, hyper[MUL_LOC], hyper[MUL_SCALE])
    val += v
    grad[1] = d_mu_l + d
    v, dj = _halfnormal_raw(la, hyper[ALPHA_SCALE])
    val += v
    grad[2] = d_alpha * alpha + dj
    v, dj = _halfnormal_raw(le, hyper[ETA_SCALE])
    val += v
    grad[3] = d_eta * eta + dj
    v, dj = _halfnormal_raw(lk, hyper[KAPPA_SCALE])
    val += v
    grad[4] = d_kappa * kappa + dj
    v, d = _normal(mu_s, hyper[MUS_LOC], hyper[MUS_SCALE])
    val += v
    grad[5] = d_s.sum() + d
    v, dj = _halfnormal_raw(lb, hyper[BETA_SCALE])
    val += v
    grad[6] = d_beta * beta + dj
    v, grad[7] = _xi_prior_raw(x_xi, d_xi, hyper)
    val += v
    v, dj = _halfnormal_raw(lt, hyper[THETA_SCALE])
    val += v
    grad[8] = d_theta * texc + dj
    return val, grad
