import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from hagrisk.copula import gumbel_logpdf
from hagrisk.models import (
    DEFAULT_PRIORS,
    TABLE2_PARAMS,
    HagParams,
    IndepParams,
    LatentState,
    ParameterError,
    SharedParams,
    ar1_scan,
    branching_ratio,
    hawkes_intensities,
    hawkes_intensity,
    log_jacobian,
    loglik_hag,
    loglik_indep,
    loglik_shared,
    logpost,
    logpost_grad,
    logprior_hag,
    logprior_indep,
    logprior_shared,
    make_model,
)
from hagrisk.panel import PanelDataset
from hagrisk.simulator import simulate_panel

LOG_2PI = np.log(2 * np.pi)


def micro_panel():
    return PanelDataset(5e5, np.array([1, 2]), [np.array([3.0e5]), np.array([1.2e6, 4.0e4])])


def random_panel(rng, T=None):
    T = T or int(rng.integers(1, 8))
    counts = rng.poisson(4.0, T)
    exc = [rng.pareto(1.5, n) * 1e6 + 1.0 for n in counts]
    return PanelDataset(5e5, counts, exc)


def random_point(model, rng):
    while True:
        q = model.initial_point(rng)
        q[model.n_struct:] = rng.standard_normal(model.dim - model.n_struct)
        if np.isfinite(model.logp(q)):
            return q


# -- building blocks -----------------------------------------------------------

def test_ar1_examples():
    w = np.array([0.3, -1.2, 2.0])
    np.testing.assert_array_equal(ar1_scan(0.0, w), w)
    np.testing.assert_allclose(ar1_scan(0.7, [1.0, 0.0, 0.0]), [1.0, 0.7, 0.49], atol=1e-15)


def test_ar1_stationary_variance():
    z = ar1_scan(0.7, np.random.default_rng(0).standard_normal(10**6))
    assert abs(z[1000:].var() - 1 / (1 - 0.49)) < 0.02
    assert abs(z[1000:].var() - 1.96) < 0.02


@given(
    st.floats(-0.99, 0.99),
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.lists(st.floats(-3, 3), min_size=1, max_size=30),
)
def test_ar1_linear(phi, a, b, w):
    w = np.array(w)
    w2 = np.cos(np.arange(w.size))
    lhs = ar1_scan(phi, a * w + b * w2)
    rhs = a * ar1_scan(phi, w) + b * ar1_scan(phi, w2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_hawkes_intensity_examples():
    p = HagParams(0.5, np.log(20), 0.0, 0.3, 0.5, 13.0, 0.4, 0.7, 2.0)
    assert hawkes_intensity(p, 0.0, [10]) == pytest.approx(20 + 3 * np.exp(-0.5), abs=1e-12)
    assert hawkes_intensity(p, 0.0, [10]) == pytest.approx(21.820, abs=5e-4)
    assert hawkes_intensity(p, 1.3, []) == pytest.approx(20.0, rel=1e-14)
    q = HagParams(0.5, 2.0, 0.4, 0.0, 0.5, 13.0, 0.4, 0.7, 2.0)
    assert hawkes_intensity(q, 0.8, [5, 9, 2]) == np.exp(2.0 + 0.4 * 0.8)


def test_hawkes_intensity_overflow_raises():
    p = HagParams(0.5, 800.0, 0.0, 0.3, 0.5, 13.0, 0.4, 0.7, 2.0)
    with pytest.raises(FloatingPointError):
        hawkes_intensity(p, 0.0, [])


def test_branching_ratio_examples():
    assert branching_ratio(0.0, 1.0) == 0.0
    assert branching_ratio(0.3, 0.5) == pytest.approx(0.3 * np.exp(-0.5) / (1 - np.exp(-0.5)), rel=1e-14)
    assert branching_ratio(0.3, 0.5) == pytest.approx(0.4624, abs=1e-4)
    assert round(1 / (1 - 0.3), 2) == 1.43


def test_param_validation():
    TABLE2_PARAMS.validate()
    with pytest.raises(ParameterError, match="phi"):
        HagParams(1.2, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.7, 2).validate()
    with pytest.raises(ParameterError, match="branching"):
        HagParams(0.7, 3, 0.5, 1.0, 0.5, 13.8, 0.4, 0.7, 2).validate()
    with pytest.raises(ParameterError, match="theta"):
        HagParams(0.7, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.7, 0.9).validate()
    with pytest.raises(ParameterError, match="xi"):
        IndepParams(3, 13, 2.5).validate()
    with pytest.raises(ParameterError, match="alpha"):
        SharedParams(3, -0.1, 13, 0.1, 0.5).validate()


# -- likelihoods ---------------------------------------------------------------

def hand_loglik_hag(p, w_f, w_s, data):
    """Component-by-component evaluation with scipy distributions."""
    z = [w_f[0]]
    for t in range(1, len(w_f)):
        z.append(p.phi * z[-1] + w_f[t])
    total = 0.0
    for t in range(data.years):
        lam = np.exp(p.mu_lambda + p.alpha * z[t])
        for s in range(t):
            lam += p.eta * data.counts[s] * np.exp(-p.kappa * (t - s))
        total += stats.poisson.logpmf(data.counts[t], lam)
        sigma = np.exp(p.mu_sigma + p.beta_s * w_s[t])
        total += stats.genpareto.logpdf(data.exceedances[t], p.xi, scale=sigma).sum()
        u, v = stats.norm.cdf(w_f[t]), stats.norm.cdf(w_s[t])
        lu, lv = -np.log(u), -np.log(v)
        a = lu**p.theta + lv**p.theta
        c = (np.exp(-a ** (1 / p.theta)) / (u * v) * (lu * lv) ** (p.theta - 1)
             / a ** (2 - 1 / p.theta) * (a ** (1 / p.theta) + p.theta - 1))
        total += np.log(c)
    return total


def test_loglik_hag_micro_dataset():
    data = micro_panel()
    p = HagParams(0.6, 0.4, 0.5, 0.3, 0.7, 13.5, 0.4, 0.7, 2.0)
    w_f, w_s = np.array([0.3, -0.8]), np.array([1.1, 0.2])
    lat = LatentState.from_innovations(p.phi, w_f, w_s)
    assert loglik_hag(p, lat, data) == pytest.approx(hand_loglik_hag(p, w_f, w_s, data), abs=1e-10)


def test_loglik_hag_empty_single_year():
    data = PanelDataset(5e5, np.array([0]), [np.array([])])
    p = HagParams(0.6, 1.0, 0.5, 0.3, 0.7, 13.5, 0.4, 0.7, 2.0)
    lat = LatentState.from_innovations(p.phi, [0.4], [-0.2])
    lam = np.exp(1.0 + 0.5 * 0.4)
    expected = -lam + gumbel_logpdf(special.ndtr(0.4), special.ndtr(-0.2), 2.0)
    assert loglik_hag(p, lat, data) == pytest.approx(expected, abs=1e-12)


def test_loglik_hag_supercritical_is_neg_inf(table2_panel):
    data, truth = table2_panel
    p = HagParams(0.7, 3.0, 0.5, 0.7, 0.5, 13.8, 0.4, 0.7, 2.0)
    assert p.branching_ratio >= 0.95
    assert loglik_hag(p, truth.latents, data) == -np.inf
    assert logprior_hag(p, truth.latents) == -np.inf
    assert logpost("hag", p, truth.latents, data) == -np.inf


def test_intensities_match_truth(table2_panel):
    data, truth = table2_panel
    lam = hawkes_intensities(truth.params, truth.latents.z, data.counts)
    np.testing.assert_allclose(lam, truth.intensities, rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_nesting_hag_reduces_to_shared(seed):
    rng = np.random.default_rng(seed)
    data = random_panel(rng)
    mu_l, alpha, mu_s, beta, xi = rng.normal(1.5, 0.5), rng.uniform(0, 1), rng.normal(13, 1), rng.uniform(0, 1), rng.uniform(0.1, 1.5)
    z = rng.standard_normal(data.years)
    shared = SharedParams(mu_l, alpha, mu_s, beta, xi)
    hag = HagParams(0.0, mu_l, alpha, 0.0, 1.0, mu_s, beta, xi, 1.0)
    lat = LatentState.from_innovations(0.0, z, z)
    assert loglik_hag(hag, lat, data) == pytest.approx(loglik_shared(shared, z, data), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_nesting_shared_reduces_to_indep(seed):
    rng = np.random.default_rng(100 + seed)
    data = random_panel(rng)
    mu_l, mu_s, xi = rng.normal(1.5, 0.5), rng.normal(13, 1), rng.uniform(0.1, 1.5)
    z = rng.standard_normal(data.years)
    a = loglik_shared(SharedParams(mu_l, 0.0, mu_s, 0.0, xi), z, data)
    b = loglik_indep(IndepParams(mu_l, mu_s, xi), data)
    assert a == pytest.approx(b, abs=1e-10)


def test_loglik_permutation_invariant(table2_panel):
    data, truth = table2_panel
    rng = np.random.default_rng(0)
    shuffled = PanelDataset(data.threshold, data.counts, [rng.permutation(e) for e in data.exceedances])
    a = loglik_hag(truth.params, truth.latents, data)
    b = loglik_hag(truth.params, truth.latents, shuffled)
    assert a == pytest.approx(b, rel=1e-13)
    m1, m2 = make_model("hag", data), make_model("hag", shuffled)
    q = random_point(m1, rng)
    assert m1.logp(q) == pytest.approx(m2.logp(q), rel=1e-13)


# -- priors --------------------------------------------------------------------

def test_logprior_phi_beta_value():
    base = HagParams(0.5, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.7, 2.0)
    moved = HagParams(0.71, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.7, 2.0)
    lat = LatentState.from_innovations(0.5, np.zeros(3), np.zeros(3))
    diff = logprior_hag(moved, lat) - logprior_hag(base, lat)
    ref = np.log(0.71**4 * 0.29 / special.beta(5, 2)) - stats.beta.logpdf(0.5, 5, 2)
    assert diff == pytest.approx(ref, abs=1e-12)


def test_logprior_xi_truncation():
    lat = LatentState.from_innovations(0.5, np.zeros(2), np.zeros(2))
    at_floor = HagParams(0.7, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.01, 2.0)
    below = HagParams(0.7, 3, 0.5, 0.3, 0.5, 13.8, 0.4, 0.009, 2.0)
    assert np.isfinite(logprior_hag(at_floor, lat))
    assert logprior_hag(below, lat) == -np.inf
    assert logprior_indep(IndepParams(3, 14, 2.0)) > -np.inf
    assert logprior_indep(IndepParams(3, 14, 2.01)) == -np.inf


def test_logprior_latent_contribution():
    p = TABLE2_PARAMS
    zeros = LatentState.from_innovations(p.phi, np.zeros(15), np.zeros(15))
    ones = LatentState.from_innovations(p.phi, np.ones(15), np.ones(15))
    structural = logprior_hag(p, zeros) - 2 * 15 * (-0.5 * LOG_2PI)
    assert logprior_hag(p, ones) - structural == pytest.approx(2 * 15 * (-0.5 - 0.5 * LOG_2PI), abs=1e-10)


def test_logprior_matches_scipy():
    p = TABLE2_PARAMS
    lat = LatentState.from_innovations(p.phi, [0.2, -0.1], [1.0, 0.5])
    pr = DEFAULT_PRIORS
    hn = lambda x, s: stats.halfnorm.logpdf(x, scale=s)
    a, b = (pr.xi_low - 0.5) / 0.5, (pr.xi_high - 0.5) / 0.5
    ref = (
        stats.beta.logpdf(p.phi, 5, 2) + stats.norm.logpdf(p.mu_lambda, 3, 1.5) + hn(p.alpha, 1)
        + hn(p.eta, 0.3) + hn(p.kappa, 1) + stats.norm.logpdf(p.mu_sigma, 14, 2) + hn(p.beta_s, 1)
        + stats.truncnorm.logpdf(p.xi, a, b, loc=0.5, scale=0.5) + hn(p.theta - 1, 1.5)
        + stats.norm.logpdf(lat.w_f).sum() + stats.norm.logpdf(lat.w_s).sum()
    )
    assert logprior_hag(p, lat) == pytest.approx(ref, abs=1e-10)
    z = np.array([0.3, -0.4])
    sp = SharedParams(3.1, 0.4, 13.9, 0.2, 0.6)
    ref_s = (stats.norm.logpdf(3.1, 3, 1.5) + hn(0.4, 1) + stats.norm.logpdf(13.9, 14, 2) + hn(0.2, 1)
             + stats.truncnorm.logpdf(0.6, a, b, loc=0.5, scale=0.5) + stats.norm.logpdf(z).sum())
    assert logprior_shared(sp, z) == pytest.approx(ref_s, abs=1e-10)


# -- unconstrained targets -----------------------------------------------------

@pytest.mark.parametrize("tag", ["indep", "shared", "hag"])
def test_kernel_matches_natural_scale_sum(tag, table2_panel):
    data, _ = table2_panel
    model = make_model(tag, data)
    rng = np.random.default_rng(3)
    for _ in range(10):
        q = random_point(model, rng)
        nat = model.to_natural(q)
        params = model.params_from_row(nat)
        s = model.n_struct
        if tag == "indep":
            ref = loglik_indep(params, data) + logprior_indep(params)
        elif tag == "shared":
            z = nat[s:]
            ref = loglik_shared(params, z, data) + logprior_shared(params, z)
        else:
            lat = model.latent_state(q)
            ref = loglik_hag(params, lat, data) + logprior_hag(params, lat)
        ref += log_jacobian(tag, q)
        assert model.logp(q) == pytest.approx(ref, rel=1e-11, abs=1e-9)


@pytest.mark.parametrize("tag", ["indep", "shared", "hag"])
def test_gradient_central_differences(tag, table2_panel):
    data, _ = table2_panel
    model = make_model(tag, data)
    rng = np.random.default_rng(12)
    h = 1e-5
    worst = 0.0
    for _ in range(20):
        q = random_point(model, rng)
        _, g = model.logp_and_grad(q)
        fd = np.empty_like(q)
        for i in range(q.size):
            e = np.zeros_like(q)
            e[i] = h
            fd[i] = (model.logp(q + e) - model.logp(q - e)) / (2 * h)
        worst = max(worst, np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1.0)))
    assert worst < 1e-4


def test_logpost_helpers_agree_with_model(table2_panel):
    data, truth = table2_panel
    model = make_model("hag", data)
    q = model.from_natural(truth.params, (truth.latents.w_f, truth.latents.w_s))
    assert logpost("hag", truth.params, truth.latents, data) == model.logp(q)
    np.testing.assert_array_equal(logpost_grad("hag", truth.params, truth.latents, data),
                                  model.logp_and_grad(q)[1])


def test_hag_model_neg_inf_beyond_subcriticality(table2_panel):
    data, truth = table2_panel
    model = make_model("hag", data)
    p = HagParams(0.7, 3.0, 0.5, 0.7, 0.5, 13.8, 0.4, 0.7, 2.0)
    q = model.from_natural(p, (truth.latents.w_f, truth.latents.w_s))
    val, grad = model.logp_and_grad(q)
    assert val == -np.inf
    assert np.all(np.isfinite(grad))


def test_indep_frequency_gradient_separable(table2_panel):
    data, _ = table2_panel
    model = make_model("indep", data)
    q = np.array([3.0, 13.5, 0.2])
    g0 = model.logp_and_grad(q)[1][0]
    for mu_s, raw_xi in [(12.0, -1.0), (15.0, 1.5)]:
        assert model.logp_and_grad(np.array([3.0, mu_s, raw_xi]))[1][0] == g0


@pytest.mark.parametrize("tag", ["indep", "shared", "hag"])
def test_transform_round_trip(tag, table2_panel):
    data, _ = table2_panel
    model = make_model(tag, data)
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = random_point(model, rng)
        nat = model.to_natural(q)
        back = model.from_natural(model.params_from_row(nat), model.split(q)[1])
        np.testing.assert_allclose(back, q, rtol=1e-12, atol=1e-12)


def test_model_dimensions(table2_panel):
    data, _ = table2_panel
    assert make_model("indep", data).dim == 3
    assert make_model("shared", data).dim == 5 + 15
    assert make_model("hag", data).dim == 9 + 30
    with pytest.raises(ValueError):
        make_model("bogus", data)
    with pytest.raises(ValueError):
        make_model("hag", data).logp(np.zeros(5))


def test_hag_latent_z_from_scan(table2_panel):
    data, truth = table2_panel
    np.testing.assert_allclose(truth.latents.z, ar1_scan(truth.params.phi, truth.latents.w_f))
    assert truth.latents.z[0] == truth.latents.w_f[0]


def test_simulated_panel_logpost_finite():
    data, truth = simulate_panel(TABLE2_PARAMS, 15, 5e5, seed=9)
    assert np.isfinite(logpost("hag", truth.params, truth.latents, data))
