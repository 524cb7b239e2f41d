import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hagrisk.cvar import (
    LAMBDA_CAP,
    CvarReport,
    compare_reports,
    estimate_cvar,
    load_report,
    save_report,
    simulate_annual_loss,
    simulate_losses,
    simulate_predictive,
    var_cvar,
)
from hagrisk.inference import PosteriorDraws
from hagrisk.models import TABLE2_PARAMS, IndepParams

LEVELS = [0.999, 0.9995, 0.99995]


def point_draws(tag, row, names):
    samples = np.asarray(row, dtype=float).reshape(1, 1, -1)
    return PosteriorDraws(tag, list(names), len(names), samples)


def wald_mean(lam, u, sigma, xi):
    return lam * (u + sigma / (1 - xi))


def test_wald_identity_finite_variance():
    tab = np.array([[np.log(20), np.log(1e6), 0.3]])
    s = simulate_predictive("indep", tab, 5e5, 10**6, seed=0)
    assert abs(s.mean() / wald_mean(20, 5e5, 1e6, 0.3) - 1) < 0.01


def test_wald_identity_heavy_tail_loose():
    # xi = 0.7 has infinite variance, so only a loose bound is reliable here
    tab = np.array([[np.log(20), np.log(1e6), 0.7]])
    s = simulate_predictive("indep", tab, 5e5, 10**6, seed=1)
    assert abs(s.mean() / wald_mean(20, 5e5, 1e6, 0.7) - 1) < 0.05


def test_zero_count_gives_zero_loss():
    p = IndepParams(np.log(20), np.log(1e6), 0.7)
    assert simulate_annual_loss("indep", p, 5e5, np.random.default_rng(0), fixed_count=0) == 0.0
    s = simulate_losses("indep", {"mu_lambda": [-30.0] * 100, "mu_sigma": [13.0] * 100, "xi": [0.5] * 100},
                        5e5, np.random.default_rng(0))
    assert np.all(s == 0.0)


def test_single_loss_is_threshold_plus_exceedance():
    p = IndepParams(0.0, np.log(1e6), 0.5)
    a = simulate_annual_loss("indep", p, 5e5, np.random.default_rng(3), fixed_count=1)
    b = simulate_annual_loss("indep", p, 5e5 + 123.0, np.random.default_rng(3), fixed_count=1)
    assert b - a == pytest.approx(123.0, rel=1e-9)
    assert a > 5e5


def hag_params(n, **kw):
    base = dict(phi=0.7, mu_lambda=1.0, alpha=0.3, eta=0.3, kappa=0.5, mu_sigma=-20.0,
                beta_s=0.0, xi=0.01, theta=2.0)
    base.update(kw)
    return {k: np.full(n, v) for k, v in base.items()}


@pytest.mark.parametrize("phi", [0.0, 0.7])
def test_hag_predictive_count_mean(phi):
    # with a negligible severity scale and u = 1, S is the event count
    n = 10**6
    p = hag_params(n, phi=phi)
    s = simulate_losses("hag", p, 1.0, np.random.default_rng(4))
    r = 0.3 / np.expm1(0.5)
    expected = np.exp(1.0 + 0.5 * 0.3**2 / (1 - phi**2)) / (1 - r)
    se = s.std() / np.sqrt(n)
    assert abs(s.mean() - expected) < 4 * se


def test_hag_predictive_count_cap():
    p = hag_params(10**4, mu_lambda=12.0)
    s = simulate_losses("hag", p, 1.0, np.random.default_rng(5))
    assert abs(s.mean() - LAMBDA_CAP) < 4 * np.sqrt(LAMBDA_CAP / s.size)


def test_shared_predictive_count_mean():
    n = 10**6
    p = {"mu_lambda": np.full(n, 1.5), "alpha": np.full(n, 0.4), "mu_sigma": np.full(n, -20.0),
         "beta": np.full(n, 0.0), "xi": np.full(n, 0.01)}
    s = simulate_losses("shared", p, 1.0, np.random.default_rng(6))
    expected = np.exp(1.5 + 0.5 * 0.16)
    assert abs(s.mean() - expected) < 4 * s.std() / np.sqrt(n)


def test_copula_raises_mean_loss():
    # frequency and severity move together under theta > 1, raising E[S]
    n = 4 * 10**5
    common = dict(mu_lambda=2.0, alpha=0.5, mu_sigma=0.0, beta_s=0.5, xi=0.05, u=0.0)
    means = {}
    for theta in (1.0, 3.0):
        p = hag_params(n, **{k: v for k, v in common.items() if k != "u"}, theta=theta)
        s = simulate_losses("hag", p, 0.0, np.random.default_rng(7))
        means[theta] = (s.mean(), s.std() / np.sqrt(n))
    diff = means[3.0][0] - means[1.0][0]
    assert diff > 4 * math.hypot(means[3.0][1], means[1.0][1])


def test_hag_rejects_supercritical():
    with pytest.raises(ValueError):
        simulate_losses("hag", hag_params(3, eta=1.0), 1.0, np.random.default_rng(0))


def test_point_mass_var_equals_cvar():
    d = point_draws("indep", [0.0, -30.0, 0.01], ("mu_lambda", "mu_sigma", "xi"))
    rep = estimate_cvar(d, 5e5, LEVELS, M=200000, seed=1, fixed_count=1)
    for v, c in zip(rep.var, rep.cvar):
        assert v == pytest.approx(5e5, rel=1e-12)
        assert c == pytest.approx(5e5, rel=1e-12)


def test_translation_with_unit_counts():
    d = point_draws("indep", [0.0, np.log(1e6), 0.6], ("mu_lambda", "mu_sigma", "xi"))
    a = estimate_cvar(d, 5e5, LEVELS, M=300000, seed=2, fixed_count=1)
    b = estimate_cvar(d, 5e5 + 1e4, LEVELS, M=300000, seed=2, fixed_count=1)
    np.testing.assert_allclose(np.subtract(b.var, a.var), 1e4, rtol=1e-6)
    np.testing.assert_allclose(np.subtract(b.cvar, a.cvar), 1e4, rtol=1e-6)


def test_var_is_order_statistic():
    s = np.arange(1.0, 1001.0)
    (var, cvar, se, n), = var_cvar(s, [0.99])
    assert var == 990.0  # ceil(0.99 * 1000) = 990th smallest
    assert cvar == np.mean(np.arange(990.0, 1001.0)) and n == 11
    (var, _, _, _), = var_cvar(s, [0.9995])
    assert var == 1000.0


@given(arrays(np.float64, st.integers(20, 400), elements=st.floats(0, 1e9)))
def test_cvar_dominates_var_and_monotone(x):
    rows = var_cvar(x, [0.5, 0.9, 0.99])
    var = [r[0] for r in rows]
    cvar = [r[1] for r in rows]
    assert all(c >= v for v, c in zip(var, cvar))
    assert var == sorted(var)
    assert all(b >= a * (1 - 1e-12) for a, b in zip(cvar, cvar[1:]))


def test_report_invariants_and_warnings():
    d = point_draws("indep", [np.log(20), np.log(1e6), 0.4], ("mu_lambda", "mu_sigma", "xi"))
    rep = estimate_cvar(d, 5e5, LEVELS, M=50000, seed=3)
    assert all(c >= v for v, c in zip(rep.var, rep.cvar))
    assert rep.var == sorted(rep.var)
    assert any("tail samples" in w for w in rep.warnings)
    ok = estimate_cvar(d, 5e5, [0.99], M=50000, seed=3)
    assert ok.warnings == []


def test_levels_validated():
    d = point_draws("indep", [0.0, 0.0, 0.4], ("mu_lambda", "mu_sigma", "xi"))
    with pytest.raises(ValueError):
        estimate_cvar(d, 1.0, [0.99, 0.9], M=100)
    with pytest.raises(ValueError):
        estimate_cvar(d, 1.0, [1.0], M=100)


def test_worker_count_does_not_change_output():
    rng = np.random.default_rng(0)
    tab = np.column_stack([
        rng.uniform(0.6, 0.8, 50), rng.normal(3, 0.1, 50), rng.uniform(0.3, 0.6, 50),
        rng.uniform(0.1, 0.3, 50), rng.uniform(0.4, 0.8, 50), rng.normal(13.8, 0.1, 50),
        rng.uniform(0.2, 0.5, 50), rng.uniform(0.6, 0.8, 50), rng.uniform(1.5, 2.5, 50),
    ])
    a = simulate_predictive("hag", tab, 5e5, 150000, seed=9, workers=1, block_size=1 << 14)
    b = simulate_predictive("hag", tab, 5e5, 150000, seed=9, workers=3, block_size=1 << 14)
    np.testing.assert_array_equal(a, b)


def test_doubling_m_is_stable():
    d = point_draws("indep", [np.log(20), np.log(1e6), 0.3], ("mu_lambda", "mu_sigma", "xi"))
    a = estimate_cvar(d, 5e5, [0.999], M=10**6, seed=4)
    b = estimate_cvar(d, 5e5, [0.999], M=2 * 10**6, seed=5)
    assert abs(a.cvar[0] - b.cvar[0]) < 3 * a.mc_standard_error[0]


def test_table2_point_posterior_orders_models():
    # at the true parameters the dependent model carries the heavier extreme tail
    names = ("phi", "mu_lambda", "alpha", "eta", "kappa", "mu_sigma", "beta_s", "xi", "theta")
    p = TABLE2_PARAMS
    hag = point_draws("hag", [getattr(p, k) for k in names], names)
    indep = point_draws("indep", [p.mu_lambda, p.mu_sigma, p.xi], ("mu_lambda", "mu_sigma", "xi"))
    h = estimate_cvar(hag, 5e5, [0.999], M=10**6, seed=6)
    i = estimate_cvar(indep, 5e5, [0.999], M=10**6, seed=6)
    assert h.cvar[0] > i.cvar[0]


def test_report_json_round_trip(tmp_path):
    rep = CvarReport("hag", LEVELS, [1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [0.1, 0.2, 0.3], [1000, 500, 50],
                     10**6, seed=7)
    save_report(rep, tmp_path / "r.json")
    assert load_report(tmp_path / "r.json") == rep
    assert '"se"' in (tmp_path / "r.json").read_text()


def test_compare_reports_table():
    mk = lambda m, c: CvarReport(m, LEVELS, c, c, [0, 0, 0], [1, 1, 1], 10)
    indep = mk("indep", [37.9e6, 63.6e6, 322.3e6])
    hag = mk("hag", [43.9e6, 74.3e6, 461.4e6])
    table = compare_reports([indep, hag])
    assert "Ratio (HAG/Indep.)" in table
    assert "1.43x" in table and "1.16x" in table
    single = compare_reports([indep])
    assert "Ratio" not in single
    other = CvarReport("shared", [0.99, 0.999, 0.9999], [1, 2, 3], [1, 2, 3], [0, 0, 0], [1, 1, 1], 10)
    with pytest.raises(ValueError, match="levels"):
        compare_reports([indep, other])


def test_text_table_layout():
    rep = CvarReport("indep", LEVELS, [1e6, 2e6, 3e6], [2e6, 3e6, 4e6], [1e5, 1e5, 1e5], [9, 9, 9], 100)
    lines = rep.to_table().splitlines()
    assert lines[1].split() == ["Level", "VaR", "CVaR", "MC", "s.e.", "tail", "n"]
    assert lines[3].split()[0] == "99.900%"
