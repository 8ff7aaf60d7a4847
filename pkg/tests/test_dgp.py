import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from ortho_m.data import stream
from ortho_m.errors import ConfigurationError
from ortho_m.estimators import caption_lambda
from ortho_m.first_stage import fit_sparse
from ortho_m.simulation import DGPConfig, generate, preset
from ortho_m.simulation.dgp import equilibrium_residual, solve_equilibrium


# ---- partially linear -----------------------------------------------------------------

def test_noiseless_partially_linear_direct_ols_recovers_truth():
    # eta is kept: with tau = u'beta exactly, tau * x_0 would be collinear with u
    cfg = preset("plr", n=500, p=10, k_alpha=0, sigma_eps=1e-12)
    data, truth = generate(cfg, 0)
    X = np.hstack([data["tau"][:, None] * data["x"], data["u"]])
    coef = np.linalg.lstsq(X, data["y"], rcond=None)[0]
    np.testing.assert_allclose(coef[:10], truth.theta0, atol=1e-8)


def test_partially_linear_layout():
    data, truth = generate(preset("plr", n=300, p=8), 0)
    np.testing.assert_array_equal(data["x"][:, 0], 1.0)
    np.testing.assert_array_equal(data["x"][:, 1:], data["u"][:, :7])
    np.testing.assert_array_equal(truth.theta0, [1, 1, 0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(truth.support, [0, 1])


def test_treatment_noise_has_unit_variance():
    data, truth = generate(preset("plr", n=200000, p=10), 0)
    eta = data["tau"] - data["u"] @ truth.coefficients["beta0"]
    # sd of the sample variance of N(0,1) is sqrt(2/n)
    assert abs(eta.var() - 1.0) <= 3 * math.sqrt(2 / 200000)


def test_control_means_are_centred():
    data, _ = generate(preset("plr"), 0)
    n = data.n
    assert np.all(np.abs(data["u"].mean(axis=0)) <= 3 / math.sqrt(n) * 1.5)
    # the 3-sigma band holds for nearly every column
    assert np.mean(np.abs(data["u"].mean(axis=0)) <= 3 / math.sqrt(n)) >= 0.95


def test_partially_linear_moment_condition_recovers_theta():
    data, truth = generate(preset("plr", n=20000, p=10), 0)
    nu = truth.nuisance(data)
    Z = (data["tau"] - nu["h"])[:, None] * data["x"]
    r = data["y"] - nu["q"]
    coef, *_ = np.linalg.lstsq(Z, r, rcond=None)
    resid = r - Z @ coef
    se = np.sqrt(np.diag(np.linalg.inv(Z.T @ Z)) * resid.var())
    assert np.all(np.abs(coef - truth.theta0) <= 3 * se)


# ---- missing data -------------------------------------------------------------------------

def test_vanishing_selection_scale_gives_coin_flip_observation():
    cfg = preset("missing", sigma_eta=1e-12, n=20000)
    data, truth = generate(cfg, 0)
    np.testing.assert_allclose(truth.nuisance(data)["p"], 0.5, atol=1e-10)
    assert abs(data["d"].mean() - 0.5) <= 3 * 0.5 / math.sqrt(cfg.n)


@pytest.mark.parametrize("rep", range(5))
def test_missingness_rate_is_moderate(rep):
    data, _ = generate(preset("missing"), rep)
    assert 0.2 < 1 - data["d"].mean() < 0.8


def test_missing_coefficient_layout():
    cfg = preset("missing", k=2, k_u=3)
    _, truth = generate(cfg, 4)
    c = truth.coefficients
    for A in (c["A1"], c["A2"]):
        assert np.all(A[2:] == 0) and np.all(A[:, 3:] == 0)
        assert np.all((A[:2, :3] >= 1) & (A[:2, :3] <= 2))
    assert np.all((c["beta"] >= 0) & (c["beta"] <= 1))
    assert np.all((c["gamma"] >= 2) & (c["gamma"] <= 3))


def test_missing_outcomes_are_zeroed():
    data, _ = generate(preset("missing"), 0)
    assert np.all(data["y"][data["d"] == 0] == 0)


def test_missing_heterogeneity_averages_to_theta():
    # E[h(u)] = theta because u and u^2 - E u^2 have mean zero
    cfg = preset("missing", n=200000)
    data, truth = generate(cfg, 0)
    u = data["u"]
    c = truth.coefficients
    h = truth.theta0 + u @ c["A1"].T + (u * u - cfg.sigma_u ** 2 / 3) @ c["A2"].T
    se = h.std(axis=0) / math.sqrt(cfg.n)
    assert np.all(np.abs(h.mean(axis=0) - truth.theta0) <= 4 * se + 1e-12)


# ---- games ----------------------------------------------------------------------------------

def test_decoupled_game_has_closed_form_beliefs():
    rng = np.random.default_rng(0)
    a1, a2 = rng.normal(size=50), rng.normal(size=50)
    g1, g2 = solve_equilibrium(a1, a2, 0.0, 0.0)
    np.testing.assert_allclose(g1, expit(a1), atol=1e-15)
    np.testing.assert_allclose(g2, expit(a2), atol=1e-15)
    cfg = preset("games", n=500, p=20, delta1=0.0, delta2=0.0, variant="DGP2")
    data, truth = generate(cfg, 0)
    c = truth.coefficients
    np.testing.assert_allclose(c["g1"], expit(data["x"] @ c["alpha1"]), atol=1e-15)
    np.testing.assert_allclose(c["g2"], expit(data["x"] @ c["alpha2"]), atol=1e-15)


def test_dgp1_opponent_belief_is_logistic_linear():
    data, truth = generate(preset("games", n=500, p=20, variant="DGP1"), 0)
    c = truth.coefficients
    np.testing.assert_array_equal(truth.nuisance(data)["g"], expit(data["x"] @ c["alpha2"]))
    assert c["delta2"] == 0.0


@pytest.mark.parametrize("rep", range(3))
def test_dgp2_rows_solve_the_equilibrium(rep):
    cfg = preset("games", variant="DGP2")
    data, truth = generate(cfg, rep)
    c = truth.coefficients
    x = data["x"]
    r1 = np.abs(c["g1"] - expit(x @ c["alpha1"] + c["g2"] * cfg.delta1))
    r2 = np.abs(c["g2"] - expit(x @ c["alpha2"] + c["g1"] * cfg.delta2))
    assert max(r1.max(), r2.max()) < 1e-10
    assert c["equilibrium_residual"] < 1e-10


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-4, 4))
def test_best_response_contraction_bound(a, g, delta):
    # derivative of g -> L(a + g delta) is delta L'(.), and L' <= 1/4
    h = 1e-6
    slope = (expit(a + (g + h) * delta) - expit(a + (g - h) * delta)) / (2 * h)
    assert abs(slope) <= abs(delta) / 4 + 1e-8
    if abs(delta) <= 3:
        assert abs(slope) <= 0.75 + 1e-8


def test_non_contraction_rejected():
    with pytest.raises(ConfigurationError):
        solve_equilibrium(np.zeros(3), np.zeros(3), -4.0, -4.0)


def test_equilibrium_residual_detects_wrong_beliefs():
    a1, a2 = np.zeros(2), np.zeros(2)
    assert equilibrium_residual(np.full(2, 0.9), np.full(2, 0.5), a1, a2, -2.0, -3.0) > 0.1


def test_games_target_layout():
    data, truth = generate(preset("games", n=200, p=11), 0)
    assert data["x"].shape == (200, 10)
    np.testing.assert_array_equal(truth.theta0, [1.0] + [0.0] * 9 + [-2.0])
    assert set(np.unique(data["y"])) <= {0.0, 1.0} and set(np.unique(data["v"])) <= {0.0, 1.0}


# ---- logistic treatment effects ------------------------------------------------------------------

def test_null_logistic_model_is_a_fair_coin():
    cfg = preset("logit-te", theta_value=0.0, k_alpha=0, n=20000)
    data, _ = generate(cfg, 0)
    assert abs(data["y"].mean() - 0.5) <= 3 * 0.5 / math.sqrt(cfg.n)


@pytest.mark.parametrize("rep", range(5))
def test_logistic_class_balance(rep):
    data, _ = generate(preset("logit-te"), rep)
    assert 0.3 < data["y"].mean() < 0.7


def test_treatment_regression_recovers_propensity_support():
    cfg = preset("logit-te", n=5000)
    data, truth = generate(cfg, 0)
    fit = fit_sparse(data["u"], data["tau"], caption_lambda(cfg.n, cfg.p, "logit-te"))
    top = np.sort(np.argsort(-np.abs(fit.coef))[: cfg.k_beta])
    np.testing.assert_array_equal(top, np.flatnonzero(truth.coefficients["beta0"]))


# ---- configuration and streams -------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(k=101), dict(k_alpha=200), dict(sigma_eps=0.0), dict(n=0),
                                dict(variant="DGP3"), dict(n_replications=0)])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigurationError):
        DGPConfig(model="plr", **kw)


def test_unknown_scale_rejected():
    with pytest.raises(ConfigurationError):
        preset("plr", scale="huge")


def test_full_scale_presets_match_documented_sizes():
    assert (preset("games", "paper").n, preset("games", "paper").p) == (10000, 1000)
    m = preset("missing", "paper")
    assert (m.n, m.p, m.theta_value, m.sigma_eta, m.sigma_x) == (5000, 20, 2.0, 0.1, 3.0)
    assert preset("logit-te", "paper").p == 2000 and preset("plr", "paper").p == 200


@settings(max_examples=20)
@given(st.sampled_from(["plr", "logit-te", "missing", "games"]), st.integers(0, 1000))
def test_generation_is_reproducible(model, rep):
    cfg = preset(model, n=100, p=12)
    a, _ = generate(cfg, rep)
    b, _ = generate(cfg, rep)
    for name in a.columns:
        np.testing.assert_array_equal(a[name], b[name])


def test_replications_differ_and_streams_are_role_separated():
    cfg = preset("missing", n=100)
    a, _ = generate(cfg, 0)
    b, _ = generate(cfg, 1)
    assert not np.array_equal(a["x"], b["x"])
    s1 = stream(0, 0, "sample").random(4)
    s2 = stream(0, 0, "coefficients").random(4)
    assert not np.array_equal(s1, s2)
    np.testing.assert_array_equal(s1, stream(0, 0, "sample").random(4))
