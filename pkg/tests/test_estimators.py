import functools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ortho_m.data import Dataset, NuisanceFit, make_folds
from ortho_m.errors import ConfigurationError, InvalidArgumentError
from ortho_m.estimators import (algorithm1, algorithm2, caption_lambda, cross_fit_estimate,
                                error_metrics, fit_second_stage, make_penalty_plan)
from ortho_m.first_stage import nuisance_on_rows
from ortho_m.simulation import generate, preset
from ortho_m.simulation.baselines import MethodContext, run_method
from ortho_m.solver import SolverConfig

from oracles import coordinate_descent, lattice_argmin

TIGHT = SolverConfig(tol=1e-14, max_iters=100_000)


# ---- penalty plan ----------------------------------------------------------------------

def test_plan_epsilon_and_main_penalty():
    plan = make_penalty_plan(2000, 100, delta=0.05, U=1.0, g_n=0.0)
    eps = math.sqrt(math.log(4000) / 4000)
    assert plan.epsilon == pytest.approx(eps, rel=1e-15)
    assert plan.epsilon == pytest.approx(0.045536, abs=1e-6)  # ~0.04556 is a rounding slip
    assert plan.lambda_main == pytest.approx(2 * eps, rel=1e-15)


@given(st.floats(0.001, 0.5), st.floats(0.5, 3.0))
def test_doubling_nuisance_rate_adds_six_b_g_squared(g, U):
    a = make_penalty_plan(500, 50, U=U, g_n=g)
    b = make_penalty_plan(500, 50, U=U, g_n=2 * g)
    assert b.lambda_main - a.lambda_main == pytest.approx(6 * a.B * g * g, rel=1e-9)


def test_zero_initial_radius_collapses_preliminary_penalty():
    plan = make_penalty_plan(800, 40, g_n=0.1, R0=0.0)
    assert plan.lambda_pre == plan.lambda_main


def test_plan_constants_by_hand():
    n, p, U, g, R0, k = 1000, 30, 1.2, 0.05, 2.0, 3
    plan = make_penalty_plan(n, p, k_guess=k, U=U, g_n=g, R0=R0, gamma_guess=0.5)
    assert plan.B == pytest.approx(4 * U ** 3) and plan.L == pytest.approx(3 * U ** 3)
    tau = 4 * U ** 5 * k * math.sqrt(2 * math.log(p) / n) + U ** 3 * math.sqrt(4 * math.log(2 * p / 0.05) / n)
    assert plan.tau == pytest.approx(tau, rel=1e-14)
    base = plan.epsilon + plan.B * g * g
    assert plan.R1 == pytest.approx((8 * k / 0.5) * (base + (tau + plan.L * g) * R0), rel=1e-14)
    assert plan.lambda_fin == pytest.approx(2 * (base + (tau + plan.L * g) * plan.R1), rel=1e-14)


def test_default_sparsity_guess():
    assert make_penalty_plan(2000, 100).k_guess == math.ceil(math.sqrt(2000) / math.log(100))


def test_explicit_final_radius_drives_final_penalty():
    a = make_penalty_plan(900, 20, R1=0.5)
    assert a.R1 == 0.5
    assert a.lambda_fin == pytest.approx(2 * (a.epsilon + a.tau * 0.5))


def test_anchoring_keeps_ratios():
    plan = make_penalty_plan(900, 20, R0=3.0)
    anc = plan.anchored(0.1)
    assert anc.lambda_fin == 0.1
    assert anc.lambda_pre / anc.lambda_fin == pytest.approx(plan.lambda_pre / plan.lambda_fin)


@pytest.mark.parametrize("kw", [dict(n=0), dict(delta=1.0), dict(U=0.0), dict(g_n=-1.0), dict(R0=-1.0)])
def test_plan_rejects_bad_arguments(kw):
    args = dict(n=100, p=10)
    args.update(kw)
    with pytest.raises(InvalidArgumentError):
        make_penalty_plan(**args)


def test_override_restricted_to_penalties_and_radii():
    plan = make_penalty_plan(100, 10)
    assert plan.override(lambda_main=0.3).lambda_main == 0.3
    with pytest.raises(InvalidArgumentError):
        plan.override(tau=1.0)


def test_caption_penalties():
    assert caption_lambda(2000, 20, "missing") == pytest.approx(math.sqrt(math.log(20) / 2000))
    assert caption_lambda(4000, 201, "games") == pytest.approx(math.sqrt(math.log(201) / 16000))


def test_error_metrics_cone_split():
    m = error_metrics([1.5, 0.2, -0.1], [1.0, 0.0, 0.0])
    assert m["l1_error"] == pytest.approx(0.8)
    assert m["cone"] == pytest.approx((0.3, 0.5))


# ---- second stage fits --------------------------------------------------------------------

def _noiseless_plr(n=400, p=6, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 3))
    x = rng.normal(size=(n, p))
    theta0 = np.zeros(p)
    theta0[:2] = [1.0, -0.5]
    h = u @ [0.5, 0.0, 1.0]
    f = u @ [1.0, -1.0, 0.0]
    tau = h + rng.normal(size=n)
    y = tau * (x @ theta0) + f
    return Dataset(y=y, tau=tau, u=u, x=x), {"h": h, "q": h * (x @ theta0) + f}, theta0


def test_noiseless_true_nuisance_recovers_truth():
    data, nu, theta0 = _noiseless_plr()
    res = fit_second_stage(data, "plr", nu, 1e-12, cfg=TIGHT)
    np.testing.assert_allclose(res.theta_hat, theta0, atol=1e-6)


def _toy_missing(n=200, p=5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    d = (rng.uniform(size=n) < 0.7).astype(float)
    y = d * (x @ [1.0, 0.0, -0.5, 0.0, 0.25] + rng.normal(size=n))
    nu = {"p": np.full(n, 0.7), "h": rng.normal(scale=0.3, size=n)}
    return Dataset(y=y, d=d, x=x), nu


def test_missing_data_fit_beats_lattice_search():
    data, nu = _toy_missing()
    lam = 0.05
    res = fit_second_stage(data, "missing", nu, lam, cfg=TIGHT)
    x, d, y, p, h = data["x"], data["d"], data["y"], nu["p"], nu["h"]
    # objective written out by hand: mean(d (x't - y)^2 / 2p + h (d - p) x't) + lam |t|_1
    H = (x * (d / p)[:, None]).T @ x / data.n
    b = x.T @ (d * y / p) / data.n - x.T @ (h * (d - p)) / data.n
    c = np.mean(d * y * y / (2 * p))

    def F(T):
        T = np.atleast_2d(T)
        return 0.5 * np.einsum("ij,jk,ik->i", T, H, T) - T @ b + c + lam * np.abs(T).sum(axis=1)

    direct = np.mean(d * (x @ res.theta_hat - y) ** 2 / (2 * p) + h * (d - p) * (x @ res.theta_hat))
    assert F(res.theta_hat)[0] == pytest.approx(direct + lam * np.abs(res.theta_hat).sum(), rel=1e-12)
    # pitch-1e-3 lattice on a box around the minimizer
    centre = np.round(res.theta_hat, 3)
    _, fmin = lattice_argmin(F, centre - 0.006, centre + 0.006, 1e-3)
    assert F(res.theta_hat)[0] <= fmin + 1e-5
    ref = coordinate_descent(lambda t: H @ t - b, 5, lam)
    assert F(res.theta_hat)[0] <= F(ref)[0] + 1e-9


def _plr_problem(n=3600, seed=0):
    data, truth = generate(preset("plr", n=n), seed)
    folds = make_folds(data.n, 3, seed)
    nu = nuisance_on_rows(data, "plr", folds, 0)
    return data, truth, folds, nu


@functools.lru_cache(maxsize=1)
def _plr_cached():
    return _plr_problem()


def test_algorithm2_large_radii_matches_algorithm1():
    data, _, folds, nu = _plr_problem()
    lam = caption_lambda(data.n, 100, "plr")
    plan = make_penalty_plan(data.n, 100).override(lambda_pre=lam, lambda_fin=lam, R0=1e6, R1=1e6)
    cfg = SolverConfig(tol=1e-13, max_iters=100_000)
    with pytest.warns(UserWarning, match="convex"):
        a2 = algorithm2(data, "plr", plan, folds=folds, nuisance=nu, cfg=cfg)
    a1 = algorithm1(data, "plr", folds=folds, nuisance=nu, lam=lam, nuisance_fold=0,
                    estimation_fold=2, cfg=cfg)
    assert np.linalg.norm(a2.theta_hat - a1.theta_hat) <= 1e-4


@settings(max_examples=15)
@given(st.floats(1e-4, 0.5))
def test_algorithm2_stays_within_final_radius(R1):
    data, _, folds, nu = _plr_cached()
    lam = caption_lambda(data.n, 100, "plr")
    plan = make_penalty_plan(data.n, 100).override(lambda_pre=lam, lambda_fin=lam, R0=5.0, R1=R1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = algorithm2(data, "plr", plan, folds=folds, nuisance=nu)
    assert np.abs(res.theta_hat - res.extra["theta_tilde"]).sum() <= R1 + 1e-10



def test_algorithm2_already_optimal_start_stays_put():
    data, _, folds, nu = _plr_cached()
    lam = caption_lambda(data.n, 100, "plr")
    plan = make_penalty_plan(data.n, 100).override(lambda_pre=lam, lambda_fin=lam, R0=1e6, R1=1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = algorithm2(data, "plr", plan, folds=folds, nuisance=nu)
    assert np.abs(res.theta_hat - res.extra["theta_tilde"]).sum() <= 1e-3 + 1e-10


def test_algorithm2_argument_errors():
    data, _, folds, nu = _plr_cached()
    plan = make_penalty_plan(data.n, 100)
    with pytest.raises(ConfigurationError):
        algorithm2(data, "plr", plan.override(R1=0.0), folds=folds, nuisance=nu)
    with pytest.raises(ConfigurationError):
        algorithm2(data, "plr", plan, folds=make_folds(data.n, 2, 0), nuisance=nu)


def test_algorithm1_folds_must_differ():
    data, _, folds, nu = _plr_cached()
    with pytest.raises(ConfigurationError):
        algorithm1(data, "plr", folds=folds, nuisance=nu, lam=0.1, nuisance_fold=1, estimation_fold=1)


@pytest.mark.slow
def test_algorithm2_final_step_improves_on_preliminary():
    cfg = preset("logit-te")
    wins = 0
    for s in range(50):
        data, truth = generate(cfg, s)
        m = data.n // 3
        plan = make_penalty_plan(m, cfg.p, R0=5.0, R1=1.0).anchored(caption_lambda(m, cfg.p, "logit-te"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = algorithm2(data, "logit-te", plan, seed=s)
        fin = np.linalg.norm(res.theta_hat - truth.theta0)
        pre = np.linalg.norm(res.extra["theta_tilde"] - truth.theta0)
        wins += fin <= pre
    assert wins >= 35


def test_cross_fit_with_injected_truth_equals_pooled_fit():
    data, truth = generate(preset("missing"), 0)
    nu = NuisanceFit.injected(truth.nuisance(data))
    lam = caption_lambda(data.n, 20, "missing")
    a = cross_fit_estimate(data, "missing", nuisance=nu, lam=lam)
    b = fit_second_stage(data, "missing", truth.nuisance(data), lam)
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


def test_cross_fit_is_deterministic():
    data, _ = generate(preset("missing"), 3)
    lam = caption_lambda(data.n, 20, "missing")
    a = cross_fit_estimate(data, "missing", lam=lam, seed=5)
    b = cross_fit_estimate(data, "missing", lam=lam, seed=5)
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)
    assert a.extra["g_n_estimate"] == b.extra["g_n_estimate"]


def test_gram_path_matches_row_path_for_squared_losses():
    data, truth = generate(preset("missing"), 1)
    nu = truth.nuisance(data)
    lam = caption_lambda(data.n, 20, "missing")
    a = fit_second_stage(data, "missing", nu, lam, cfg=TIGHT)
    b = fit_second_stage(data, "missing", nu, lam, cfg=TIGHT, gram=True)
    np.testing.assert_allclose(a.theta_hat, b.theta_hat, atol=1e-10)


def test_result_serialises():
    data, truth = generate(preset("missing", n=1000), 0)
    res = cross_fit_estimate(data, "missing", lam=0.05).with_truth(truth.theta0)
    d = res.to_dict()
    assert set(d) >= {"theta_hat", "support", "lambda_used", "diagnostics", "metrics"}
    assert len(d["theta_hat"]) == 20


@pytest.mark.slow
def test_cross_fitting_beats_single_split_at_small_n():
    cfg = preset("plr")
    ctx = MethodContext()
    cross, single = [], []
    for s in range(20):
        data, truth = generate(cfg, s)
        cross.append(run_method("Ortho", data, "plr", truth, ctx).with_truth(truth.theta0).l2_error)
        single.append(run_method("OrthoPlugIn", data, "plr", truth, ctx).with_truth(truth.theta0).l2_error)
    assert np.median(cross) <= np.median(single)
