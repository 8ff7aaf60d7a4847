"""Comparison estimators: one-stage Direct fits, non-orthogonal plug-in (IPS,
2SLG) and oracle variants that receive the true nuisance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..applications import resolve_model
from ..data import make_folds, stream
from ..errors import ConfigurationError
from ..estimators import (EstimationResult, algorithm1, caption_lambda, cross_fit_estimate,
                          fit_second_stage, make_penalty_plan)
from ..first_stage import FirstStageConfig, build_nuisance, fit_sparse
from ..solver import SolverConfig

__all__ = [
    "MethodContext",
    "cv_lambda",
    "baseline_direct",
    "baseline_ips_and_oracles",
    "METHODS",
    "DEFAULT_METHODS",
    "run_method",
]


@dataclass
class MethodContext:
    """Penalty and solver settings shared by all methods in a run.

    ``lambda_rule`` is ``"caption"`` (fixed-rate preset), ``"theorem"``
    (``lambda_main`` of :func:`make_penalty_plan`) or ``"manual"``. When
    ``fs`` is left unset the first stage uses the same fixed-rate preset,
    with post-selection refits.
    """

    lambda_rule: str = "caption"
    lambda_value: Optional[float] = None
    direct_cv: bool = False
    U: float = 1.0
    delta: float = 0.05
    seed: int = 0
    fs: Optional[FirstStageConfig] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.lambda_rule not in ("caption", "theorem", "manual"):
            raise ConfigurationError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.lambda_rule == "manual" and self.lambda_value is None:
            raise ConfigurationError("manual lambda rule needs a value")

    def first_stage(self, model):
        if self.fs is not None:
            return self.fs
        divisor = 4.0 if resolve_model(model) == "games" else 1.0
        return FirstStageConfig(lambda_rule="caption", caption_divisor=divisor)

    def lam(self, n, p, model):
        if self.lambda_rule == "manual":
            return float(self.lambda_value)
        if self.lambda_rule == "caption":
            return caption_lambda(n, p, model)
        return make_penalty_plan(n, p, delta=self.delta, U=self.U).lambda_main


def cv_lambda(X, y, family="linear", n_folds=5, grid=None, seed=0, fit_kw=None):
    """K-fold cross-validated penalty for a squared or logistic fit.

    The default grid is 20 log-spaced values from the zero-solution level
    down by three decades. Returns the grid value with the lowest mean
    held-out loss.
    """
    fit_kw = dict(fit_kw or {})
    n = X.shape[0]
    if grid is None:
        if family == "linear":
            lam_max = 2.0 * np.abs(X.T @ (y - y.mean())).max() / n
        else:
            lam_max = np.abs(X.T @ (y - y.mean())).max() / n
        grid = lam_max * np.logspace(0, -3, 20)
    perm = stream(seed, 0, "cv").permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % n_folds
    cfg = SolverConfig(tol=1e-7, max_iters=2000)
    losses = np.zeros(len(grid))
    for f in range(n_folds):
        tr, te = fold_of != f, fold_of == f
        fit = None
        for j, lam in enumerate(grid):  # decreasing path, warm-started
            fit = fit_sparse(X[tr], y[tr], lam, family, cfg=cfg, init=fit, **fit_kw)
            eta = fit.linear_predictor(X[te])
            if family == "linear":
                losses[j] += np.mean((y[te] - eta) ** 2)
            else:
                losses[j] += np.mean(np.logaddexp(0.0, eta) - y[te] * eta)
    return float(grid[int(np.argmin(losses))])


def _direct_linear(X, y, p, lam, ctx, **kw):
    # (1/2n) sum r^2 + lam ||.||_1  ==  (1/n) sum r^2 + 2 lam ||.||_1
    if ctx.direct_cv:
        lam2 = cv_lambda(X, y, "linear", seed=ctx.seed, fit_kw=kw)
    else:
        lam2 = 2.0 * lam
    fit = fit_sparse(X, y, lam2, "linear", cfg=ctx.solver, **kw)
    return fit.coef[:p], lam2 / 2.0


def baseline_direct(data, model, ctx=None):
    """One-stage penalized regression of the outcome on target and control
    regressors jointly; the target block of the coefficients is returned."""
    model = resolve_model(model)
    ctx = ctx or MethodContext()
    if model == "games":
        # without orthogonal correction the two-stage logistic fit is the direct method
        lam = ctx.lam(data.n, data["x"].shape[1] + 1, model)
        res = cross_fit_estimate(data, model, lam=lam, orthogonal=False,
                                 fs_cfg=ctx.first_stage(model), cfg=ctx.solver, seed=ctx.seed)
        res.method = "direct"
        return res
    x = data["x"]
    p = x.shape[1]
    lam = ctx.lam(data.n, p, model)
    if model == "partially_linear":
        X = np.hstack([data["tau"][:, None] * x, data["u"]])
        theta, lam_used = _direct_linear(X, data["y"], p, lam, ctx)
    elif model == "logistic_te":
        X = np.hstack([data["tau"][:, None] * x, data["u"]])
        lam_used = cv_lambda(X, data["y"], "logistic", seed=ctx.seed) if ctx.direct_cv else lam
        theta = fit_sparse(X, data["y"], lam_used, "logistic", cfg=ctx.solver).coef[:p]
    else:  # missing data: observed rows, regress y on (x, x*u)
        keep = data["d"] > 0
        X = np.hstack([x, (x[:, :, None] * data["u"][:, None, :]).reshape(data.n, -1)])
        theta, lam_used = _direct_linear(X[keep], data["y"][keep], p, lam, ctx,
                                         fit_intercept=True)
    return EstimationResult(np.asarray(theta), float(lam_used), {}, "direct")


def baseline_ips_and_oracles(data, model, method, truth=None, ctx=None, cache=None):
    """Plug-in variants.

    ``method`` is one of ``ortho`` / ``naive`` (cross-fitted nuisance, with or
    without the correction term), ``ortho_plugin`` (single split), or
    ``oracle_ortho`` / ``oracle_naive`` (true nuisance, needs ``truth``).
    ``cache`` (a dict scoped to one dataset) shares the cross-fitted nuisance
    between ``ortho`` and ``naive``.
    """
    model = resolve_model(model)
    ctx = ctx or MethodContext()
    p = data["x"].shape[1] + (1 if model == "games" else 0)
    lam = ctx.lam(data.n, p, model)
    orthogonal = method in ("ortho", "ortho_plugin", "oracle_ortho")
    if method.startswith("oracle"):
        if truth is None:
            raise ConfigurationError(f"{method} needs the true nuisance")
        res = fit_second_stage(data, model, truth.nuisance(data), lam, orthogonal, cfg=ctx.solver)
    elif method == "ortho_plugin":
        res = algorithm1(data, model, lam=lam, fs_cfg=ctx.first_stage(model), cfg=ctx.solver,
                         seed=ctx.seed)
    elif method in ("ortho", "naive"):
        nuis = None
        if cache is not None:
            if "cross_fit" not in cache:
                folds = make_folds(data.n, 2, ctx.seed)
                cache["cross_fit"] = build_nuisance(data, model, folds, ctx.first_stage(model))
            nuis = cache["cross_fit"]
        res = cross_fit_estimate(data, model, lam=lam, orthogonal=orthogonal,
                                 fs_cfg=ctx.first_stage(model), cfg=ctx.solver, seed=ctx.seed,
                                 nuisance=nuis)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    res.method = method
    return res


# reported method name -> estimator variant, per model
METHODS = {
    "partially_linear": {"Ortho": "ortho", "OrthoPlugIn": "ortho_plugin", "Direct": "direct",
                         "Oracle": "oracle_ortho"},
    "logistic_te": {"Ortho": "ortho", "Direct": "direct", "Oracle": "oracle_ortho"},
    "missing_data": {"Ortho": "ortho", "IPS": "naive", "Direct": "direct",
                     "OracleOrtho": "oracle_ortho", "OracleIPS": "oracle_naive"},
    "games": {"2SOrthoLG": "ortho", "2SLG": "naive", "OracleLG": "oracle_naive"},
}

DEFAULT_METHODS = {k: list(v) for k, v in METHODS.items()}


def run_method(name, data, model, truth=None, ctx=None, cache=None):
    model = resolve_model(model)
    try:
        variant = METHODS[model][name]
    except KeyError:
        raise ConfigurationError(
            f"unknown method {name!r} for {model}; expected one of {sorted(METHODS[model])}"
        ) from None
    if variant == "direct":
        res = baseline_direct(data, model, ctx)
    else:
        res = baseline_ips_and_oracles(data, model, variant, truth, ctx, cache)
    res.method = name
    return res
