"""Two-stage penalized estimators: plug-in (convex), preliminary-step
(shrinking l1 ball) and cross-fitted variants, plus penalty planning."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .applications import loss_for, resolve_model
from .data import NuisanceFit, make_folds
from .errors import ConfigurationError, InvalidArgumentError
from .first_stage import build_nuisance, nuisance_on_rows
from .solver import SearchSet, prox_grad_minimize

__all__ = [
    "SUPPORT_TOL",
    "PenaltyPlan",
    "make_penalty_plan",
    "caption_lambda",
    "EstimationResult",
    "fit_second_stage",
    "algorithm1",
    "algorithm2",
    "cross_fit_estimate",
    "error_metrics",
]

SUPPORT_TOL = 1e-10


@dataclass(frozen=True)
class PenaltyPlan:
    """Penalty levels and search radii derived from the error-bound constants."""

    n: int
    p: int
    k_guess: int
    delta: float
    U: float
    g_n: float
    gamma_guess: float
    R0: float
    epsilon: float
    B: float
    L: float
    tau: float
    R1: float
    lambda_main: float
    lambda_pre: float
    lambda_fin: float

    def override(self, **kw):
        """Replace penalty levels or radii by hand (e.g. a caption preset)."""
        allowed = {"lambda_main", "lambda_pre", "lambda_fin", "R0", "R1"}
        bad = set(kw) - allowed
        if bad:
            raise InvalidArgumentError(f"cannot override {sorted(bad)}")
        return replace(self, **{k: float(v) for k, v in kw.items()})

    def anchored(self, lambda_fin):
        """Scale all three penalties so ``lambda_fin`` hits the given level
        while their ratios stay as the error bounds dictate."""
        if lambda_fin <= 0:
            raise InvalidArgumentError("lambda_fin must be positive")
        c = lambda_fin / self.lambda_fin
        return replace(self, lambda_main=self.lambda_main * c, lambda_pre=self.lambda_pre * c,
                       lambda_fin=float(lambda_fin))

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def make_penalty_plan(n, p, k_guess=None, delta=0.05, U=1.0, g_n=0.0, gamma_guess=1.0, R0=1.0,
                      R1=None):
    """Evaluate the penalty rules with equality (each lambda is twice its bound).

    ``R1`` defaults to the radius implied by ``R0``; passing it fixes the final
    radius and ``lambda_fin`` is computed from that value instead.
    """
    if n < 1 or p < 1:
        raise InvalidArgumentError("n and p must be positive")
    if not 0 < delta < 1:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    if U <= 0 or gamma_guess <= 0 or g_n < 0 or R0 < 0:
        raise InvalidArgumentError("U, gamma_guess must be positive; g_n, R0 nonnegative")
    if k_guess is None:
        k_guess = max(1, math.ceil(math.sqrt(n) / math.log(max(p, 2))))
    logp = math.log(p) if p > 1 else 0.0
    eps = U ** 2 * math.sqrt(math.log(2 * p / delta) / (2 * n))
    B = 4 * U ** 3
    L = 3 * U ** 3
    tau = (4 * U ** 5 * k_guess * math.sqrt(2 * logp / n)
           + U ** 3 * math.sqrt(4 * math.log(2 * p / delta) / n))
    base = eps + B * g_n ** 2
    if R1 is None:
        R1 = (8 * k_guess / gamma_guess) * (base + (tau + L * g_n) * R0)
    elif R1 < 0:
        raise InvalidArgumentError("R1 must be nonnegative")
    return PenaltyPlan(
        n=int(n), p=int(p), k_guess=int(k_guess), delta=float(delta), U=float(U), g_n=float(g_n),
        gamma_guess=float(gamma_guess), R0=float(R0), epsilon=eps, B=B, L=L, tau=tau, R1=float(R1),
        lambda_main=2 * base,
        lambda_pre=2 * (base + (tau + L * g_n) * R0),
        lambda_fin=2 * (base + (tau + L * g_n) * R1),
    )


def caption_lambda(n, p, model):
    """Fixed-rate presets: ``sqrt(log p / (4n))`` for games, ``sqrt(log p / n)`` otherwise."""
    model = resolve_model(model)
    denom = 4.0 * n if model == "games" else float(n)
    return math.sqrt(math.log(p) / denom)


def error_metrics(theta_hat, theta0):
    nu = np.asarray(theta_hat) - np.asarray(theta0)
    T = np.abs(np.asarray(theta0)) > 0
    return {
        "l1_error": float(np.abs(nu).sum()),
        "l2_error": float(np.sqrt(nu @ nu)),
        "linf_error": float(np.abs(nu).max(initial=0.0)),
        "cone": (float(np.abs(nu[~T]).sum()), float(np.abs(nu[T]).sum())),
    }


@dataclass
class EstimationResult:
    theta_hat: np.ndarray
    lambda_used: float
    diagnostics: dict
    method: str = ""
    l1_error: Optional[float] = None
    l2_error: Optional[float] = None
    cone_report: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    @property
    def support(self):
        return np.flatnonzero(np.abs(self.theta_hat) > SUPPORT_TOL)

    def with_truth(self, theta0):
        m = error_metrics(self.theta_hat, theta0)
        self.l1_error, self.l2_error, self.cone_report = m["l1_error"], m["l2_error"], m["cone"]
        return self

    def to_dict(self):
        out = {
            "method": self.method,
            "theta_hat": [float(v) for v in self.theta_hat],
            "support": [int(j) for j in self.support],
            "lambda_used": float(self.lambda_used),
            "diagnostics": self.diagnostics,
        }
        if self.l2_error is not None:
            out["metrics"] = {"l1_error": self.l1_error, "l2_error": self.l2_error,
                              "cone": list(self.cone_report)}
        for k, v in self.extra.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def _nuisance_cols(nuisance, rows=None):
    if isinstance(nuisance, NuisanceFit):
        return nuisance if rows is None else nuisance.subset(rows)
    cols = {k: np.asarray(v, dtype=float) for k, v in nuisance.items()}
    return cols if rows is None else {k: v[rows] for k, v in cols.items()}


def fit_second_stage(data, app, nuisance, lam, orthogonal=True, search_set=None, init=None,
                     cfg=None, method="", gram=False):
    """Minimize the (corrected or plain) penalized loss on ``data``.

    ``gram=True`` swaps in the quadratic expansion of the loss; only exact
    for models with a squared-loss moment.
    """
    cl = loss_for(app, nuisance, orthogonal)
    bound = cl.bind(data)
    obj = bound.quadratic_objective() if gram else bound.objective()
    theta, diag = prox_grad_minimize(obj, lam, search_set, init, cfg)
    return EstimationResult(theta, float(lam), diag.as_dict(), method)


def _require_convex(app):
    if not loss_for(app).convex:
        raise ConfigurationError(f"{app}: loss is not convex in theta; use algorithm2")


def algorithm1(data, app, plan=None, folds=None, cfg=None, fs_cfg=None, nuisance=None,
               orthogonal=True, lam=None, nuisance_fold=0, estimation_fold=1, seed=0):
    """Fit the nuisance on one fold and the penalized loss on another.

    ``nuisance`` (full-length, e.g. the truth) skips the first stage. ``lam``
    overrides ``plan.lambda_main``.
    """
    app = resolve_model(app)
    _require_convex(app)
    folds = folds or make_folds(data.n, 2, seed)
    if nuisance_fold == estimation_fold:
        raise ConfigurationError("nuisance and estimation folds must differ")
    rows = folds.indices(estimation_fold)
    if nuisance is None:
        nuisance = nuisance_on_rows(data, app, folds, nuisance_fold, fs_cfg)
    lam = plan.lambda_main if lam is None else lam
    res = fit_second_stage(data.subset(rows), app, _nuisance_cols(nuisance, rows), lam,
                           orthogonal, cfg=cfg, method="algorithm1")
    if isinstance(nuisance, NuisanceFit) and "theta_tilde" in nuisance.params:
        res.extra["theta_tilde"] = nuisance.params["theta_tilde"]
    return res


def cross_fit_estimate(data, app, plan=None, folds=None, cfg=None, fs_cfg=None, nuisance=None,
                       orthogonal=True, lam=None, seed=0):
    """Two-fold cross-fitted nuisance, then a single pooled second-stage solve."""
    app = resolve_model(app)
    _require_convex(app)
    if nuisance is None:
        folds = folds or make_folds(data.n, 2, seed)
        nuisance = build_nuisance(data, app, folds, fs_cfg)
    lam = plan.lambda_main if lam is None else lam
    res = fit_second_stage(data, app, _nuisance_cols(nuisance), lam, orthogonal, cfg=cfg,
                           method="cross_fit")
    if isinstance(nuisance, NuisanceFit) and "g_n" in nuisance.params:
        res.extra["g_n_estimate"] = nuisance.params["g_n"]
    return res


def algorithm2(data, app, plan, folds=None, cfg=None, fs_cfg=None, nuisance=None,
               orthogonal=True, lam_pre=None, lam_fin=None, seed=0):
    """Nuisance on fold 0, preliminary solve on ball(0, R0) with fold 1, final
    solve on ball(theta_tilde, R1) with fold 2 starting at ``theta_tilde``."""
    app = resolve_model(app)
    if plan.R1 <= 0:
        raise ConfigurationError("R1 must be positive")
    if plan.R0 < 0:
        raise ConfigurationError("R0 must be nonnegative")
    folds = folds or make_folds(data.n, 3, seed)
    if folds.n_folds != 3:
        raise ConfigurationError("algorithm2 needs a three-fold plan")
    if loss_for(app).convex:
        warnings.warn(f"{app} loss is convex; algorithm1 suffices", stacklevel=2)
    if nuisance is None:
        nuisance = nuisance_on_rows(data, app, folds, 0, fs_cfg)
    p = plan.p
    r1, r2 = folds.indices(1), folds.indices(2)
    lam_pre = plan.lambda_pre if lam_pre is None else lam_pre
    lam_fin = plan.lambda_fin if lam_fin is None else lam_fin
    pre = fit_second_stage(data.subset(r1), app, _nuisance_cols(nuisance, r1), lam_pre, orthogonal,
                           SearchSet.ball(np.zeros(p), plan.R0), np.zeros(p), cfg, "preliminary")
    theta_t = pre.theta_hat
    fin = fit_second_stage(data.subset(r2), app, _nuisance_cols(nuisance, r2), lam_fin, orthogonal,
                           SearchSet.ball(theta_t, plan.R1), theta_t, cfg, "algorithm2")
    fin.extra["theta_tilde"] = theta_t
    fin.extra["R1"] = plan.R1
    fin.extra["preliminary_diagnostics"] = pre.diagnostics
    return fin
