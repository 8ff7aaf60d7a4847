"""First-stage nuisance estimation: sparse linear/logistic fits and per-model
nuisance builders with cross-fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .applications import SCHEMAS, V_FLOOR, missing_data_loss, resolve_model
from .data import NuisanceFit
from .errors import ConfigurationError, DataIntegrityError, InvalidArgumentError
from .solver import ObjectiveHandle, SolverConfig, prox_grad_minimize

__all__ = [
    "FirstStageConfig",
    "LassoFit",
    "lasso_linear",
    "lasso_logistic",
    "fit_sparse",
    "first_stage_lambda",
    "preliminary_theta",
    "fit_nuisance_model",
    "nuisance_on_rows",
    "build_nuisance",
    "polynomial_features",
]


@dataclass(frozen=True)
class FirstStageConfig:
    """Settings shared by every first-stage fit.

    ``lambda_rule``:
      * ``"rate"``: ``scale * s * sqrt(2 log(2d/delta) / n)`` on standardized
        features, with ``s = 2 * sd(response)`` (linear) or ``1/2`` (logistic);
      * ``"theorem"``: :func:`first_stage_lambda` with ``B_bar``/``sigma_bar``;
      * ``"caption"``: the fixed rate ``sqrt(log d / (caption_divisor * n))``
        on the half-squared / logistic scale (doubled for the squared loss);
      * ``"manual"``: ``lambda_value`` for every fit.

    Under ``"rate"`` the linear noise scale is re-estimated once from the
    residuals of a first pass. ``post_lasso`` refits the selected support
    without penalty, removing shrinkage bias from the nuisance predictions.
    """

    lambda_rule: str = "rate"
    scale: float = 1.0
    caption_divisor: float = 1.0
    lambda_value: float = 0.0
    delta: float = 0.05
    B_bar: float = 1.0
    sigma_bar: float = 1.0
    propensity_clip: tuple = (0.01, 0.99)
    v_floor: float = V_FLOOR
    min_rows_per_feature: float = 10.0
    post_lasso: bool = True
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-9))

    def __post_init__(self):
        if self.lambda_rule not in ("rate", "theorem", "caption", "manual"):
            raise ConfigurationError(f"unknown first-stage lambda rule {self.lambda_rule!r}")
        lo, hi = self.propensity_clip
        if not 0 < lo < hi < 1:
            raise ConfigurationError("propensity clip must satisfy 0 < lo < hi < 1")

    def lam(self, n, d, family, response=None):
        if self.lambda_rule == "manual":
            return self.lambda_value
        if self.lambda_rule == "theorem":
            return first_stage_lambda(n, d, self.delta, self.B_bar, self.sigma_bar, family)
        if self.lambda_rule == "caption":
            base = math.sqrt(math.log(max(d, 2)) / (self.caption_divisor * n))
            return 2.0 * base if family == "linear" else base
        if family == "linear":
            s = 2.0 * float(np.std(response)) if response is not None else 2.0
        else:
            s = 0.5
        return self.scale * s * math.sqrt(2.0 * math.log(2.0 * d / self.delta) / n)


@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    objective: float
    lam: float
    diagnostics: object = None

    @property
    def support(self):
        return np.flatnonzero(np.abs(self.coef) > 1e-10)

    def linear_predictor(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataIntegrityError(f"design {X.shape} and response {y.shape} do not align")
    for name, arr in (("design", X), ("response", y)):
        bad = np.flatnonzero(~np.isfinite(arr.reshape(arr.shape[0], -1)).all(axis=1))
        if bad.size:
            raise DataIntegrityError(f"non-finite {name} value at row {int(bad[0])}", row=int(bad[0]))
    return X, y


def _squared_objective(A, y, w):
    """Weighted mean squared residual ``sum w (y - A b)^2 / sum w`` (no 1/2)."""
    wn = w / w.sum()
    n, d = A.shape
    if n >= d:
        Aw = A * wn[:, None]
        G = A.T @ Aw
        c = Aw.T @ y
        yy = float(wn @ (y * y))

        def both(b):
            Gb = G @ b
            return float(b @ Gb - 2.0 * c @ b + yy), 2.0 * (Gb - c)
    else:
        def both(b):
            r = y - A @ b
            return float(wn @ (r * r)), -2.0 * (A.T @ (wn * r))

    return ObjectiveHandle(lambda b: both(b)[0], lambda b: both(b)[1], d, both)


def _logistic_objective(A, v, w):
    wn = w / w.sum()
    d = A.shape[1]

    def both(b):
        s = A @ b
        val = float(wn @ (-log_expit(-s) - v * s))
        return val, A.T @ (wn * (expit(s) - v))

    return ObjectiveHandle(lambda b: both(b)[0], lambda b: both(b)[1], d, both)


def fit_sparse(X, y, lam, family="linear", sample_weight=None, fit_intercept=False,
               standardize=False, cfg=None, init=None):
    """Penalized linear or logistic fit returning a :class:`LassoFit`.

    The intercept (when fitted) is unpenalized. With ``standardize`` the
    penalty applies to coefficients of centered, unit-variance columns;
    returned coefficients are on the original scale. ``init`` is an optional
    earlier :class:`LassoFit` used as a warm start.
    """
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    X, y = _check_xy(X, y)
    if family == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataIntegrityError("logistic response must be binary")
    if family not in ("linear", "logistic"):
        raise InvalidArgumentError(f"unknown family {family!r}")
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise InvalidArgumentError("sample weights must be nonnegative with positive sum")
    mu = np.zeros(d)
    sd = np.ones(d)
    if standardize:
        wn = w / w.sum()
        mu = wn @ X if fit_intercept else np.zeros(d)
        sd = np.sqrt(wn @ (X - mu) ** 2)
        sd[sd < 1e-12] = 1.0
    A = (X - mu) / sd
    pen_w = np.ones(d)
    if fit_intercept:
        A = np.column_stack([np.ones(n), A])
        pen_w = np.concatenate([[0.0], pen_w])
    obj = _squared_objective(A, y, w) if family == "linear" else _logistic_objective(A, y, w)
    b_init = None
    if init is not None:
        b_init = init.coef * sd
        if fit_intercept:
            b_init = np.concatenate([[init.intercept + float(mu @ init.coef)], b_init])
    b, diag = prox_grad_minimize(obj, lam, init=b_init, cfg=cfg or SolverConfig(), weights=pen_w)
    b0 = 0.0
    if fit_intercept:
        b0, b = float(b[0]), b[1:]
    coef = b / sd
    return LassoFit(coef, b0 - float(mu @ coef), diag.objective, lam, diag)


def lasso_linear(X, y, lambda_alpha, cfg=None):
    """``argmin (1/n) sum (y_i - X_i'a)^2 + lambda_alpha ||a||_1``."""
    return fit_sparse(X, y, lambda_alpha, "linear", cfg=cfg).coef


def lasso_logistic(X, v, lambda_alpha, cfg=None):
    """``argmin (1/n) sum logistic-deviance(v_i, X_i'a) + lambda_alpha ||a||_1``."""
    return fit_sparse(X, v, lambda_alpha, "logistic", cfg=cfg).coef


def first_stage_lambda(n, d, delta, B_bar, sigma_bar, family):
    if n < 1 or d < 1 or not 0 < delta < 1:
        raise InvalidArgumentError("need n, d >= 1 and 0 < delta < 1")
    root = math.sqrt(math.log(2.0 * d / delta) / n)
    if family == "linear":
        return 2.0 * (B_bar ** 2 + sigma_bar) * root
    if family == "logistic":
        return 2.0 * (B_bar ** 2 / 4.0 + B_bar / 4.0) * root
    raise InvalidArgumentError(f"unknown family {family!r}")


def preliminary_theta(data, uncorrected_loss, lambda_fs, cfg=None):
    """Penalized fit of the uncorrected loss; used to seed correction terms."""
    if uncorrected_loss.correction is not None:
        raise InvalidArgumentError("preliminary fit expects a loss without correction")
    if not uncorrected_loss.convex:
        raise InvalidArgumentError("preliminary fit requires a moment monotone in the index")
    bound = uncorrected_loss.bind(data)
    theta, _ = prox_grad_minimize(bound.objective(), lambda_fs, cfg=cfg)
    return theta


def polynomial_features(x, u=None):
    """``(x, u, x*u, u^2, x*u^2)`` with all pairwise products; ``x`` alone if no ``u``."""
    if u is None:
        return np.asarray(x, dtype=float)
    n = x.shape[0]
    xu = (x[:, :, None] * u[:, None, :]).reshape(n, -1)
    u2 = u * u
    xu2 = (x[:, :, None] * u2[:, None, :]).reshape(n, -1)
    return np.hstack([x, u, xu, u2, xu2])


# --- per-model nuisance models -------------------------------------------
# Each trainer takes the training Dataset and returns a predict(w) -> dict.


def _refit(X, y, fit, family, fs, intercept=True, **kw):
    S = fit.support
    if not fs.post_lasso or S.size == 0 or S.size >= 0.5 * X.shape[0]:
        return fit
    sub = fit_sparse(X[:, S], y, 0.0, family, fit_intercept=intercept, standardize=True,
                     cfg=fs.solver, **kw)
    coef = np.zeros(X.shape[1])
    coef[S] = sub.coef
    return LassoFit(coef, sub.intercept, sub.objective, fit.lam, sub.diagnostics)


def _linear_fit(X, y, fs, **kw):
    n, d = X.shape
    lam = fs.lam(n, d, "linear", y)
    fit = fit_sparse(X, y, lam, "linear", fit_intercept=True, standardize=True, cfg=fs.solver, **kw)
    if fs.lambda_rule == "rate":
        resid = y - fit.linear_predictor(X)
        lam = fs.lam(n, d, "linear", resid)
        fit = fit_sparse(X, y, lam, "linear", fit_intercept=True, standardize=True,
                         cfg=fs.solver, **kw)
    return _refit(X, y, fit, "linear", fs, **kw)


def _logistic_fit(X, y, fs, intercept=True, **kw):
    lam = fs.lam(X.shape[0], X.shape[1], "logistic")
    fit = fit_sparse(X, y, lam, "logistic", fit_intercept=intercept, standardize=True,
                     cfg=fs.solver, **kw)
    return _refit(X, y, fit, "logistic", fs, intercept, **kw)


def _train_partially_linear(w, fs):
    x, u = w["x"], w["u"]
    p = x.shape[1]
    tau_fit = _linear_fit(u, w["tau"], fs)
    joint = _linear_fit(np.hstack([w["tau"][:, None] * x, u]), w["y"], fs)
    theta_t, alpha = joint.coef[:p], joint.coef[p:]

    def predict(z):
        h = tau_fit.linear_predictor(z["u"])
        q = h * (z["x"] @ theta_t) + z["u"] @ alpha + joint.intercept
        return {"h": h, "q": q}

    return predict, {"theta_tilde": theta_t}


def _train_logistic_te(w, fs):
    x, u = w["x"], w["u"]
    p = x.shape[1]
    tau_fit = _linear_fit(u, w["tau"], fs)
    joint = _logistic_fit(np.hstack([w["tau"][:, None] * x, u]), w["y"], fs, intercept=False)
    theta_t, alpha = joint.coef[:p], joint.coef[p:]

    def predict(z):
        pi = tau_fit.linear_predictor(z["u"])
        xt = z["x"] @ theta_t
        ua = z["u"] @ alpha
        s = z["tau"] * xt + ua
        V = np.maximum(expit(s) * (1.0 - expit(s)), fs.v_floor)
        return {"h": pi, "q": pi * xt + ua, "V": V}

    return predict, {"theta_tilde": theta_t}


def _train_missing_data(w, fs):
    x = w["x"]
    u = w["u"] if "u" in w else None
    z = x if u is None else np.hstack([x, u])
    lo, hi = fs.propensity_clip
    prop = _logistic_fit(z, w["d"], fs)
    p_train = np.clip(expit(prop.linear_predictor(z)), lo, hi)
    # preliminary theta from the inverse-propensity loss on this fold
    obs_y = np.where(w["d"] > 0, w["y"], 0.0)
    keep = w["d"] > 0
    if keep.sum() < 2:
        raise ConfigurationError("too few observed outcomes to fit the outcome regression")
    # the inverse-propensity loss carries a 1/2, so halve the squared-loss rule
    lam_t = fs.lam(w.n, x.shape[1], "linear", obs_y[keep])
    if fs.lambda_rule != "manual":
        lam_t *= 0.5
    ips = missing_data_loss({"p": p_train, "h": np.zeros(w.n)}).uncorrected()
    theta_t = preliminary_theta(w, ips, lam_t, fs.solver)
    # outcome regression on observed rows, reweighted to the full population
    F = polynomial_features(x, u)
    q_fit = _linear_fit(F[keep], obs_y[keep], fs, sample_weight=1.0 / p_train[keep])

    def predict(r):
        zr = r["x"] if u is None else np.hstack([r["x"], r["u"]])
        p_hat = np.clip(expit(prop.linear_predictor(zr)), lo, hi)
        q_hat = q_fit.linear_predictor(polynomial_features(r["x"], r["u"] if u is not None else None))
        h_u = r["x"] @ theta_t - q_hat
        return {"p": p_hat, "h": -h_u / p_hat}

    return predict, {"theta_tilde": theta_t}


def _train_games(w, fs):
    x = w["x"]
    g_fit = _logistic_fit(x, w["v"], fs)
    g_train = expit(g_fit.linear_predictor(x))
    prelim = _logistic_fit(np.column_stack([x, g_train]), w["y"], fs, intercept=False)
    theta_t = prelim.coef

    def predict(z):
        g = expit(g_fit.linear_predictor(z["x"]))
        s = np.column_stack([z["x"], g]) @ theta_t
        return {"g": g, "h": theta_t[-1] * expit(s) * (1.0 - expit(s))}

    return predict, {"theta_tilde": theta_t}


_TRAINERS = {
    "partially_linear": _train_partially_linear,
    "logistic_te": _train_logistic_te,
    "missing_data": _train_missing_data,
    "games": _train_games,
}


def _feature_dim(data, app):
    """Number of raw covariates the first stage regresses on."""
    if app in ("partially_linear", "logistic_te"):
        return data["u"].shape[1]
    d = data["x"].shape[1]
    if app == "missing_data" and "u" in data:
        d += data["u"].shape[1]
    return d


def fit_nuisance_model(train, app, fs_cfg=None):
    """Train the model's nuisance functions on ``train``.

    Returns ``(predict, params)`` where ``predict(data)`` maps nuisance role to
    per-row values.
    """
    app = resolve_model(app)
    fs = fs_cfg or FirstStageConfig()
    SCHEMAS[app].validate(train)
    d = _feature_dim(train, app)
    if train.n < fs.min_rows_per_feature * d:
        raise ConfigurationError(
            f"training fold has {train.n} rows, needs at least "
            f"{fs.min_rows_per_feature:g} x {d} covariates"
        )
    return _TRAINERS[app](train, fs)


def nuisance_on_rows(data, app, folds, train_fold, fs_cfg=None):
    """Train on ``train_fold`` and evaluate on every row of ``data``.

    Rows of the training fold get ``source_fold == row_fold``; callers should
    use only the other rows for estimation.
    """
    train_rows = folds.indices(train_fold)
    predict, params = fit_nuisance_model(data.subset(train_rows), app, fs_cfg)
    cols = predict(data)
    return NuisanceFit(cols, np.full(data.n, train_fold), folds.assignment, params,
                       {k: k for k in cols}, {int(train_fold): (int(train_fold),)})


def build_nuisance(data, app, folds, fs_cfg=None):
    """Cross-fitted nuisance: each fold is evaluated by a model trained on the
    remaining folds."""
    app = resolve_model(app)
    SCHEMAS[app].validate(data)
    roles = SCHEMAS[app].nuisance_roles
    cols = {r: np.empty(data.n) for r in roles}
    preds, params, model_folds = [], {}, {}
    for f in range(folds.n_folds):
        eval_rows = folds.indices(f)
        predict, prm = fit_nuisance_model(data.subset(folds.complement(f)), app, fs_cfg)
        pred = predict(data)
        preds.append(pred)
        for r in roles:
            cols[r][eval_rows] = pred[r][eval_rows]
        params[f"fold{f}"] = prm
        model_folds[f] = tuple(g for g in range(folds.n_folds) if g != f)
    params["g_n"] = _first_stage_spread(preds, roles)
    # model id f is the one that was evaluated on fold f
    return NuisanceFit(cols, folds.assignment, folds.assignment, params,
                       {r: r for r in roles}, model_folds)


def _first_stage_spread(preds, roles):
    """RMS disagreement of fold models divided by sqrt(2): a rough rate proxy."""
    if len(preds) < 2:
        return 0.0
    worst = 0.0
    for r in roles:
        diff = preds[0][r] - preds[1][r]
        worst = max(worst, float(np.sqrt(np.mean(diff * diff)) / math.sqrt(2.0)))
    return worst
