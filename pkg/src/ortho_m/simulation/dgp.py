"""Synthetic data generators with known parameters and nuisance functions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from ..applications import resolve_model
from ..data import Dataset, stream
from ..errors import ConfigurationError, NumericFailureError

__all__ = [
    "DGPConfig",
    "Truth",
    "PRESETS",
    "preset",
    "generate",
    "gen_partially_linear",
    "gen_missing_data",
    "gen_games",
    "gen_logistic_te",
    "solve_equilibrium",
]


@dataclass(frozen=True)
class DGPConfig:
    """Simulation design. Unused fields are ignored by a given model.

    ``d_u`` is the width of the control block ``u`` (``0`` means ``p``).
    ``k`` is the sparsity of the target, ``k_alpha``/``k_beta`` of the nuisance
    coefficients, ``k_u`` the number of active controls (missing data) and
    ``k2`` the opponent's sparsity (games).
    """

    model: str = "partially_linear"
    n: int = 2000
    p: int = 100
    d_u: int = 0
    k: int = 2
    k_alpha: int = 4
    k_beta: int = 4
    k_u: int = 1
    k2: int = 3
    theta_value: float = 1.0
    sigma_eps: float = 1.0
    sigma_eta: float = 1.0
    sigma_x: float = 1.0
    sigma_u: float = 1.0
    delta1: float = -2.0
    delta2: float = 0.0
    variant: str = "DGP1"
    seed: int = 0
    n_replications: int = 1

    def __post_init__(self):
        object.__setattr__(self, "model", resolve_model(self.model))
        if self.n < 1 or self.p < 1 or self.d_u < 0:
            raise ConfigurationError("n and p must be positive, d_u nonnegative")
        du = self.width_u
        checks = {
            "partially_linear": [(self.k, self.p), (self.k_alpha, du), (self.k_beta, du)],
            "logistic_te": [(self.k, self.p), (self.k_alpha, du), (self.k_beta, du)],
            "missing_data": [(self.k, self.p), (self.k_u, du)],
            "games": [(self.k, self.p - 1), (self.k2, self.p - 1)],
        }[self.model]
        for s, dim in checks:
            if not 0 <= s <= dim:
                raise ConfigurationError(f"sparsity {s} exceeds dimension {dim}")
        for name in ("sigma_eps", "sigma_eta", "sigma_x", "sigma_u"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.variant not in ("DGP1", "DGP2"):
            raise ConfigurationError(f"unknown games variant {self.variant!r}")
        if self.n_replications < 1:
            raise ConfigurationError("n_replications must be positive")

    @property
    def width_u(self):
        return self.d_u or self.p

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class Truth:
    """True parameter plus the true nuisance map ``nuisance(data) -> dict``."""

    theta0: np.ndarray
    nuisance: Callable
    coefficients: dict = field(default_factory=dict)

    @property
    def support(self):
        return np.flatnonzero(self.theta0 != 0)


def _lead(dim, k, value=1.0):
    v = np.zeros(dim)
    v[:k] = value
    return v


def gen_partially_linear(cfg, replication=0):
    """``y = tau x'theta + u'alpha + eps``, ``tau = u'beta + eta``, ``x = (1, u_1..u_{p-1})``."""
    rng = stream(cfg.seed, replication, "sample")
    n, p, du = cfg.n, cfg.p, cfg.width_u
    if p - 1 > du:
        raise ConfigurationError("partially linear design needs d_u >= p - 1")
    theta0 = _lead(p, cfg.k, cfg.theta_value)
    alpha0 = _lead(du, cfg.k_alpha)
    beta0 = _lead(du, cfg.k_beta)
    u = rng.standard_normal((n, du))
    x = np.column_stack([np.ones(n), u[:, : p - 1]])
    tau = u @ beta0 + cfg.sigma_eta * rng.standard_normal(n)
    y = tau * (x @ theta0) + u @ alpha0 + cfg.sigma_eps * rng.standard_normal(n)

    def nuisance(w):
        h = w["u"] @ beta0
        return {"h": h, "q": h * (w["x"] @ theta0) + w["u"] @ alpha0}

    data = Dataset(y=y, tau=tau, u=u, x=x)
    return data, Truth(theta0, nuisance, {"alpha0": alpha0, "beta0": beta0})


def gen_logistic_te(cfg, replication=0):
    """``P(y=1) = L(tau u'theta + u'alpha)``, ``tau = u'beta + eta``, ``x = u``."""
    rng = stream(cfg.seed, replication, "sample")
    n, p = cfg.n, cfg.p
    theta0 = _lead(p, cfg.k, cfg.theta_value)
    alpha0 = _lead(p, cfg.k_alpha)
    beta0 = _lead(p, cfg.k_beta)
    u = rng.uniform(-cfg.sigma_u, cfg.sigma_u, (n, p))
    tau = u @ beta0 + cfg.sigma_eta * rng.standard_normal(n)
    index = tau * (u @ theta0) + u @ alpha0
    y = (rng.random(n) < expit(index)).astype(float)

    def nuisance(w):
        pi = w["u"] @ beta0
        ut = w["u"] @ theta0
        ua = w["u"] @ alpha0
        e = expit(w["tau"] * ut + ua)
        return {"h": pi, "q": pi * ut + ua, "V": e * (1.0 - e)}

    data = Dataset(y=y, tau=tau, u=u, x=u)
    return data, Truth(theta0, nuisance, {"alpha0": alpha0, "beta0": beta0})


def gen_missing_data(cfg, replication=0):
    """Heterogeneous effects ``y = x'(theta + A1 u + A2 (u^2 - E u^2)) + eps``
    with outcome observed when ``d = 1``, ``P(d=1) = L(s (x'beta + u'gamma))``.

    Unobserved outcomes are stored as 0.
    """
    coef_rng = stream(cfg.seed, replication, "coefficients")
    rng = stream(cfg.seed, replication, "sample")
    n, p, du = cfg.n, cfg.p, cfg.width_u
    theta0 = _lead(p, cfg.k, cfg.theta_value)
    A1 = np.zeros((p, du))
    A2 = np.zeros((p, du))
    A1[: cfg.k, : cfg.k_u] = coef_rng.uniform(1.0, 2.0, (cfg.k, cfg.k_u))
    A2[: cfg.k, : cfg.k_u] = coef_rng.uniform(1.0, 2.0, (cfg.k, cfg.k_u))
    beta = coef_rng.uniform(0.0, 1.0, p)
    gamma = coef_rng.uniform(2.0, 3.0, du)
    eu2 = cfg.sigma_u ** 2 / 3.0

    x = rng.uniform(-cfg.sigma_x, cfg.sigma_x, (n, p))
    u = rng.uniform(-cfg.sigma_u, cfg.sigma_u, (n, du))
    het = u @ A1.T + (u * u - eu2) @ A2.T  # row i: A1 u_i + A2 (u_i^2 - E u^2)
    y = np.einsum("ij,ij->i", x, theta0 + het) + cfg.sigma_eps * rng.standard_normal(n)
    prop = expit(cfg.sigma_eta * (x @ beta + u @ gamma))
    d = (rng.random(n) < prop).astype(float)

    def nuisance(w):
        xx, uu = w["x"], w["u"]
        p0 = expit(cfg.sigma_eta * (xx @ beta + uu @ gamma))
        h_u = -np.einsum("ij,ij->i", xx, uu @ A1.T + (uu * uu - eu2) @ A2.T)
        return {"p": p0, "h": -h_u / p0}

    data = Dataset(y=d * y, d=d, u=u, x=x)
    coefs = {"A1": A1, "A2": A2, "beta": beta, "gamma": gamma}
    return data, Truth(theta0, nuisance, coefs)


def solve_equilibrium(a1, a2, delta1, delta2, tol=1e-13, max_iter=1000):
    """Per-row fixed point ``g1 = L(a1 + g2 d1)``, ``g2 = L(a2 + g1 d2)``."""
    if abs(delta1 * delta2) / 16.0 >= 1.0:
        raise ConfigurationError("best-response map is not a contraction for these deltas")
    g1 = expit(a1)
    g2 = expit(a2)
    for it in range(max_iter):
        n1 = expit(a1 + g2 * delta1)
        n2 = expit(a2 + n1 * delta2)
        step = max(np.max(np.abs(n1 - g1)), np.max(np.abs(n2 - g2)))
        g1, g2 = n1, n2
        if step < tol:
            break
    else:
        raise NumericFailureError("equilibrium iteration did not converge", max_iter)
    res = equilibrium_residual(g1, g2, a1, a2, delta1, delta2)
    if res >= 1e-12:
        raise NumericFailureError(f"equilibrium residual {res:.2e} too large", it)
    return g1, g2


def equilibrium_residual(g1, g2, a1, a2, delta1, delta2):
    r1 = np.abs(g1 - expit(a1 + g2 * delta1))
    r2 = np.abs(g2 - expit(a2 + g1 * delta2))
    return float(max(r1.max(initial=0.0), r2.max(initial=0.0)))


def gen_games(cfg, replication=0, variant=None):
    """Two-player entry game; parameters of player 1 are ``(alpha1, delta1)``.

    ``DGP1`` forces the opponent's interaction to zero so its belief is
    logistic-linear; ``DGP2`` solves the equilibrium with ``delta2``.
    """
    variant = variant or cfg.variant
    coef_rng = stream(cfg.seed, replication, "coefficients")
    rng = stream(cfg.seed, replication, "sample")
    n, q = cfg.n, cfg.p - 1
    alpha1 = _lead(q, cfg.k, cfg.theta_value)
    alpha2 = np.zeros(q)
    alpha2[: cfg.k2] = coef_rng.uniform(-2.0, 2.0, cfg.k2)
    d1 = cfg.delta1
    d2 = 0.0 if variant == "DGP1" else cfg.delta2
    x = rng.uniform(-cfg.sigma_x, cfg.sigma_x, (n, q))

    def beliefs(xx):
        a1, a2 = xx @ alpha1, xx @ alpha2
        if d2 == 0.0:
            g2 = expit(a2)
            return expit(a1 + g2 * d1), g2
        return solve_equilibrium(a1, a2, d1, d2)

    g1, g2 = beliefs(x)
    y = (rng.random(n) < g1).astype(float)
    v = (rng.random(n) < g2).astype(float)
    theta0 = np.concatenate([alpha1, [d1]])

    def nuisance(w):
        _, gg = beliefs(w["x"])
        s = w["x"] @ alpha1 + gg * d1
        e = expit(s)
        return {"g": gg, "h": d1 * e * (1.0 - e)}

    data = Dataset(y=y, v=v, x=x)
    residual = equilibrium_residual(g1, g2, x @ alpha1, x @ alpha2, d1, d2)
    coefs = {"alpha1": alpha1, "alpha2": alpha2, "delta2": d2, "equilibrium_residual": residual,
             "g1": g1, "g2": g2}
    return data, Truth(theta0, nuisance, coefs)


_GENERATORS = {
    "partially_linear": gen_partially_linear,
    "logistic_te": gen_logistic_te,
    "missing_data": gen_missing_data,
    "games": gen_games,
}


def generate(cfg, replication=0):
    return _GENERATORS[cfg.model](cfg, replication)


PRESETS = {
    ("partially_linear", "paper"): dict(n=5000, p=200, k=2, k_alpha=4, k_beta=4),
    ("partially_linear", "desk"): dict(n=2000, p=100, k=2, k_alpha=4, k_beta=4),
    ("missing_data", "paper"): dict(n=5000, p=20, d_u=20, k=1, k_u=1, theta_value=2.0,
                                    sigma_eta=0.1, sigma_x=3.0, sigma_u=3.0, sigma_eps=1.0),
    ("missing_data", "desk"): dict(n=2000, p=20, d_u=20, k=1, k_u=1, theta_value=2.0,
                                   sigma_eta=0.1, sigma_x=3.0, sigma_u=3.0, sigma_eps=1.0),
    ("games", "paper"): dict(n=10000, p=1000, k=1, k2=3, delta1=-2.0, delta2=-3.0, sigma_x=1.0),
    ("games", "desk"): dict(n=4000, p=200, k=1, k2=3, delta1=-2.0, delta2=-3.0, sigma_x=1.0),
    ("logistic_te", "paper"): dict(n=5000, p=2000, k=2, k_alpha=5, k_beta=5, sigma_eta=3.0,
                                   sigma_u=0.5),
    ("logistic_te", "desk"): dict(n=4000, p=100, k=2, k_alpha=5, k_beta=5, sigma_eta=3.0,
                                  sigma_u=0.5),
}


def preset(model, scale="desk", **overrides):
    model = resolve_model(model)
    try:
        base = dict(PRESETS[(model, scale)])
    except KeyError:
        raise ConfigurationError(f"unknown scale {scale!r}; expected 'desk' or 'paper'") from None
    base.update(overrides)
    return DGPConfig(model=model, **base)
