"""Ready-made orthogonality and gradient diagnostics for each model.

Each design fixes a small data-generating process, the true nuisance ``g0``
and a perturbed nuisance ``g_dir`` that moves every role at once, so the
gradient's sensitivity along ``g0 + r (g_dir - g0)`` can be measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from ..applications import loss_for, resolve_model
from ..moments import orthogonality_check
from .dgp import generate, preset

__all__ = ["R_GRID", "OrthogonalityDesign", "orthogonality_design", "run_orthogonality",
           "gradient_fd_check"]

R_GRID = (0.05, 0.1, 0.2, 0.4)


@dataclass
class OrthogonalityDesign:
    model: str
    cfg: object
    theta0: np.ndarray

    def perturb(self, data, g0):
        """Smooth, data-dependent perturbation direction for every role."""
        if self.model in ("partially_linear", "logistic_te"):
            u = data["u"]
            out = {"h": g0["h"] + 0.5 + 0.5 * u[:, 2], "q": g0["q"] + 0.3 * u[:, 0]}
            if "V" in g0:
                out["V"] = 1.5 * g0["V"]
            return out
        if self.model == "missing_data":
            u = data["u"] / self.cfg.sigma_u
            p_dir = expit(logit(g0["p"]) + 0.5 + u[:, 0])
            return {"p": p_dir, "h": g0["h"] + 0.5 * data["x"][:, 0]}
        g_dir = expit(logit(g0["g"]) + 0.5 + 0.5 * data["x"][:, 0])
        return {"g": g_dir, "h": g0["h"] + 0.1}


_SMALL = {
    "partially_linear": dict(p=10, d_u=10, k=2, k_alpha=2, k_beta=2),
    "logistic_te": dict(p=10, k=2, k_alpha=2, k_beta=2, sigma_u=1.0, sigma_eta=1.0),
    "missing_data": dict(p=5, d_u=5),
    "games": dict(p=10, k=1, k2=3, variant="DGP1"),
}


def orthogonality_design(model):
    model = resolve_model(model)
    cfg = preset(model, "desk", **_SMALL[model])
    data, truth = generate(cfg.with_(n=10))
    return OrthogonalityDesign(model, cfg, truth.theta0)


def run_orthogonality(model, orthogonal=True, n_mc=1_000_000, r_grid=R_GRID, seed=0):
    """Slope report of the gradient sup-norm along the perturbation path.

    Random coefficient draws (missing data, games) change with the sample
    stream but ``theta0`` does not, and each draw's ``g0`` is its own truth.
    """
    design = orthogonality_design(model)
    cl = loss_for(model, None, orthogonal)

    def data_gen(n, rng):
        rep = int(rng.integers(1, 2 ** 31))
        data, truth = generate(design.cfg.with_(n=n), rep)
        g0 = truth.nuisance(data)
        if not np.array_equal(truth.theta0, design.theta0):
            raise AssertionError("design truth drifted")
        return data, g0, design.perturb(data, g0)

    return orthogonality_check(cl, data_gen, design.theta0, list(r_grid), n_mc, seed=seed,
                               chunk=n_mc)


def gradient_fd_check(model, n=200, probes=20, seed=0, h=1e-6):
    """Largest relative gap between analytic and central-difference gradients
    over random parameter probes, each on a fresh random nuisance draw."""
    model = resolve_model(model)
    design = orthogonality_design(model)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(probes):
        data, truth = generate(design.cfg.with_(n=n), 1000 + i)
        g0 = truth.nuisance(data)
        g = design.perturb(data, g0)
        g = {k: g0[k] + rng.uniform(0, 1) * (g[k] - g0[k]) for k in g0}
        bound = loss_for(model, g).bind(data)
        theta = design.theta0 + rng.normal(scale=0.5, size=design.theta0.size)
        grad = bound.gradient(theta)
        eye = np.eye(theta.size)
        fd = np.array([(bound.value(theta + h * e) - bound.value(theta - h * e)) / (2 * h)
                       for e in eye])
        scale = max(np.abs(grad).max(), 1e-8)
        worst = max(worst, float(np.abs(fd - grad).max() / scale))
    return worst
