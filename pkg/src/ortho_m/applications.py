"""Loss definitions for the four supported models.

Every loss is a :class:`~ortho_m.moments.CompositeLoss` whose nuisance roles
are per-row arrays:

* ``partially_linear``: ``h`` (E[tau|u]) and ``q`` (E[y|u]).
* ``logistic_te``: ``h`` (E[tau|u]), ``q`` (offset) and ``V`` (weight).
* ``missing_data``: ``p`` (propensity) and ``h`` (correction loading).
* ``games``: ``g`` (opponent entry probability) and ``h`` (correction loading).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, log_expit

from .errors import DataIntegrityError, InvalidArgumentError
from .moments import CompositeLoss, OrthogonalCorrection, SingleIndexMoment

__all__ = [
    "ApplicationSchema",
    "LinkFunction",
    "LOGISTIC",
    "V_FLOOR",
    "SCHEMAS",
    "MODEL_ALIASES",
    "resolve_model",
    "partially_linear_loss",
    "logistic_te_loss",
    "missing_data_loss",
    "games_loss",
    "loss_for",
]

V_FLOOR = 1e-3


@dataclass(frozen=True)
class LinkFunction:
    """A link ``G`` with derivative and an antiderivative ``F`` (``F' = G``)."""

    G: Callable
    dG: Callable
    d2G: Callable
    F: Callable
    name: str = "link"


def _softplus(s):
    return -log_expit(-s)


def _dlogistic(s):
    e = expit(s)
    return e * (1.0 - e)


def _d2logistic(s):
    e = expit(s)
    return e * (1.0 - e) * (1.0 - 2.0 * e)


LOGISTIC = LinkFunction(expit, _dlogistic, _d2logistic, _softplus, "logistic")


@dataclass(frozen=True)
class ApplicationSchema:
    id: str
    scalar_columns: tuple
    block_columns: tuple
    nuisance_roles: tuple
    optional_blocks: tuple = ()

    def validate(self, data, p=None):
        missing = [c for c in self.scalar_columns + self.block_columns if c not in data]
        if missing:
            raise DataIntegrityError(f"{self.id}: missing required columns {missing}")
        for c in self.scalar_columns:
            if data[c].ndim != 1:
                raise DataIntegrityError(f"{self.id}: column {c!r} must be one-dimensional")
        for c in self.block_columns + tuple(b for b in self.optional_blocks if b in data):
            if data[c].ndim != 2:
                raise DataIntegrityError(f"{self.id}: block {c!r} must be two-dimensional")
        for c in data.columns:
            ok = np.isfinite(data[c].reshape(data.n, -1)).all(axis=1)
            if c == "y" and self.id == "missing_data" and "d" in data:
                ok |= data["d"] == 0  # unobserved outcomes may be NaN
            bad = np.flatnonzero(~ok)
            if bad.size:
                raise DataIntegrityError(f"{self.id}: non-finite value in {c!r} at row {int(bad[0])}",
                                         row=int(bad[0]))
        for c in ("d", "v") if self.id in ("missing_data", "games") else ():
            if c in data and not np.all(np.isin(data[c], (0.0, 1.0))):
                raise DataIntegrityError(f"{self.id}: column {c!r} must be binary")
        if self.id in ("logistic_te", "games") and not np.all(np.isin(data["y"], (0.0, 1.0))):
            raise DataIntegrityError(f"{self.id}: outcome y must be binary")
        if p is not None and self.param_dim(data) != p:
            raise DataIntegrityError(f"{self.id}: parameter dimension {self.param_dim(data)} != {p}")

    def param_dim(self, data):
        width = data["x"].shape[1]
        return width + 1 if self.id == "games" else width


SCHEMAS = {
    "partially_linear": ApplicationSchema("partially_linear", ("y", "tau"), ("u", "x"), ("h", "q")),
    "logistic_te": ApplicationSchema("logistic_te", ("y", "tau"), ("u", "x"), ("h", "q", "V")),
    "missing_data": ApplicationSchema("missing_data", ("y", "d"), ("x",), ("p", "h"),
                                      optional_blocks=("u",)),
    "games": ApplicationSchema("games", ("y", "v"), ("x",), ("g", "h")),
}

MODEL_ALIASES = {
    "plr": "partially_linear",
    "logit-te": "logistic_te",
    "missing": "missing_data",
    "games": "games",
}


def resolve_model(name):
    if name in SCHEMAS:
        return name
    try:
        return MODEL_ALIASES[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown model {name!r}; expected one of {sorted(MODEL_ALIASES)}"
        ) from None


# partially linear: Lambda = (tau - h) x, K = (y - q - t)^2 / 2


def _treatment_loading(w, g):
    return (w["tau"] - g["h"])[:, None] * w["x"]


def partially_linear_loss(nuisance=None):
    moment = SingleIndexMoment(
        m=lambda w, t, g: t - (w["y"] - g["q"]),
        dm_dt=lambda w, t, g: np.ones_like(t),
        K=lambda w, t, g: 0.5 * (w["y"] - g["q"] - t) ** 2,
        Lambda=_treatment_loading,
        monotone_in_t=True,
        name="partially_linear",
    )
    return CompositeLoss(moment, None, nuisance)


def logistic_te_loss(nuisance=None, link=LOGISTIC):
    """Weighted single-index likelihood loss ``(F(t + q) - y (t + q)) / V``."""

    def V(g):
        return np.maximum(g["V"], V_FLOOR)

    moment = SingleIndexMoment(
        m=lambda w, t, g: (link.G(t + g["q"]) - w["y"]) / V(g),
        dm_dt=lambda w, t, g: link.dG(t + g["q"]) / V(g),
        K=lambda w, t, g: (link.F(t + g["q"]) - w["y"] * (t + g["q"])) / V(g),
        Lambda=_treatment_loading,
        monotone_in_t=True,
        name=f"{link.name}_te",
    )
    return CompositeLoss(moment, None, nuisance)


def _observed_y(w):
    # missing outcomes may be stored as anything; only d * y is ever used
    return np.where(w["d"] > 0, w["y"], 0.0)


def missing_data_loss(nuisance=None, u=None, du_dt=None, U=None, monotone=True):
    """Inverse-propensity loss ``d U(y, t) / p`` plus ``h (d - p) t``.

    ``u`` defaults to ``t - y`` (squared loss). A custom ``u`` needs its
    ``t``-derivative ``du_dt`` and antiderivative ``U``.
    """
    if u is None:
        u = lambda y, t: t - y  # noqa: E731
        du_dt = lambda y, t: np.ones_like(t)  # noqa: E731
        U = lambda y, t: 0.5 * (t - y) ** 2  # noqa: E731
    elif du_dt is None or U is None:
        raise InvalidArgumentError("a custom u(y, t) needs du_dt and U")

    moment = SingleIndexMoment(
        m=lambda w, t, g: w["d"] * u(_observed_y(w), t) / g["p"],
        dm_dt=lambda w, t, g: w["d"] * du_dt(_observed_y(w), t) / g["p"],
        K=lambda w, t, g: w["d"] * U(_observed_y(w), t) / g["p"],
        Lambda=lambda w, g: w["x"],
        monotone_in_t=monotone,
        name="missing_data",
    )
    corr = OrthogonalCorrection(
        h=lambda w, g: g["h"],
        I=lambda w, g: -np.ones(w.n),
        R=lambda w, g: w["d"] - g["p"],
    )
    return CompositeLoss(moment, corr, nuisance)


def games_loss(nuisance=None):
    """Logistic loss on ``(x, g)'theta`` plus ``h (v - g) t``."""
    moment = SingleIndexMoment(
        m=lambda w, t, g: expit(t) - w["y"],
        dm_dt=lambda w, t, g: _dlogistic(t),
        K=lambda w, t, g: _softplus(t) - w["y"] * t,
        Lambda=lambda w, g: np.column_stack([w["x"], g["g"]]),
        monotone_in_t=True,
        name="games",
    )
    corr = OrthogonalCorrection(
        h=lambda w, g: g["h"],
        I=lambda w, g: -np.ones(w.n),
        R=lambda w, g: w["v"] - g["g"],
    )
    return CompositeLoss(moment, corr, nuisance)


_FACTORIES = {
    "partially_linear": partially_linear_loss,
    "logistic_te": logistic_te_loss,
    "missing_data": missing_data_loss,
    "games": games_loss,
}


def loss_for(model, nuisance=None, orthogonal=True):
    cl = _FACTORIES[resolve_model(model)](nuisance)
    return cl if orthogonal else cl.uncorrected()
