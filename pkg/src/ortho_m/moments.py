"""Single-index moment restrictions and their integrated M-estimation losses.

A moment ``m(w, t, gamma)`` depends on the parameter only through the index
``t = Lambda(z, gamma) @ theta``. Its loss integrand ``K`` satisfies
``dK/dt = m`` so the loss gradient is ``m * Lambda``. An optional correction
``alpha = -h * R / I`` (independent of ``t``) is added to the moment, which
adds the affine term ``alpha * t`` to the loss.

All callables are vectorised over rows: ``w`` is a :class:`Dataset`, ``t`` a
length-n array and ``gamma`` a mapping of nuisance role to length-n array.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .data import NuisanceFit, stream
from .errors import DataIntegrityError, InvalidArgumentError, SingularCorrectionError
from .solver import ObjectiveHandle

__all__ = [
    "SingleIndexMoment",
    "OrthogonalCorrection",
    "CompositeLoss",
    "BoundLoss",
    "SlopeReport",
    "loss_value",
    "loss_gradient",
    "orthogonalize",
    "orthogonality_check",
    "E_FLOOR",
]

E_FLOOR = 1e-3
MIN_R_SPAN = 8.0  # three doublings, e.g. 0.05 .. 0.4


@dataclass(frozen=True)
class SingleIndexMoment:
    m: Callable
    dm_dt: Callable
    K: Callable
    Lambda: Callable
    monotone_in_t: bool
    name: str = "moment"


@dataclass(frozen=True)
class OrthogonalCorrection:
    """Bias correction ``alpha(w, g) = -h(z) * R(w, g) / I(z)``.

    ``h`` is the conditional derivative of the moment in the nuisance, ``I``
    the conditional derivative of the generalized residual ``R``.
    """

    h: Callable
    I: Callable
    R: Callable
    e_floor: float = E_FLOOR

    def alpha(self, w, gamma):
        i_val = np.asarray(self.I(w, gamma), dtype=float)
        bad = np.flatnonzero(~(np.abs(i_val) >= self.e_floor))
        if bad.size:
            r = int(bad[0])
            raise SingularCorrectionError(
                f"|I(z)| = {abs(i_val[r]):.3g} below floor {self.e_floor} at observation {r}", row=r
            )
        h = np.asarray(self.h(w, gamma), dtype=float)
        return -h * np.asarray(self.R(w, gamma), dtype=float) / i_val


def _check_nuisance(data, nuisance):
    if nuisance is None:
        return {}
    cols = nuisance.columns if isinstance(nuisance, NuisanceFit) else nuisance
    for role, arr in cols.items():
        arr = np.asarray(arr)
        if arr.shape[0] != data.n:
            raise DataIntegrityError(
                f"nuisance role {role!r} has {arr.shape[0]} rows, data has {data.n}",
                row=min(arr.shape[0], data.n),
            )
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise DataIntegrityError(
                f"nuisance role {role!r} missing at row {int(bad[0])}", row=int(bad[0])
            )
    return cols


class BoundLoss:
    """A composite loss evaluated on a fixed dataset and nuisance.

    Lambda and the correction are precomputed since neither depends on theta.
    """

    def __init__(self, loss, data):
        self.loss = loss
        self.data = data
        self.gamma = _check_nuisance(data, loss.nuisance)
        self.Lam = np.asarray(loss.moment.Lambda(data, self.gamma), dtype=float)
        if self.Lam.ndim != 2 or self.Lam.shape[0] != data.n:
            raise DataIntegrityError(f"Lambda has shape {self.Lam.shape}, expected ({data.n}, p)")
        self.p = self.Lam.shape[1]
        if loss.correction is not None:
            self.alpha = loss.correction.alpha(data, self.gamma)
        else:
            self.alpha = None

    def index(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise InvalidArgumentError(f"theta has shape {theta.shape}, expected ({self.p},)")
        return self.Lam @ theta

    def per_row_value(self, theta):
        t = self.index(theta)
        vals = np.asarray(self.loss.moment.K(self.data, t, self.gamma), dtype=float)
        if self.alpha is not None:
            vals = vals + self.alpha * t
        return vals

    def per_row_score(self, theta):
        """Scalar factor ``m + alpha`` multiplying ``Lambda`` in each row's gradient."""
        t = self.index(theta)
        s = np.asarray(self.loss.moment.m(self.data, t, self.gamma), dtype=float)
        if self.alpha is not None:
            s = s + self.alpha
        return s

    def value(self, theta):
        return float(np.mean(self.per_row_value(theta)))

    def gradient(self, theta):
        return self.Lam.T @ self.per_row_score(theta) / self.data.n

    def value_and_grad(self, theta):
        t = self.index(theta)
        mom = self.loss.moment
        k = np.asarray(mom.K(self.data, t, self.gamma), dtype=float)
        s = np.asarray(mom.m(self.data, t, self.gamma), dtype=float)
        if self.alpha is not None:
            k = k + self.alpha * t
            s = s + self.alpha
        return float(np.mean(k)), self.Lam.T @ s / self.data.n

    def hessian(self, theta):
        """Exact Hessian ``mean(dm_dt * Lambda Lambda')`` (alpha is affine in theta)."""
        t = self.index(theta)
        w = np.asarray(self.loss.moment.dm_dt(self.data, t, self.gamma), dtype=float)
        return (self.Lam * w[:, None]).T @ self.Lam / self.data.n

    def objective(self):
        return ObjectiveHandle(self.value, self.gradient, self.p, self.value_and_grad)

    def quadratic_objective(self, at=None):
        """Second-order expansion about ``at`` (default zero) in Gram form.

        Exact for squared-loss moments, where it turns each iteration from
        O(n p) into O(p^2).
        """
        at = np.zeros(self.p) if at is None else np.asarray(at, dtype=float)
        f0, g0 = self.value_and_grad(at)
        H = self.hessian(at)

        def vg(theta):
            d = np.asarray(theta, dtype=float) - at
            Hd = H @ d
            return f0 + g0 @ d + 0.5 * d @ Hd, g0 + Hd

        return ObjectiveHandle(lambda t: vg(t)[0], lambda t: vg(t)[1], self.p, vg)


@dataclass(frozen=True)
class CompositeLoss:
    moment: SingleIndexMoment
    correction: Optional[OrthogonalCorrection] = None
    nuisance: Optional[object] = None

    def with_nuisance(self, nuisance):
        return replace(self, nuisance=nuisance)

    def uncorrected(self):
        return replace(self, correction=None)

    def bind(self, data):
        return BoundLoss(self, data)

    @property
    def convex(self):
        return self.moment.monotone_in_t


def loss_value(cl, data, theta):
    """Sample mean of ``K(w, Lambda'theta, gamma) + alpha * Lambda'theta``."""
    return cl.bind(data).value(theta)


def loss_gradient(cl, data, theta):
    """Sample mean of ``(m + alpha) * Lambda``."""
    return cl.bind(data).gradient(theta)


def orthogonalize(moment, corr):
    """Return a factory ``nuisance -> CompositeLoss`` with the correction attached.

    The floor on ``|I(z)|`` is enforced when the loss is bound to data.
    """

    def factory(nuisance=None):
        return CompositeLoss(moment, corr, nuisance)

    return factory


@dataclass
class SlopeReport:
    r_grid: np.ndarray
    values: np.ndarray
    noise_floor: np.ndarray
    slope: float
    degenerate: bool

    def as_dict(self):
        return {
            "r": self.r_grid.tolist(),
            "sup_norm": self.values.tolist(),
            "noise_floor": self.noise_floor.tolist(),
            "slope": self.slope,
            "degenerate": self.degenerate,
        }


def _mix(g0, g_dir, r):
    return {k: g0[k] + r * (g_dir[k] - g0[k]) for k in g0}


def orthogonality_check(cl, data_gen, theta0, r_grid, n_mc, seed=0, chunk=200_000,
                        control_variate=True):
    """Monte Carlo estimate of ``||E grad L(theta0, g0 + r (g_dir - g0))||_inf``.

    ``data_gen(n, rng)`` returns ``(data, g0, g_dir)`` with ``g0``/``g_dir``
    mappings of nuisance role to per-row values. The same draws are reused for
    every ``r``. With ``control_variate`` the per-row gradient at ``g0`` is
    subtracted before averaging; its expectation is zero at the truth, so this
    only removes sampling noise.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    pos = r_grid[r_grid > 0]
    if pos.size < 4 or pos.max() / pos.min() < MIN_R_SPAN - 1e-12:
        raise InvalidArgumentError(
            f"r_grid needs at least 4 positive values spanning a factor of {MIN_R_SPAN:g}"
        )
    theta0 = np.asarray(theta0, dtype=float)
    rng = stream(seed, 0, "orthogonality_check")
    n_r = r_grid.size
    sums = None
    sq = None
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        data, g0, g_dir = data_gen(m, rng)
        base = None
        if control_variate:
            b0 = cl.with_nuisance(g0).bind(data)
            base = b0.Lam * b0.per_row_score(theta0)[:, None]
        for j, r in enumerate(r_grid):
            b = cl.with_nuisance(_mix(g0, g_dir, r)).bind(data)
            contrib = b.Lam * b.per_row_score(theta0)[:, None]
            if base is not None:
                contrib = contrib - base
            if sums is None:
                p = contrib.shape[1]
                sums = np.zeros((n_r, p))
                sq = np.zeros((n_r, p))
            sums[j] += contrib.sum(axis=0)
            sq[j] += (contrib * contrib).sum(axis=0)
        done += m
    mean = sums / n_mc
    var = np.maximum(sq / n_mc - mean * mean, 0.0)
    std = np.sqrt(var * n_mc / max(n_mc - 1, 1))
    values = np.abs(mean).max(axis=1)
    jstar = np.abs(mean).argmax(axis=1)
    floor = 3.0 * std[np.arange(n_r), jstar] / np.sqrt(n_mc)
    ok = (values > floor) & (r_grid > 0)
    degenerate = bool(ok.sum() < 2)
    if degenerate:
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(r_grid[ok]), np.log(values[ok]), 1)[0])
    return SlopeReport(r_grid, values, floor, slope, degenerate)
