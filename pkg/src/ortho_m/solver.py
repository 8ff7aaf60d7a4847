"""Proximal-gradient minimization of ``f(theta) + lam * ||theta||_1``.

The search set is either the whole space or an l1 ball. On the ball each
step is a soft-threshold followed by a Euclidean projection onto the ball.
Acceleration uses monotone FISTA: a momentum candidate is only accepted when
it does not increase the composite objective, otherwise momentum restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError

__all__ = [
    "ObjectiveHandle",
    "SearchSet",
    "SolverConfig",
    "SolverDiagnostics",
    "soft_threshold",
    "project_l1_ball",
    "prox_grad_minimize",
]


@dataclass(frozen=True)
class ObjectiveHandle:
    """Smooth part of a composite objective.

    ``value_and_grad`` is optional; when given it is used instead of two
    separate calls (single-index losses share the index computation).
    """

    value_fn: Callable[[np.ndarray], float]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    dimension: int
    value_and_grad: Optional[Callable[[np.ndarray], tuple]] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidArgumentError("dimension must be positive")

    def both(self, theta):
        if self.value_and_grad is not None:
            return self.value_and_grad(theta)
        return self.value_fn(theta), self.grad_fn(theta)


@dataclass(frozen=True)
class SearchSet:
    kind: str = "full_space"
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("full_space", "l1_ball"):
            raise InvalidArgumentError(f"unknown search set kind {self.kind!r}")
        if self.kind == "l1_ball":
            if self.center is None or self.radius is None:
                raise InvalidArgumentError("l1_ball needs center and radius")
            if self.radius < 0:
                raise InvalidArgumentError("radius must be nonnegative")

    @classmethod
    def full(cls):
        return cls("full_space")

    @classmethod
    def ball(cls, center, radius):
        return cls("l1_ball", np.asarray(center, dtype=float).copy(), float(radius))

    def contains(self, theta, slack=1e-12):
        if self.kind == "full_space":
            return True
        return np.abs(theta - self.center).sum() <= self.radius + slack

    def project(self, theta):
        if self.kind == "full_space":
            return theta
        return project_l1_ball(theta, self.center, self.radius)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget, tolerance and step rule.

    ``step_rule`` is ``"backtracking"`` (start at ``step``, shrink by ``beta``)
    or ``"fixed"`` (always ``step``). ``acceleration=None`` means: on for the
    full space, off for an l1 ball.
    """

    max_iters: int = 10_000
    tol: float = 1e-8
    step_rule: str = "backtracking"
    step: float = 1.0
    beta: float = 0.5
    acceleration: Optional[bool] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be positive")
        if self.tol <= 0:
            raise InvalidArgumentError("tol must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise InvalidArgumentError(f"unknown step rule {self.step_rule!r}")
        if self.step <= 0:
            raise InvalidArgumentError("step must be positive")
        if self.step_rule == "backtracking" and not 0 < self.beta < 1:
            raise InvalidArgumentError("backtracking requires 0 < beta < 1")


@dataclass
class SolverDiagnostics:
    iterations: int
    final_step: float
    converged: bool
    objective: float
    init_projected: bool
    init: np.ndarray = field(repr=False)
    history: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "final_step": self.final_step,
            "converged": self.converged,
            "objective": self.objective,
            "init_projected": self.init_projected,
        }


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``; exact zero at ``|v| == t``."""
    if t < 0:
        raise InvalidArgumentError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _project_simplex_abs(a, radius):
    # a >= 0 with sum(a) > radius; returns max(a - shift, 0) summing to radius
    s = np.sort(a)[::-1]
    cssv = np.cumsum(s) - radius
    idx = np.arange(1, a.size + 1)
    active = np.nonzero(s * idx > cssv)[0]
    rho = active[-1] if active.size else 0  # radius below rounding of s[0]
    shift = cssv[rho] / (rho + 1.0)
    return np.maximum(a - shift, 0.0)


def project_l1_ball(v, center, radius):
    """Euclidean projection of ``v`` onto ``{u : ||u - center||_1 <= radius}``."""
    if radius < 0:
        raise InvalidArgumentError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    center = np.asarray(center, dtype=float)
    d = v - center
    if np.abs(d).sum() <= radius:
        return v.copy()
    if radius == 0:
        return center.copy()
    return center + np.sign(d) * _project_simplex_abs(np.abs(d), radius)


def _check_finite(value, grad, iteration):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericFailureError(
            f"non-finite loss or gradient at iteration {iteration}", iteration
        )


def prox_grad_minimize(obj, lam, search_set=None, init=None, cfg=None, weights=None):
    """Minimize ``obj(theta) + lam * ||weights * theta||_1`` over ``search_set``.

    ``weights`` defaults to all ones; a zero weight leaves that coordinate
    unpenalized (used for intercepts). Returns ``(theta_hat, diagnostics)``.
    Iteration stops once the relative change of the composite objective over
    an accepted step drops below ``cfg.tol`` or after ``cfg.max_iters``.
    """
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    search_set = search_set or SearchSet.full()
    cfg = cfg or SolverConfig()
    p = obj.dimension
    x0 = np.zeros(p) if init is None else np.asarray(init, dtype=float).copy()
    if x0.shape != (p,):
        raise InvalidArgumentError(f"init has shape {x0.shape}, expected ({p},)")
    projected = not search_set.contains(x0)
    if projected:
        x0 = search_set.project(x0)
    accelerate = cfg.acceleration
    if accelerate is None or search_set.kind == "l1_ball":
        accelerate = search_set.kind == "full_space" and accelerate is not False

    if weights is None:
        pen = lam
    else:
        pen = lam * np.asarray(weights, dtype=float)
        if pen.shape != (p,) or np.any(pen < 0):
            raise InvalidArgumentError("weights must be a nonnegative p-vector")

    def penalty(v):
        return float(np.sum(pen * np.abs(v)))

    def prox(z, eta):
        shrunk = np.sign(z) * np.maximum(np.abs(z) - eta * pen, 0.0)
        return search_set.project(shrunk)

    x = x0
    fx, gx = obj.both(x)
    _check_finite(fx, gx, 0)
    Fx = fx + penalty(x)
    history = [Fx]
    y, fy, gy = x, fx, gx
    from_x = True  # y coincides with the accepted iterate (no momentum)
    t_mom = 1.0
    eta = cfg.step
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        # backtracking from the extrapolated point y
        while True:
            z = prox(y - eta * gy, eta)
            diff = z - y
            fz, gz = obj.both(z)
            if not np.isfinite(fz) and cfg.step_rule == "backtracking" and eta > 1e-20:
                eta *= cfg.beta
                continue
            _check_finite(fz, gz, it)
            if cfg.step_rule == "fixed":
                break
            bound = fy + gy @ diff + (diff @ diff) / (2.0 * eta)
            if fz <= bound + 1e-12 * max(1.0, abs(fy)):
                break
            eta *= cfg.beta
            if eta < 1e-20:
                raise NumericFailureError("step size underflow in backtracking", it)
        Fz = fz + penalty(z)
        # a plain step from x is always kept: rejecting it would only repeat it
        if Fz <= Fx or not accelerate or from_x:
            if accelerate:
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
                y_next = z + ((t_mom - 1.0) / t_next) * (z - x)
                t_mom = t_next
            x_prev_F = Fx
            x, fx, gx, Fx = z, fz, gz, Fz
            history.append(Fx)
            if accelerate:
                y = y_next
                fy, gy = obj.both(y)
                from_x = False
                if not (np.isfinite(fy) and np.all(np.isfinite(gy))):
                    y, fy, gy, t_mom, from_x = x, fx, gx, 1.0, True
            else:
                y, fy, gy = x, fx, gx
            if abs(x_prev_F - Fx) <= cfg.tol * abs(Fx):
                converged = True
                break
        else:
            # momentum overshoot: restart from the last accepted iterate
            y, fy, gy, t_mom, from_x = x, fx, gx, 1.0, True
    diag = SolverDiagnostics(
        iterations=it,
        final_step=eta,
        converged=converged,
        objective=float(Fx),
        init_projected=projected,
        init=x0,
        history=history,
    )
    return x, diag
