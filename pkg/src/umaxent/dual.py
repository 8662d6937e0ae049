"""Convex dual of the maximum-entropy program and its minimizer.

The dual objective is log Z(lambda) - sum_k lambda_k phi_hat_k; its
gradient is the gap between model and target feature expectations, so a
small gradient directly certifies the moment constraints.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleTarget
from .model import (
    FeatureTable,
    Weights,
    feature_expectation,
    log_linear_distribution,
    log_partition,
)

# Feasibility slack for the per-coordinate bounds check.
_FEASIBILITY_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class TargetExpectations:
    """Target feature-expectation vector for the moment constraints."""

    phi_hat: np.ndarray

    def __init__(self, phi_hat):
        phi_hat = np.asarray(phi_hat, dtype=float)
        if phi_hat.ndim != 1 or not np.all(np.isfinite(phi_hat)):
            raise ValueError("target expectations must be a finite vector")
        phi_hat.setflags(write=False)
        object.__setattr__(self, "phi_hat", phi_hat)

    def __len__(self):
        return len(self.phi_hat)


@dataclass
class SolverConfig:
    grad_tol: float = 1e-8
    max_iter: int = 10_000
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    divergence_guard: float = 1e3
    # "lbfgs" preconditions the descent direction with a limited-memory
    # quasi-Newton update; "gd" is plain steepest descent. Both use the
    # same backtracking line search.
    method: str = "lbfgs"
    lbfgs_memory: int = 10

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.method not in ("lbfgs", "gd"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolverResult:
    weights: Weights
    dual_value: float
    grad_norm: float
    iterations: int
    converged: bool
    diverged: bool = False
    message: str = ""


def _check(target, features):
    if len(target) != features.n_features:
        raise DimensionMismatch("features", features.n_features, len(target))


def dual_value(weights, target, features):
    """log Z(lambda) - sum_k lambda_k phi_hat_k."""
    _check(target, features)
    return log_partition(weights, features) - weights.lam @ target.phi_hat


def dual_gradient(weights, target, features):
    """Gradient of the dual: E_lambda[phi] - phi_hat."""
    _check(target, features)
    model = log_linear_distribution(weights, features)
    return feature_expectation(model, features) - target.phi_hat


def _check_feasible(target, features):
    lo = features.values.min(axis=1)
    hi = features.values.max(axis=1)
    for k, v in enumerate(target.phi_hat):
        if v < lo[k] - _FEASIBILITY_EPS or v > hi[k] + _FEASIBILITY_EPS:
            raise InfeasibleTarget(k, v, lo[k], hi[k])


def _lbfgs_direction(grad, s_hist, y_hist):
    """Two-loop recursion; returns a descent direction for the dual."""
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (a, rho), s, y in zip(reversed(alphas), s_hist, y_hist):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize_dual(target, features, init=None, config=None):
    """Minimize the dual with backtracking line search.

    Converged means the gradient sup-norm (equivalently the constraint
    residual) dropped below config.grad_tol. Boundary or exterior targets
    show up as the divergence guard tripping or max_iter running out;
    the best iterate seen is returned either way.
    """
    config = config or SolverConfig()
    _check(target, features)
    _check_feasible(target, features)

    lam = np.zeros(features.n_features) if init is None else np.array(init.lam, dtype=float)
    f = dual_value(Weights(lam), target, features)
    best_lam, best_f = lam.copy(), f
    grad = dual_gradient(Weights(lam), target, features)
    s_hist, y_hist = [], []

    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        gnorm = np.abs(grad).max()
        if gnorm <= config.grad_tol:
            return SolverResult(Weights(lam), f, gnorm, iterations - 1, True)
        if np.abs(lam).max() > config.divergence_guard:
            return SolverResult(
                Weights(best_lam),
                best_f,
                gnorm,
                iterations - 1,
                False,
                diverged=True,
                message=f"some |lambda_k| exceeded the divergence guard {config.divergence_guard}",
            )

        direction = -grad
        if config.method == "lbfgs" and s_hist:
            d = _lbfgs_direction(grad, s_hist, y_hist)
            if d @ grad < 0:
                direction = d

        # Backtrack until the Armijo sufficient-decrease condition holds.
        slope = grad @ direction
        step = config.initial_step
        stalled = False
        while True:
            trial = lam + step * direction
            f_trial = dual_value(Weights(trial), target, features)
            if f_trial <= f + config.sufficient_decrease * step * slope:
                break
            step *= config.backtrack_factor
            if step < 1e-18:
                stalled = True
                break
        if stalled:
            # No descent at machine precision; report the best iterate.
            return SolverResult(
                Weights(best_lam), best_f, gnorm, iterations, False,
                message="line search stalled",
            )
        grad_new = dual_gradient(Weights(trial), target, features)
        s, y = trial - lam, grad_new - grad
        if s @ y > 1e-14:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > config.lbfgs_memory:
                s_hist.pop(0)
                y_hist.pop(0)
        lam, f, grad = trial, f_trial, grad_new
        if f < best_f:
            best_lam, best_f = lam.copy(), f

    gnorm = np.abs(grad).max()
    if gnorm <= config.grad_tol:
        return SolverResult(Weights(lam), f, gnorm, iterations, True)
    return SolverResult(
        Weights(best_lam), best_f, gnorm, iterations, False,
        diverged=bool(np.abs(best_lam).max() > config.divergence_guard),
        message="max_iter exceeded",
    )
