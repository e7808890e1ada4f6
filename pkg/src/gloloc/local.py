"""GROUP: quasi-Newton descent on the chopped-basis coefficients.

Limited-memory BFGS directions, a bracketing line search with interpolation
enforcing the sufficient-decrease and curvature conditions, and projection
onto the coefficient box.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .control import BasisSpec
from .gradient import ControlObjective, CostBreakdown

log = logging.getLogger(__name__)


@dataclass
class LocalOptConfig:
    max_iterations: int = 500
    grad_tol: float = 1e-7
    cost_tol: float = 1e-9
    max_cost_evals: int = 5000
    history_size: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    plateau_window: int = 5
    max_line_search: int = 20
    secant_refine: bool = True  # one extra evaluation when the accepted step is far from a 1D minimum
    secant_threshold: float = 0.1

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.cost_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.history_size < 1:
            raise ValueError("history_size must be at least 1")


@dataclass
class LocalOptResult:
    best_coeffs: np.ndarray
    best_cost: CostBreakdown
    iterations: int
    evals: int
    converged_reason: str  # "gradient", "cost-plateau" or "budget"
    history: list = field(default_factory=list)


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    pg[(x >= upper) & (g < 0)] = 0.0
    return pg


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        s, y = S[-1], Y[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


class _Counter:
    def __init__(self, fun, max_evals):
        self.fun = fun
        self.evals = 0
        self.max_evals = max_evals

    @property
    def exhausted(self):
        return self.evals >= self.max_evals

    def __call__(self, x):
        self.evals += 1
        return self.fun(x)


def _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi):
    """Minimizer of the quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi), safeguarded."""
    width = a_hi - a_lo
    denom = 2.0 * (f_hi - f_lo - d_lo * width)
    a = a_lo - d_lo * width**2 / denom if denom > 0 else a_lo + 0.5 * width
    return float(np.clip(a, a_lo + 0.1 * width, a_hi - 0.1 * width))


def _line_search(fun, x, f0, g0, d, lower, upper, alpha, cfg):
    """Weak-Wolfe bracketing search along the projected path x(a) = P(x + a d).

    Returns ``(x, cost, grad)`` of the accepted point, or None when no point
    with sufficient decrease was found.
    """
    a_lo, f_lo, d_lo = 0.0, f0.total, float(np.dot(g0, d))
    a_hi, f_hi = np.inf, np.inf
    fallback = None
    for _ in range(cfg.max_line_search):
        if fun.exhausted:
            break
        x_new = np.clip(x + alpha * d, lower, upper)
        s = x_new - x
        slope0 = float(np.dot(g0, s))
        if slope0 >= 0 or not np.any(s):
            return fallback
        f_new, g_new = fun(x_new)
        val = f_new.total
        if not np.isfinite(val) or val > f0.total + cfg.c1 * slope0:
            a_hi, f_hi = alpha, val if np.isfinite(val) else np.inf
        else:
            fallback = (x_new, f_new, g_new)
            projected = not np.allclose(s, alpha * d)
            slope = float(np.dot(g_new, s))
            if slope >= cfg.c2 * slope0 or (projected and a_hi == np.inf):
                if cfg.secant_refine and not projected and abs(slope) > cfg.secant_threshold * abs(slope0):
                    return _secant(fun, x, alpha, d, slope0, slope, fallback, lower, upper)
                return fallback
            a_lo, f_lo, d_lo = alpha, val, float(np.dot(g_new, d))
        if a_hi == np.inf:
            alpha *= 2.0
        elif np.isfinite(f_hi):
            alpha = _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi)
        else:
            alpha = 0.5 * (a_lo + a_hi)
    return fallback


def _secant(fun, x, alpha, d, slope0, slope, accepted, lower, upper):
    """One secant step on the directional derivative; exact for quadratics."""
    if fun.exhausted or slope0 == slope:
        return accepted
    a = alpha * slope0 / (slope0 - slope)
    if not np.isfinite(a) or a <= 0:
        return accepted
    x_new = np.clip(x + a * d, lower, upper)
    f_new, g_new = fun(x_new)
    if np.isfinite(f_new.total) and f_new.total < accepted[1].total:
        return x_new, f_new, g_new
    return accepted


def minimize_lbfgs(fun, x0, lower, upper, cfg: LocalOptConfig | None = None) -> LocalOptResult:
    """Minimize ``fun(x) -> (CostBreakdown, gradient)`` inside the box [lower, upper]."""
    cfg = cfg or LocalOptConfig()
    lower = np.broadcast_to(np.asarray(lower, dtype=float), np.shape(x0))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), np.shape(x0))
    counted = _Counter(fun, cfg.max_cost_evals)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g = counted(x)
    history = [f.total]
    S, Y = deque(maxlen=cfg.history_size), deque(maxlen=cfg.history_size)
    it = 0
    reason = "budget"
    while True:
        pg = _projected_gradient(x, g, lower, upper)
        if np.max(np.abs(pg)) < cfg.grad_tol:
            reason = "gradient"
            break
        w = cfg.plateau_window
        if len(history) > w and history[-w - 1] - history[-1] <= cfg.cost_tol * abs(history[-w - 1]):
            reason = "cost-plateau"
            break
        if it >= cfg.max_iterations or counted.exhausted:
            reason = "budget"
            break
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        d = np.zeros_like(x)
        if S:
            d[free] = -_two_loop(pg[free], [s[free] for s in S], [y[free] for y in Y])
        if not S or np.dot(d, pg) >= 0:
            S.clear()
            Y.clear()
            d = -pg
        alpha = 1.0 if S else min(1.0, 1.0 / np.max(np.abs(pg)))
        step = _line_search(counted, x, f, g, d, lower, upper, alpha, cfg)
        if step is None and S:
            log.debug("line search failed; retrying along steepest descent")
            S.clear()
            Y.clear()
            d = -pg
            step = _line_search(counted, x, f, g, d, lower, upper, min(1.0, 1.0 / np.max(np.abs(pg))), cfg)
        if step is None:
            reason = "budget"
            break
        x_new, f_new, g_new = step
        s, y = x_new - x, g_new - g
        if np.dot(s, y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g = x_new, f_new, g_new
        history.append(f.total)
        it += 1
    return LocalOptResult(x, f, it, counted.evals, reason, history)


def group_optimize(start, basis: BasisSpec, problem, cfg: LocalOptConfig | None = None) -> LocalOptResult:
    """Optimize the expansion coefficients with the frequency shifts in ``basis`` fixed.

    ``problem`` is a ProblemDefinition or any objective exposing
    ``evaluate_with_gradient(c, r)`` and ``c_max``.
    """
    objective = problem if hasattr(problem, "evaluate_with_gradient") else ControlObjective(problem, basis.T)
    c_max = getattr(objective, "c_max", np.inf)

    def fun(c):
        return objective.evaluate_with_gradient(c, basis.r)

    return minimize_lbfgs(fun, start, -c_max, c_max, cfg)
