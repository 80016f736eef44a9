"""Damped Newton solvers shared by all estimators.

Two entry points:

* :func:`newton_maximize` — line-search Newton ascent for smooth log
  likelihoods (local fits, nuisance profiling, the homogeneous
  surrogate fit).
* :func:`newton_root` — damped Newton for estimating equations
  (surrogate efficient score solves), with a finite-difference
  Jacobian fallback when the supplied Jacobian cannot be factorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import NonConvergenceError, SeparationError

# Parameter norm beyond which a likelihood maximization counts as
# separated / divergent rather than merely slow.
EXPLODE_NORM = 1e3

_ARMIJO_C1 = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the estimating-equation root solves."""

    tol: float = 1e-9          # convergence on the max-norm of the equation
    max_iter: int = 100
    max_halvings: int = 30
    step_tol: float = 1e-12    # alternative convergence on the step size


def newton_maximize(
    f_g_h: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    x0: np.ndarray,
    *,
    gtol: float = 1e-10,
    max_iter: int = 100,
    max_halvings: int = 30,
    site: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Maximize a smooth objective by damped Newton ascent.

    ``f_g_h(x)`` returns ``(value, gradient, hessian)`` of the objective.
    Convergence is on the gradient max-norm.  Raises
    :class:`SeparationError` if the iterate norm explodes (the logistic
    separation signature) and :class:`NonConvergenceError` at the
    iteration cap.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g, h = f_g_h(x)
    if not np.isfinite(f):
        raise ValueError("objective non-finite at the initial point")
    halvings_total = 0
    for it in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            return x, {"iterations": it, "grad_norm": gnorm, "halvings": halvings_total}
        step = _ascent_direction(g, h)
        slope = float(g @ step)
        if slope <= 0.0:
            step = g.copy()
            slope = float(g @ g)
        if float(np.max(np.abs(step))) <= 1e-14 * (1.0 + float(np.max(np.abs(x)))):
            # Newton step below float resolution: at the optimum
            return x, {"iterations": it, "grad_norm": gnorm, "halvings": halvings_total}
        # allow one-ulp objective jitter so full steps survive near the optimum
        f_noise = 1e-14 * max(1.0, abs(f))
        t = 1.0
        for _ in range(max_halvings):
            x_new = x + t * step
            f_new, g_new, h_new = f_g_h(x_new)
            if np.isfinite(f_new) and f_new >= f + _ARMIJO_C1 * t * slope - f_noise:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(site, it + 1, gnorm)
        halvings_total += int(round(-np.log2(t))) if t < 1.0 else 0
        x, f, g, h = x_new, f_new, g_new, h_new
        if np.linalg.norm(x) > EXPLODE_NORM:
            raise SeparationError(site, float(np.linalg.norm(x)))
    raise NonConvergenceError(site, max_iter, float(np.max(np.abs(g))))


def _ascent_direction(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Solve ``-h step = g``, adding a small ridge if -h is not PD."""
    a = -h
    ridge = 0.0
    scale = max(float(np.mean(np.diag(a))), 1.0)
    for _ in range(6):
        try:
            c = scipy.linalg.cho_factor(a + ridge * np.eye(a.shape[0]), lower=True)
            return scipy.linalg.cho_solve(c, g)
        except scipy.linalg.LinAlgError:
            ridge = 1e-10 * scale if ridge == 0.0 else ridge * 100.0
    return g.copy()


def newton_root(
    func: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    cfg: SolverConfig | None = None,
    site: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Solve ``func(x) = 0`` by damped Newton with residual backtracking.

    ``jac`` is the analytic Jacobian; if its factorization fails, the
    step falls back to a central finite-difference Jacobian built from
    ``func``.  Converges when the residual max-norm drops below
    ``cfg.tol`` or the accepted step is below ``cfg.step_tol``.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x0, dtype=float).copy()
    fx = func(x)
    halvings_total = 0
    for it in range(cfg.max_iter):
        res = float(np.max(np.abs(fx)))
        if res <= cfg.tol:
            return x, _root_stats(it, res, halvings_total)
        step = _newton_step(func, jac, x, fx)
        t = 1.0
        norm0 = float(np.linalg.norm(fx))
        accepted = False
        for _ in range(cfg.max_halvings):
            x_new = x + t * step
            f_new = func(x_new)
            if np.all(np.isfinite(f_new)) and (
                float(np.linalg.norm(f_new)) < norm0
                or float(np.max(np.abs(f_new))) <= cfg.tol
            ):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NonConvergenceError(site, it + 1, res)
        halvings_total += int(round(-np.log2(t))) if t < 1.0 else 0
        x, fx = x_new, f_new
        if float(np.linalg.norm(t * step)) <= cfg.step_tol:
            res = float(np.max(np.abs(fx)))
            return x, _root_stats(it + 1, res, halvings_total)
    res = float(np.max(np.abs(fx)))
    if res <= cfg.tol:
        return x, _root_stats(cfg.max_iter, res, halvings_total)
    raise NonConvergenceError(site, cfg.max_iter, res)


def _root_stats(iterations: int, residual: float, halvings: int) -> dict:
    return {"iterations": iterations, "final_residual": residual, "halvings": halvings}


def _newton_step(func, jac, x, fx) -> np.ndarray:
    try:
        return np.linalg.solve(jac(x), -fx)
    except np.linalg.LinAlgError:
        return np.linalg.solve(_fd_jacobian(func, x), -fx)


def _fd_jacobian(func, x, step: float = 1e-7) -> np.ndarray:
    n = x.shape[0]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        cols.append((func(x + e) - func(x - e)) / (2.0 * step))
    return np.column_stack(cols)
