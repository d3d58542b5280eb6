"""Primal active-set solver for small convex QPs with homogeneous constraints.

Solves  min 1/2 x'Hx + c'x  subject to  Ax >= 0,
where every constraint is active at a constant vector (the monotone spline
case: rows of A are first differences).
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ScoreDecompWarning

logger = logging.getLogger(__name__)

STEP_TOL = 1e-13
DECREASE_TOL = 1e-12
MULTIPLIER_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class QPResult:
    x: np.ndarray
    active: np.ndarray
    multipliers: np.ndarray
    n_iter: int
    converged: bool


def _solve(matrix, rhs):
    try:
        return np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(matrix, rhs, rcond=None)[0]


def _equality_step(hessian, gradient, rows):
    """Newton step and multipliers of the QP restricted to ``A_W p = 0``."""
    n = hessian.shape[0]
    m = rows.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = hessian
    kkt[:n, n:] = -rows.T
    kkt[n:, :n] = rows
    rhs = np.concatenate([-gradient, np.zeros(m)])
    sol = _solve(kkt, rhs)
    return sol[:n], sol[n:]


def constant_start(hessian, linear):
    """Best constant vector, feasible for every difference constraint."""
    ones = np.ones(hessian.shape[0])
    curvature = ones @ hessian @ ones
    level = -(ones @ linear) / curvature if curvature > 0 else 0.0
    return level * ones


def solve_monotone_qp(hessian, linear, constraints, start=None, max_iter=None):
    """Primal active-set method started from a feasible point.

    Returns the minimizer with its active set and Lagrange multipliers
    (nonnegative at a KKT point).
    """
    hessian = np.asarray(hessian, dtype=float)
    linear = np.asarray(linear, dtype=float)
    A = np.asarray(constraints, dtype=float)
    n_cons = A.shape[0]
    x = constant_start(hessian, linear) if start is None else np.array(start, dtype=float)
    slack = A @ x
    active = slack <= STEP_TOL * (1.0 + np.abs(x).max())
    if max_iter is None:
        max_iter = 50 * (hessian.shape[0] + n_cons)
    multipliers = np.zeros(n_cons)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        gradient = hessian @ x + linear
        rows = A[active]
        step, lam = _equality_step(hessian, gradient, rows)
        # steps at rounding level predict no decrease once the penalty is large
        decrease = -(gradient @ step + 0.5 * step @ hessian @ step)
        objective = 0.5 * x @ hessian @ x + linear @ x
        if (
            np.max(np.abs(step)) <= STEP_TOL * (1.0 + np.max(np.abs(x)))
            or decrease <= DECREASE_TOL * (1.0 + abs(objective))
        ):
            multipliers = np.zeros(n_cons)
            multipliers[active] = lam
            if lam.size == 0 or lam.min() >= -MULTIPLIER_TOL:
                converged = True
                break
            drop = np.flatnonzero(active)[np.argmin(lam)]
            active[drop] = False
            continue
        direction = A @ step
        alpha = 1.0
        blocking = None
        for i in np.flatnonzero(~active & (direction < 0)):
            ratio = -(A[i] @ x) / direction[i]
            if ratio < alpha:
                alpha, blocking = max(ratio, 0.0), i
        x = x + alpha * step
        if blocking is not None:
            active[blocking] = True
    if not converged:
        warnings.warn(
            f"active-set QP stopped after {n_iter} iterations",
            ScoreDecompWarning,
            stacklevel=2,
        )
    logger.debug("active-set QP: %d iterations, %d active", n_iter, int(active.sum()))
    return QPResult(x=x, active=active.copy(), multipliers=multipliers, n_iter=n_iter, converged=converged)


def kkt_residuals(gradient, constraints, x, active):
    """KKT diagnostics for  min f(x)  s.t.  Ax >= 0  at ``x``.

    Multipliers are recovered on the active set by least squares from
    grad f = A_W' lambda.

    Returns:
        dict with ``primal`` (min of Ax), ``dual`` (min multiplier),
        ``complementarity`` (max |lambda_i (Ax)_i|) and ``stationarity``
        (sup norm of grad f - A' lambda)
    """
    A = np.asarray(constraints, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    active = np.asarray(active, dtype=bool)
    lam = np.zeros(A.shape[0])
    if active.any():
        lam[active] = np.linalg.lstsq(A[active].T, gradient, rcond=None)[0]
    slack = A @ x
    return {
        "primal": float(slack.min()) if slack.size else 0.0,
        "dual": float(lam.min()) if lam.size else 0.0,
        "complementarity": float(np.max(np.abs(lam * slack))) if slack.size else 0.0,
        "stationarity": float(np.max(np.abs(gradient - A.T @ lam))),
    }
