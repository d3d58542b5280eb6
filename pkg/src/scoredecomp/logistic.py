"""Penalized logistic regression by Newton / IRLS with step-halving.

Shared by the Platt calibrator, the misspecified base models and the
stacking ensemble. The objective is the weighted mean negative
log-likelihood plus ``ridge * ||beta||^2``.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, DimensionMismatchError, ScoreDecompWarning

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
MAX_ITER = 100
SEPARATION_RIDGE = 1e-8
MAX_HALVINGS = 50
GRADIENT_TOL = 1e-8
PROB_FLOOR = 1e-15


@dataclass(frozen=True)
class LogisticResult:
    """Fitted coefficients (intercept first when one was fitted) and diagnostics."""

    coef: np.ndarray
    converged: bool
    n_iter: int
    ridge: float
    separated: bool = False
    objective: float = float("nan")

    def linear_predictor(self, design):
        return np.asarray(design, dtype=float) @ self.coef

    def predict(self, design):
        """Fitted probabilities, kept strictly inside (0, 1)."""
        return np.clip(expit(self.linear_predictor(design)), PROB_FLOOR, 1.0 - PROB_FLOOR)


def _objective(design, y, w, beta, ridge):
    eta = design @ beta
    loglik = np.sum(w * (y * eta - np.logaddexp(0.0, eta))) / w.sum()
    return -loglik + ridge * float(beta @ beta), eta


def newton_logistic(design, y, weights=None, ridge=0.0, tol=TOLERANCE, max_iter=MAX_ITER):
    """Minimize the penalized objective from beta = 0.

    Converged when the objective changes by less than ``tol``, or when no
    halved Newton step decreases it and the gradient is below
    ``GRADIENT_TOL``. A stalled line search with a larger gradient is
    reported as not converged.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if design.ndim != 2 or design.shape[0] != y.shape[0] or w.shape != y.shape:
        raise DimensionMismatchError("design, outcomes and weights are not aligned")
    n_coef = design.shape[1]
    total_weight = w.sum()
    beta = np.zeros(n_coef)
    obj, eta = _objective(design, y, w, beta, ridge)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        mu = expit(eta)
        grad = -(design.T @ (w * (y - mu))) / total_weight + 2.0 * ridge * beta
        hess = (design.T * (w * mu * (1.0 - mu))) @ design / total_weight
        hess += 2.0 * ridge * np.eye(n_coef)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + scale * step
            cand_obj, cand_eta = _objective(design, y, w, candidate, ridge)
            if np.isfinite(cand_obj) and cand_obj <= obj:
                break
            scale *= 0.5
        else:
            converged = bool(np.max(np.abs(grad)) <= GRADIENT_TOL)
            if not converged:
                logger.warning(
                    "newton_logistic: line search stalled at iteration %d with gradient %.3g",
                    n_iter,
                    np.max(np.abs(grad)),
                )
            break
        change = obj - cand_obj
        beta, obj, eta = candidate, cand_obj, cand_eta
        if change < tol:
            converged = True
            break
    logger.debug("newton_logistic: %d iterations, objective %.6g", n_iter, obj)
    return LogisticResult(
        coef=beta, converged=converged, n_iter=n_iter, ridge=ridge, objective=float(obj)
    )


def check_both_classes(y):
    y = np.asarray(y)
    if y.size < 2:
        raise DegenerateDataError(f"need at least 2 samples, got {y.size}")
    if np.all(y == y.flat[0]):
        raise DegenerateDataError("outcomes contain a single class")


def is_separated(eta, y):
    """True when the linear predictor strictly separates the two classes."""
    y = np.asarray(y)
    positives, negatives = eta[y == 1], eta[y == 0]
    return bool(positives.size and negatives.size and positives.min() > negatives.max())


def fit_logistic_regression(features, y, weights=None, ridge=0.0, fit_intercept=True):
    """Logistic MLE on ``features`` (n, p), refit with a tiny ridge under separation.

    Separation and non-convergence are reported through ``ScoreDecompWarning``
    and the result flags.
    """
    y = np.asarray(y, dtype=float)
    check_both_classes(y)
    features = np.asarray(features, dtype=float).reshape(y.shape[0], -1)
    design = np.column_stack([np.ones(y.shape[0]), features]) if fit_intercept else features
    result = newton_logistic(design, y, weights=weights, ridge=ridge)
    if ridge < SEPARATION_RIDGE and is_separated(result.linear_predictor(design), y):
        warnings.warn(
            "classes are separated; refitting with ridge 1e-8",
            ScoreDecompWarning,
            stacklevel=2,
        )
        result = newton_logistic(design, y, weights=weights, ridge=SEPARATION_RIDGE)
        result = LogisticResult(
            coef=result.coef,
            converged=result.converged,
            n_iter=result.n_iter,
            ridge=result.ridge,
            separated=True,
            objective=result.objective,
        )
    if not result.converged:
        warnings.warn(
            f"logistic fit did not converge in {result.n_iter} iterations",
            ScoreDecompWarning,
            stacklevel=2,
        )
    return result
