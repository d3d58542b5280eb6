"""Platt scaling: g(s) = sigmoid(a * s + b) with a >= 0."""

import logging
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.special import expit

from ..logistic import check_both_classes, newton_logistic

logger = logging.getLogger(__name__)

PLATT_RIDGE = 1e-6


@dataclass(frozen=True)
class PlattFit:
    kind: ClassVar[str] = "platt"

    a: float
    b: float
    converged: bool = True
    n_iter: int = 0

    def predict(self, s):
        out = expit(self.a * np.asarray(s, dtype=float) + self.b)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        return {
            "kind": self.kind,
            "a": self.a,
            "b": self.b,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def platt_fit(scores, outcomes, ridge=PLATT_RIDGE):
    """Penalized maximum-likelihood Platt scaling.

    The objective is convex, so when the free slope comes out negative the
    constrained optimum lies on a = 0 and the intercept-only fit is returned.

    Raises:
        DegenerateDataError: fewer than two samples or a single class
    """
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    check_both_classes(outcomes)
    ones = np.ones_like(scores)
    result = newton_logistic(np.column_stack([scores, ones]), outcomes, ridge=ridge)
    slope, intercept = result.coef
    if slope < 0.0:
        logger.debug("platt slope %.3g < 0, refitting intercept only", slope)
        result = newton_logistic(ones[:, None], outcomes, ridge=ridge)
        slope, intercept = 0.0, result.coef[0]
    return PlattFit(
        a=float(slope), b=float(intercept), converged=result.converged, n_iter=result.n_iter
    )
