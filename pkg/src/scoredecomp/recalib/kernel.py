"""Triweight-kernel smoothing: Nadaraya-Watson and spline pre-smoothing."""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError, InputError

logger = logging.getLogger(__name__)

TRIWEIGHT_PEAK = 35.0 / 32.0


def triweight(u):
    """K(u) = 35/32 (1 - u^2)^3 on |u| <= 1, zero outside."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, TRIWEIGHT_PEAK * (1.0 - u * u) ** 3, 0.0)


@dataclass(frozen=True, eq=False)
class PresmoothResult:
    """Pseudo-responses and kernel masses on a grid.

    ``covered`` is False where no data point falls inside the kernel window;
    ``pseudo`` is NaN there.
    """

    grid: np.ndarray
    pseudo: np.ndarray
    mass: np.ndarray
    covered: np.ndarray
    bandwidth: float


def _check_bandwidth(h):
    if not h > 0:
        raise InputError(f"bandwidth must be > 0, got {h}")


def _kernel_sums(scores, outcomes, points, h):
    order = np.argsort(scores, kind="stable")
    xs, ys = scores[order], outcomes[order]
    lo = np.searchsorted(xs, points - h, side="left")
    hi = np.searchsorted(xs, points + h, side="right")
    numer = np.zeros(points.shape[0])
    mass = np.zeros(points.shape[0])
    for j, t in enumerate(points):
        weights = triweight((t - xs[lo[j]:hi[j]]) / h)
        mass[j] = weights.sum()
        numer[j] = weights @ ys[lo[j]:hi[j]]
    return numer, mass


def _as_pair(scores, outcomes):
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if scores.ndim != 1 or scores.shape != outcomes.shape:
        raise DimensionMismatchError("scores and outcomes must be vectors of equal length")
    if scores.size == 0:
        raise InputError("kernel smoothing needs a nonempty sample")
    return scores, outcomes


def nadaraya_watson(scores, outcomes, points, h):
    """Kernel regression estimate at ``points``; NaN where the window is empty."""
    _check_bandwidth(h)
    scores, outcomes = _as_pair(scores, outcomes)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    numer, mass = _kernel_sums(scores, outcomes, points, h)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mass > 0, numer / np.where(mass > 0, mass, 1.0), np.nan)


def kernel_presmooth(scores, outcomes, grid, h):
    """Step A of the monotone spline calibrator."""
    _check_bandwidth(h)
    scores, outcomes = _as_pair(scores, outcomes)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InputError("grid must be a nonempty vector")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0.0 or grid[-1] > 1.0:
        raise InputError("grid must be strictly ascending inside [0, 1]")
    numer, mass = _kernel_sums(scores, outcomes, grid, h)
    covered = mass > 0
    pseudo = np.full(grid.shape, np.nan)
    pseudo[covered] = numer[covered] / mass[covered]
    if not covered.all():
        logger.debug("presmooth: %d of %d grid points have no kernel mass", (~covered).sum(), grid.size)
    return PresmoothResult(grid=grid, pseudo=pseudo, mass=mass, covered=covered, bandwidth=float(h))
