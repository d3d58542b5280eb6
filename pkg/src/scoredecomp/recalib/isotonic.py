"""Weighted isotonic regression by pool-adjacent-violators."""

import logging
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.stats import rankdata

from ..errors import DimensionMismatchError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SortedSample:
    """Inputs sorted ascending with their responses and nonnegative weights."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        w = np.ones_like(x) if self.w is None else np.asarray(self.w, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.shape != w.shape:
            raise DimensionMismatchError("x, y and w must be vectors of equal length")
        if x.size == 0:
            raise InputError("isotonic regression needs a nonempty sample")
        if np.any(np.diff(x) < 0):
            raise InputError("x must be sorted ascending")
        if np.any(w < 0) or not w.sum() > 0:
            raise InputError("weights must be nonnegative with positive total")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_unsorted(cls, x, y, w=None):
        x = np.asarray(x, dtype=float)
        order = np.argsort(x, kind="stable")
        y = np.asarray(y, dtype=float)
        w = None if w is None else np.asarray(w, dtype=float)[order]
        return cls(x[order], y[order], w)

    def __len__(self):
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class IsotonicFit:
    """Right-continuous step function through nondecreasing levels.

    Below the first breakpoint the first level applies.
    """

    kind: ClassVar[str] = "isotonic"

    breakpoints: np.ndarray
    values: np.ndarray

    def predict(self, s):
        s = np.asarray(s, dtype=float)
        index = np.searchsorted(self.breakpoints, s, side="right") - 1
        out = self.values[np.clip(index, 0, self.values.size - 1)]
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {
            "kind": self.kind,
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class BinnedFit(IsotonicFit):
    """Quantile-bin means made monotone by PAV across bins."""

    kind: ClassVar[str] = "binned"

    bins: int = 10

    def to_dict(self):
        out = super().to_dict()
        out["bins"] = self.bins
        return out


def _merge_ties(x, y, w):
    levels, inverse = np.unique(x, return_inverse=True)
    inverse = inverse.reshape(-1)
    weight = np.bincount(inverse, weights=w, minlength=levels.size)
    total = np.bincount(inverse, weights=w * y, minlength=levels.size)
    keep = weight > 0
    return levels[keep], total[keep] / weight[keep], weight[keep]


def pool_adjacent_violators(values, weights):
    """Weighted isotone least-squares fit of a sequence on a chain."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    means, masses, counts = [], [], []
    for value, weight in zip(values, weights):
        means.append(value)
        masses.append(weight)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            mass = masses[-2] + masses[-1]
            mean = (means[-2] * masses[-2] + means[-1] * masses[-1]) / mass
            count = counts[-2] + counts[-1]
            del means[-1], masses[-1], counts[-1]
            means[-1], masses[-1], counts[-1] = mean, mass, count
    return np.repeat(means, counts)


def pav_isotonic(sample):
    """Isotonic fit of ``sample``; tied x values are pooled first."""
    levels, means, weights = _merge_ties(sample.x, sample.y, sample.w)
    fitted = pool_adjacent_violators(means, weights)
    logger.debug("pav: %d distinct inputs, %d levels", levels.size, np.unique(fitted).size)
    return IsotonicFit(breakpoints=levels, values=fitted)


def quantile_bins(scores, bins):
    """Bin index per score; tied scores always share a bin."""
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    if bins < 1:
        raise InputError(f"bin count must be >= 1, got {bins}")
    if bins > n:
        raise InputError(f"bin count {bins} exceeds sample size {n}")
    ranks = rankdata(scores, method="average")
    return np.minimum(np.floor(bins * (ranks - 0.5) / n).astype(int), bins - 1)


def binned_fit(scores, outcomes, bins=10):
    """Monotone histogram calibrator on quantile bins."""
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    index = quantile_bins(scores, bins)
    used = np.unique(index)
    counts = np.bincount(index, minlength=bins)[used]
    freq = np.bincount(index, weights=outcomes, minlength=bins)[used] / counts
    lower = np.array([scores[index == b].min() for b in used])
    return BinnedFit(breakpoints=lower, values=pool_adjacent_violators(freq, counts), bins=bins)
