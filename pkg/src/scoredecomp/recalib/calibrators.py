"""Calibrator dispatch, prediction, AUC and JSON persistence."""

import json
import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import ClassVar, Optional, Union

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateDataError, DimensionMismatchError, InputError, ScoreDecompWarning
from .isotonic import BinnedFit, IsotonicFit, SortedSample, binned_fit, pav_isotonic
from .platt import PlattFit, platt_fit
from .spline import (
    DEFAULT_BANDWIDTH,
    DEFAULT_BASIS_SIZE,
    DEFAULT_GRID_SIZE,
    MonotoneSplineFit,
    monotone_spline_calibrate,
)

logger = logging.getLogger(__name__)

METHOD_ALIASES = {"spline": "monotone_spline"}
METHODS = ("isotonic", "platt", "monotone_spline", "binned", "identity")


@dataclass(frozen=True)
class IdentityCalibrator:
    kind: ClassVar[str] = "identity"

    def predict(self, s):
        out = np.asarray(s, dtype=float)
        return float(out) if out.ndim == 0 else out.copy()

    def to_dict(self):
        return {"kind": self.kind}


Calibrator = Union[IsotonicFit, BinnedFit, PlattFit, MonotoneSplineFit, IdentityCalibrator]


@dataclass(frozen=True)
class CalibratorConfig:
    """Tuning of the fitted calibrators.

    ``lam=None`` selects the spline penalty by ``cv_folds``-fold cross-validation.
    ``clip_levels`` keeps isotonic and binned levels inside
    [1/(n+1), n/(n+1)] for a calibration sample of size n, so a step fitted
    to a pure block never predicts exactly 0 or 1 on new data.
    """

    bins: int = 10
    basis_size: int = DEFAULT_BASIS_SIZE
    bandwidth: float = DEFAULT_BANDWIDTH
    grid_size: int = DEFAULT_GRID_SIZE
    lam: Optional[float] = None
    cv_folds: int = 5
    link: str = "logit"
    seed: int = 0
    clip_levels: bool = False


def canonical_method(method):
    method = METHOD_ALIASES.get(method, method)
    if method not in METHODS:
        raise InputError(f"Unknown calibrator '{method}' (expected one of {METHODS})")
    return method


def _scores_and_outcomes(scores, outcomes):
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if scores.ndim != 1 or scores.shape != outcomes.shape:
        raise DimensionMismatchError("scores and outcomes must be vectors of equal length")
    if scores.size == 0:
        raise InputError("cannot fit a calibrator on an empty sample")
    if np.any(scores < 0.0) or np.any(scores > 1.0) or not np.all(np.isfinite(scores)):
        raise InputError("scores must lie in [0, 1]")
    return scores, outcomes


def fit_calibrator(method, scores, outcomes, config=None):
    """Fit a monotone recalibration map of the named kind."""
    method = canonical_method(method)
    config = config or CalibratorConfig()
    scores, outcomes = _scores_and_outcomes(scores, outcomes)
    if method == "isotonic":
        fit = pav_isotonic(SortedSample.from_unsorted(scores, outcomes))
    elif method == "platt":
        fit = platt_fit(scores, outcomes)
    elif method == "binned":
        fit = binned_fit(scores, outcomes, min(config.bins, scores.size))
    elif method == "monotone_spline":
        fit = monotone_spline_calibrate(
            scores,
            outcomes,
            basis_size=config.basis_size,
            bandwidth=config.bandwidth,
            lam=config.lam,
            link=config.link,
            grid_size=config.grid_size,
            folds=config.cv_folds,
            seed=config.seed,
        )
    else:
        fit = IdentityCalibrator()
    if config.clip_levels and isinstance(fit, IsotonicFit):
        fit = clip_step_levels(fit, scores.size)
    logger.debug("fitted %s calibrator on %d points", method, scores.size)
    return fit


def clip_step_levels(fit, n):
    """Step calibrator with levels moved into [1/(n+1), n/(n+1)]."""
    if n < 1:
        raise InputError(f"sample size must be >= 1, got {n}")
    lo, hi = 1.0 / (n + 1), n / (n + 1.0)
    return replace(fit, values=np.clip(fit.values, lo, hi))


def predict(calibrator, s):
    """g(s); inputs outside [0, 1] are clamped with a warning."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0):
        warnings.warn("scores outside [0, 1] clamped before calibration", ScoreDecompWarning, stacklevel=2)
        s = np.clip(s, 0.0, 1.0)
    return calibrator.predict(s)


def roc_auc(scores, outcomes):
    """Mann-Whitney AUC with ties counted one half (midranks)."""
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes)
    if scores.shape != outcomes.shape:
        raise DimensionMismatchError("scores and outcomes must be aligned")
    positives = outcomes == 1
    n_pos = int(positives.sum())
    n_neg = outcomes.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def calibrator_to_dict(calibrator):
    return calibrator.to_dict()


def calibrator_from_dict(document):
    """Rebuild a calibrator from its JSON document."""
    try:
        kind = document["kind"]
        if kind == "identity":
            return IdentityCalibrator()
        if kind == "isotonic":
            return IsotonicFit(
                breakpoints=np.asarray(document["breakpoints"], dtype=float),
                values=np.asarray(document["values"], dtype=float),
            )
        if kind == "binned":
            return BinnedFit(
                breakpoints=np.asarray(document["breakpoints"], dtype=float),
                values=np.asarray(document["values"], dtype=float),
                bins=int(document["bins"]),
            )
        if kind == "platt":
            return PlattFit(
                a=float(document["a"]),
                b=float(document["b"]),
                converged=bool(document.get("converged", True)),
                n_iter=int(document.get("n_iter", 0)),
            )
        if kind == "monotone_spline":
            fit = MonotoneSplineFit(
                knots=np.asarray(document["knots"], dtype=float),
                coefficients=np.asarray(document["coefficients"], dtype=float),
                link=document["link"],
                lam=float(document["lam"]),
                bandwidth=float(document["bandwidth"]),
                grid=np.asarray(document["grid"], dtype=float),
                converged=bool(document.get("converged", True)),
                n_iter=int(document.get("n_iter", 0)),
                kkt=dict(document.get("kkt", {})),
            )
            object.__setattr__(fit, "fitted_values", fit.predict(fit.grid))
            return fit
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed calibrator document: {exc}") from exc
    raise InputError(f"unknown calibrator kind '{kind}'")


def save_calibrator(path, calibrator):
    Path(path).write_text(json.dumps(calibrator_to_dict(calibrator), indent=2) + "\n")


def load_calibrator(path):
    try:
        document = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"calibrator file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return calibrator_from_dict(document)
