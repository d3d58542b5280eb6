"""Train -> calibrate -> test pipeline on synthetic data.

Methods: ``s1`` and ``s2`` are logistic models on one feature each, ``glm``
uses both features, ``average`` is the mean of s1 and s2, and ``stacking`` a
meta-logistic model fitted on the calibration split. Every method is then
recalibrated on the calibration split and evaluated on the test split.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .decomp_est import ScoredSample, grouping_hat, lcs, reliability_hat
from .errors import InputError
from .losses import BRIER, LOGLOSS, LossKind, binary_probs, clamped_count, pointwise_loss
from .recalib import CalibratorConfig, canonical_method, fit_calibrator, predict
from .synthgen import DGPConfig, ensemble_average, ensemble_stack, fit_logistic, make_rng, sample_dataset

logger = logging.getLogger(__name__)

METHODS = ("s1", "s2", "glm", "average", "stacking")
SPLIT_STREAM = 21
FRACTION_SLACK = 1e-9


@dataclass(frozen=True)
class PipelineSpec:
    """Everything that defines one pipeline run except the replicate seed."""

    n: int = 2000
    rho: float = 0.0
    surface: str = "main"
    calibrator: str = "isotonic"
    losses: tuple = (BRIER, LOGLOSS)
    fractions: tuple = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0
    methods: tuple = METHODS

    def __post_init__(self):
        fractions = tuple(float(f) for f in self.fractions)
        if len(fractions) != 3 or any(f <= 0 for f in fractions):
            raise InputError(f"need three positive split fractions, got {self.fractions}")
        if sum(fractions) > 1.0 + FRACTION_SLACK:
            raise InputError(f"split fractions sum to {sum(fractions)} > 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InputError(f"unknown methods {sorted(unknown)} (expected a subset of {METHODS})")
        object.__setattr__(self, "fractions", fractions)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "calibrator", canonical_method(self.calibrator))
        DGPConfig(rho=self.rho, n=self.n, seed=self.seed, surface=self.surface)

    def dgp(self, seed=None):
        return DGPConfig(
            rho=self.rho, n=self.n, seed=self.seed if seed is None else seed, surface=self.surface
        )

    def metric_names(self):
        names = []
        for loss in self.losses:
            names += [f"{loss.name}_raw", f"{loss.name}_recal", f"rel_{loss.name}", f"grp_{loss.name}"]
            if loss.kind is LossKind.LOGLOSS:
                names.append(f"{loss.name}_recal_clamped")
        return names + ["lcs"]


def split_data(n, fractions, seed):
    """Disjoint index sets from contiguous slices of a seeded permutation.

    Raises:
        InputError: infeasible fractions or an empty split
    """
    fractions = np.asarray(fractions, dtype=float)
    if fractions.ndim != 1 or fractions.size == 0 or np.any(fractions <= 0):
        raise InputError("split fractions must be positive")
    if fractions.sum() > 1.0 + FRACTION_SLACK:
        raise InputError(f"split fractions sum to {fractions.sum()} > 1")
    bounds = np.floor(np.cumsum(fractions) * n + FRACTION_SLACK).astype(int)
    bounds = np.minimum(bounds, n)
    order = make_rng(seed, SPLIT_STREAM).permutation(n)
    starts = np.concatenate([[0], bounds[:-1]])
    splits = [np.sort(order[lo:hi]) for lo, hi in zip(starts, bounds)]
    for index, split in enumerate(splits):
        if split.size == 0:
            raise InputError(f"split {index} is empty for n={n} and fractions {fractions.tolist()}")
    return splits


@dataclass(frozen=True, eq=False)
class BaseModels:
    s1: object
    s2: object
    glm: object


def fit_base_models(train):
    return BaseModels(
        s1=fit_logistic(train, ("x1",)),
        s2=fit_logistic(train, ("x2",)),
        glm=fit_logistic(train, ("x1", "x2")),
    )


def method_scores(models, dataset, stack=None, methods=METHODS):
    s1 = models.s1.predict(dataset)
    s2 = models.s2.predict(dataset)
    available = {
        "s1": lambda: s1,
        "s2": lambda: s2,
        "glm": lambda: models.glm.predict(dataset),
        "average": lambda: ensemble_average(s1, s2),
        "stacking": lambda: stack.predict(s1, s2),
    }
    return {method: available[method]() for method in methods}


def evaluate_methods(spec, models, calib, test):
    """Metrics per method: raw and recalibrated loss, reliability, grouping, LCS.

    Reliability and LCS use the recalibration map fitted on the calibration
    split as C, so they are out-of-sample on the test split. Step calibrators
    are fitted with clipped levels, and log-loss rows also carry the number of
    recalibrated test predictions that hit the log floor.
    """
    stack = None
    if "stacking" in spec.methods:
        stack = ensemble_stack(models.s1.predict(calib), models.s2.predict(calib), calib.y)
    calib_scores = method_scores(models, calib, stack, spec.methods)
    test_scores = method_scores(models, test, stack, spec.methods)
    config = CalibratorConfig(seed=spec.seed, clip_levels=True)
    results = {}
    for method in spec.methods:
        g = fit_calibrator(spec.calibrator, calib_scores[method], calib.y, config)
        raw = ScoredSample(scores=test_scores[method], outcomes=test.y, oracle_q=test.q)
        recalibrated = np.asarray(predict(g, raw.scores), dtype=float)
        metrics = {}
        for loss in spec.losses:
            metrics[f"{loss.name}_raw"] = float(np.mean(pointwise_loss(loss, binary_probs(raw.scores), test.y)))
            metrics[f"{loss.name}_recal"] = float(
                np.mean(pointwise_loss(loss, binary_probs(recalibrated), test.y))
            )
            if loss.kind is LossKind.LOGLOSS:
                metrics[f"{loss.name}_recal_clamped"] = clamped_count(loss, binary_probs(recalibrated), test.y)
            metrics[f"rel_{loss.name}"] = reliability_hat(loss, raw, recalibrated)
            metrics[f"grp_{loss.name}"] = grouping_hat(loss, raw, recalibrated)
        metrics["lcs"] = lcs(raw, recalibrated)
        results[method] = metrics
    return results


def draw_pipeline_data(spec, seed):
    """Pooled draw of size n split into train/calibration/test datasets."""
    data = sample_dataset(spec.dgp(seed))
    train_idx, calib_idx, test_idx = split_data(spec.n, spec.fractions, seed)
    return data.subset(train_idx), data.subset(calib_idx), data.subset(test_idx)


def run_pipeline(spec, seed=None):
    seed = spec.seed if seed is None else seed
    train, calib, test = draw_pipeline_data(spec, seed)
    models = fit_base_models(train)
    logger.debug("pipeline seed %d: %d/%d/%d rows", seed, len(train), len(calib), len(test))
    return evaluate_methods(spec, models, calib, test)
