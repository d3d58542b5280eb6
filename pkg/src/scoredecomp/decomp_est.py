"""Empirical estimators of reliability, grouping and irreducible uncertainty.

Every estimator takes the calibrated values C(S_i) either as a fitted
calibrator (applied to the sample's scores) or as a precomputed vector, which
is how cross-fitted and exact values are passed in.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InputError
from .losses import (
    BRIER,
    LOGLOSS,
    LOSS_UNITS,
    binary_probs,
    clamped_count,
    divergence,
    entropy,
    pointwise_loss,
)
from .recalib import CalibratorConfig, fit_calibrator, predict, quantile_bins

logger = logging.getLogger(__name__)

CROSS_FIT_STREAM = 11
HOLDOUT_STREAM = 13
BOOTSTRAP_STREAM = 17


@dataclass(frozen=True, eq=False)
class ScoredSample:
    """Aligned scores, binary outcomes and optional oracle probabilities.

    Attributes:
        scores: s_i in [0, 1]
        outcomes: y_i in {0, 1}
        oracle_q: true P(Y=1 | X_i) when known (synthetic data)
        features: optional (n, p) rows carried along for refitting
    """

    scores: np.ndarray
    outcomes: np.ndarray
    oracle_q: np.ndarray = None
    features: np.ndarray = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        outcomes = np.asarray(self.outcomes)
        if scores.ndim != 1 or outcomes.shape != scores.shape:
            raise DimensionMismatchError("scores and outcomes must be vectors of equal length")
        if scores.size == 0:
            raise InputError("empty sample")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0.0) or np.any(scores > 1.0):
            raise InputError("scores must lie in [0, 1]")
        if not np.all(np.isin(outcomes, (0, 1))):
            raise InputError("outcomes must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "outcomes", outcomes.astype(np.int64))
        if self.oracle_q is not None:
            oracle = np.asarray(self.oracle_q, dtype=float)
            if oracle.shape != scores.shape:
                raise DimensionMismatchError("oracle_q must align with scores")
            if not np.all(np.isfinite(oracle)) or np.any(oracle < 0.0) or np.any(oracle > 1.0):
                raise InputError("oracle_q must lie in [0, 1]")
            object.__setattr__(self, "oracle_q", oracle)
        if self.features is not None:
            features = np.asarray(self.features, dtype=float)
            if features.shape[0] != scores.size:
                raise DimensionMismatchError("features must have one row per score")
            object.__setattr__(self, "features", features)

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def has_oracle(self):
        return self.oracle_q is not None

    def subset(self, index):
        index = np.asarray(index)
        return ScoredSample(
            scores=self.scores[index],
            outcomes=self.outcomes[index],
            oracle_q=None if self.oracle_q is None else self.oracle_q[index],
            features=None if self.features is None else self.features[index],
        )


def calibrated_values(sample, calibrator):
    """C(S_i) from a calibrator or a precomputed vector."""
    if isinstance(calibrator, (np.ndarray, list, tuple)):
        values = np.asarray(calibrator, dtype=float)
        if values.shape != sample.scores.shape:
            raise DimensionMismatchError(
                f"{values.shape[0] if values.ndim else 0} calibrated values for {sample.n} scores"
            )
        return values
    return np.asarray(predict(calibrator, sample.scores), dtype=float)


def _require_oracle(sample, what):
    if not sample.has_oracle:
        raise InputError(f"{what} needs oracle probabilities (oracle_q)")


def reliability_hat(loss, sample, calibrator):
    """(1/n) sum d(S_i, C(S_i))."""
    c = calibrated_values(sample, calibrator)
    return float(np.mean(divergence(loss, binary_probs(sample.scores), binary_probs(c))))


def grouping_hat(loss, sample, calibrator):
    """(1/n) sum d(C(S_i), q_i)."""
    _require_oracle(sample, "grouping")
    c = calibrated_values(sample, calibrator)
    return float(np.mean(divergence(loss, binary_probs(c), binary_probs(sample.oracle_q))))


def irreducible_hat(loss, sample):
    """(1/n) sum E(q_i)."""
    _require_oracle(sample, "irreducible uncertainty")
    return float(np.mean(entropy(loss, binary_probs(sample.oracle_q))))


def lcs(sample, calibrator):
    """Local calibration score: mean (S_i - g(S_i))^2."""
    c = calibrated_values(sample, calibrator)
    return float(np.mean((sample.scores - c) ** 2))


def ici(sample, calibrator):
    """Integrated calibration index: mean |S_i - g(S_i)|."""
    c = calibrated_values(sample, calibrator)
    return float(np.mean(np.abs(sample.scores - c)))


def mean_scores(sample):
    probs = binary_probs(sample.scores)
    return {
        "brier": float(np.mean(pointwise_loss(BRIER, probs, sample.outcomes))),
        "logloss": float(np.mean(pointwise_loss(LOGLOSS, probs, sample.outcomes))),
        "logloss_clamped": clamped_count(LOGLOSS, probs, sample.outcomes),
    }


@dataclass(frozen=True)
class DiagramBin:
    bin: int
    mean_score: float
    emp_freq: float
    mass: int


def reliability_diagram(sample, bins):
    """Quantile-binned (mean score, empirical frequency, count) triples.

    Tied scores share a bin, so bins can have unequal mass; empty bins are
    omitted.

    Raises:
        InputError: bins < 1 or bins > n
    """
    index = quantile_bins(sample.scores, bins)
    counts = np.bincount(index, minlength=bins)
    score_sums = np.bincount(index, weights=sample.scores, minlength=bins)
    outcome_sums = np.bincount(index, weights=sample.outcomes, minlength=bins)
    return [
        DiagramBin(
            bin=int(b),
            mean_score=float(score_sums[b] / counts[b]),
            emp_freq=float(outcome_sums[b] / counts[b]),
            mass=int(counts[b]),
        )
        for b in np.flatnonzero(counts)
    ]


@dataclass(frozen=True)
class LossComponents:
    """Decomposition terms for one loss. Grouping and irreducible need the oracle."""

    loss: str
    reliability: float
    total: float
    grouping: float = None
    irreducible: float = None
    clamped: int = 0

    @property
    def residual(self):
        if self.grouping is None or self.irreducible is None:
            return None
        return self.total - (self.reliability + self.grouping + self.irreducible)

    def to_dict(self):
        out = {"reliability": self.reliability}
        if self.grouping is not None:
            out["grouping"] = self.grouping
        if self.irreducible is not None:
            out["irreducible"] = self.irreducible
        out["total"] = self.total
        if self.residual is not None:
            out["residual"] = self.residual
        if self.loss == LOGLOSS.name:
            out["clamped"] = self.clamped
        return out


@dataclass
class DecompositionReport:
    components: dict
    metadata: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)

    def __getitem__(self, loss_name):
        return self.components[loss_name]

    def to_dict(self):
        out = {
            "components": {name: comp.to_dict() for name, comp in self.components.items()},
            "metadata": dict(self.metadata),
        }
        if self.intervals:
            out["intervals"] = self.intervals
        return out


def loss_components(loss, sample, calibrator):
    c = calibrated_values(sample, calibrator)
    probs = binary_probs(sample.scores)
    return LossComponents(
        loss=loss.name,
        reliability=reliability_hat(loss, sample, c),
        total=float(np.mean(pointwise_loss(loss, probs, sample.outcomes))),
        grouping=grouping_hat(loss, sample, c) if sample.has_oracle else None,
        irreducible=irreducible_hat(loss, sample) if sample.has_oracle else None,
        clamped=clamped_count(loss, probs, sample.outcomes),
    )


def decompose_sample(sample, calibrator, losses=(BRIER, LOGLOSS), metadata=None):
    """Assemble reliability, grouping, irreducible and total per loss.

    The residual is reported, never forced to zero.
    """
    c = calibrated_values(sample, calibrator)
    components = {loss.name: loss_components(loss, sample, c) for loss in losses}
    meta = {"n": sample.n, "units": LOSS_UNITS, "oracle": sample.has_oracle}
    if not isinstance(calibrator, (np.ndarray, list, tuple)):
        meta["calibrator"] = calibrator.kind
    meta.update(metadata or {})
    return DecompositionReport(components=components, metadata=meta)


def empirical_conditional_mean(scores, outcomes):
    """Mean outcome among rows sharing each score value: the exact C on a population sample."""
    levels, inverse = np.unique(np.asarray(scores, dtype=float), return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=levels.size)
    sums = np.bincount(inverse, weights=np.asarray(outcomes, dtype=float), minlength=levels.size)
    return (sums / counts)[inverse]


def fold_labels(n, folds, seed, stream=CROSS_FIT_STREAM):
    if folds < 2 or folds > n:
        raise InputError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.default_rng([seed, stream])
    labels = np.empty(n, dtype=int)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


def cross_fit_calibrated(sample, method="isotonic", folds=5, seed=0, config=None):
    """Out-of-fold C(S_i): each fold is scored by a calibrator fitted on the others."""
    config = config or CalibratorConfig(seed=seed)
    labels = fold_labels(sample.n, folds, seed)
    values = np.empty(sample.n)
    for fold in range(folds):
        held_out = labels == fold
        fit = fit_calibrator(method, sample.scores[~held_out], sample.outcomes[~held_out], config)
        values[held_out] = predict(fit, sample.scores[held_out])
    return values


def holdout_split(n, fraction, seed):
    """(calibration indices, evaluation indices) from a seeded permutation."""
    if not 0.0 < fraction < 1.0:
        raise InputError(f"holdout fraction must lie in (0, 1), got {fraction}")
    size = int(np.floor(fraction * n))
    if size < 1 or size >= n:
        raise InputError(f"holdout fraction {fraction} leaves an empty side for n={n}")
    order = np.random.default_rng([seed, HOLDOUT_STREAM]).permutation(n)
    return np.sort(order[:size]), np.sort(order[size:])


def bootstrap_report(sample, calibrated, losses, replicates, seed=0, level=0.95):
    """Percentile intervals of each component from row resamples.

    The calibrated values travel with their rows, so the intervals describe
    evaluation noise only.
    """
    if replicates < 2:
        raise InputError("bootstrap needs at least 2 replicates")
    c = np.asarray(calibrated, dtype=float)
    rng = np.random.default_rng([seed, BOOTSTRAP_STREAM])
    draws = {loss.name: {} for loss in losses}
    for _ in range(replicates):
        index = rng.integers(0, sample.n, size=sample.n)
        resampled = sample.subset(index)
        for loss in losses:
            comp = loss_components(loss, resampled, c[index]).to_dict()
            for key, value in comp.items():
                if key != "clamped":
                    draws[loss.name].setdefault(key, []).append(value)
    tail = 100.0 * (1.0 - level) / 2.0
    return {
        name: {
            key: [float(np.percentile(values, tail)), float(np.percentile(values, 100.0 - tail))]
            for key, values in per_loss.items()
        }
        for name, per_loss in draws.items()
    }
