"""Synthetic data with known P(Y=1 | X), base models, ensembles and demos.

Features come from a Gaussian copula with uniform marginals and
correlation rho; outcomes are Bernoulli draws from a logistic surface.
Every random draw uses its own Philox stream keyed by (seed, stream, ...), so
results do not depend on thread scheduling.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit, logit, ndtr

from .config import get_thread_count
from .decomp_est import ScoredSample, cross_fit_calibrated, fold_labels, ici, lcs, loss_components
from .errors import DimensionMismatchError, InputError
from .finite_world import (
    BlockPredictor,
    conditional_law,
    conditional_mutual_information,
    expected_loss,
    induced_partition,
    one_level_decompose,
    random_filtration,
    random_space,
    telescope_decompose,
)
from .logistic import fit_logistic_regression
from .losses import BRIER, LOGLOSS
from .recalib import CalibratorConfig, c2_spline_calibrate, fit_calibrator, predict
from .tracing import get_tracer

logger = logging.getLogger(__name__)

SURFACES = ("main", "appendix_sim")
FEATURE_NAMES = ("x1", "x2")
VARIANTS = ("s1", "s2", "avg", "s12", "s12_quantized")
SPLIT_NAMES = ("train", "calib", "test")
STACK_CLIP = 1e-12

COPULA_STREAM = 1
SPLIT_STREAM = 2
BOOST_STREAM = 3
BANDWIDTH_STREAM = 4


def make_rng(seed, *keys):
    """Counter-based generator for the stream keyed by (seed, *keys)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


@dataclass(frozen=True)
class DGPConfig:
    rho: float = 0.0
    n: int = 10_000
    seed: int = 0
    surface: str = "main"

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise InputError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.n < 1:
            raise InputError(f"n must be >= 1, got {self.n}")
        if self.surface not in SURFACES:
            raise InputError(f"surface must be one of {SURFACES}, got '{self.surface}'")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    q: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    def features(self, names):
        """(n, len(names)) matrix of the named feature columns."""
        columns = []
        for name in names:
            if name not in FEATURE_NAMES:
                raise InputError(f"unknown feature '{name}' (expected x1 or x2)")
            columns.append(getattr(self, name))
        return np.column_stack(columns) if columns else np.empty((len(self), 0))

    def subset(self, index):
        return SyntheticDataset(self.x1[index], self.x2[index], self.y[index], self.q[index])

    def to_frame(self):
        return pd.DataFrame({"x1": self.x1, "x2": self.x2, "y": self.y, "q": self.q})

    @classmethod
    def from_frame(cls, frame):
        missing = [c for c in ("x1", "x2", "y", "q") if c not in frame.columns]
        if missing:
            raise InputError(f"dataset is missing columns {missing}")
        return cls(
            x1=frame["x1"].to_numpy(dtype=float),
            x2=frame["x2"].to_numpy(dtype=float),
            y=frame["y"].to_numpy(dtype=np.int64),
            q=frame["q"].to_numpy(dtype=float),
        )


def _copula(rng, rho, n):
    eps = rng.standard_normal((2, n))
    z1 = eps[0]
    z2 = rho * eps[0] + np.sqrt(1.0 - rho * rho) * eps[1]
    return ndtr(z1), ndtr(z2)


def sample_copula(config):
    """(x1, x2) with uniform marginals and Gaussian-scale correlation rho."""
    return _copula(make_rng(config.seed, COPULA_STREAM), config.rho, config.n)


def true_q(x1, x2, surface="main"):
    """P(Y=1 | x1, x2) for the named surface."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    bend = np.exp((x1 - x2) ** 3) - 1.0
    if surface == "main":
        eta = 2.5 * (x1 + x2 - 1.0) + 2.0 * bend
    elif surface == "appendix_sim":
        eta = x1 + x2 + bend
    else:
        raise InputError(f"surface must be one of {SURFACES}, got '{surface}'")
    return expit(eta)


def _draw(rng, rho, n, surface):
    x1, x2 = _copula(rng, rho, n)
    q = true_q(x1, x2, surface)
    y = (rng.random(n) < q).astype(np.int64)
    return SyntheticDataset(x1=x1, x2=x2, y=y, q=q)


def sample_dataset(config):
    return _draw(make_rng(config.seed, COPULA_STREAM), config.rho, config.n, config.surface)


def draw_splits(config, cell=0):
    """Independent train/calibration/test draws of size n each."""
    return {
        name: _draw(make_rng(config.seed, SPLIT_STREAM, cell, index), config.rho, config.n, config.surface)
        for index, name in enumerate(SPLIT_NAMES)
    }


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Logistic model on a subset of {x1, x2}, intercept first in ``coef``."""

    features: tuple
    coef: np.ndarray
    converged: bool
    separated: bool = False

    def predict(self, dataset):
        design = np.column_stack([np.ones(len(dataset)), dataset.features(self.features)])
        return np.clip(expit(design @ self.coef), 1e-15, 1.0 - 1e-15)


def fit_logistic(dataset, features=("x1",)):
    features = tuple(features)
    result = fit_logistic_regression(dataset.features(features), dataset.y)
    return LogisticModel(
        features=features, coef=result.coef, converged=result.converged, separated=result.separated
    )


def ensemble_average(s1, s2):
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s1.shape != s2.shape:
        raise DimensionMismatchError("ensemble members must score the same rows")
    return 0.5 * (s1 + s2)


def _stack_features(s1, s2):
    return np.column_stack(
        [logit(np.clip(s1, STACK_CLIP, 1 - STACK_CLIP)), logit(np.clip(s2, STACK_CLIP, 1 - STACK_CLIP))]
    )


@dataclass(frozen=True, eq=False)
class StackModel:
    """Meta-logistic model on the logits of two base scores."""

    coef: np.ndarray
    converged: bool
    separated: bool = False

    def predict(self, s1, s2):
        design = np.column_stack([np.ones(np.shape(s1)[0]), _stack_features(s1, s2)])
        return np.clip(expit(design @ self.coef), 1e-15, 1.0 - 1e-15)


def ensemble_stack(s1, s2, calib_outcomes):
    """Fit the stacking model on calibration-split scores and outcomes."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s1.shape != s2.shape or s1.shape != np.shape(calib_outcomes):
        raise DimensionMismatchError("stacking inputs must be aligned")
    result = fit_logistic_regression(_stack_features(s1, s2), calib_outcomes)
    return StackModel(coef=result.coef, converged=result.converged, separated=result.separated)


def quantize_score(scores, levels):
    """Map each score to the midpoint of its cell in a uniform grid of ``levels`` cells."""
    if levels < 2:
        raise InputError(f"quantization needs at least 2 levels, got {levels}")
    scores = np.asarray(scores, dtype=float)
    cell = np.minimum(np.floor(scores * levels), levels - 1)
    return (cell + 0.5) / levels


def variant_scores(models, dataset, quantize_levels=8):
    """Scores of every synthetic-experiment variant on one split."""
    s1 = models["s1"].predict(dataset)
    s2 = models["s2"].predict(dataset)
    s12 = models["s12"].predict(dataset)
    return {
        "s1": s1,
        "s2": s2,
        "avg": ensemble_average(s1, s2),
        "s12": s12,
        "s12_quantized": quantize_score(s12, quantize_levels),
    }


def _terms(prefix, sample, calibrated, losses, lcs_values):
    row = {f"lcs_{prefix}": lcs(sample, lcs_values)}
    for loss in losses:
        comp = loss_components(loss, sample, calibrated)
        row[f"{loss.name}_rel_{prefix}"] = comp.reliability
        row[f"{loss.name}_grp_{prefix}"] = comp.grouping
        row[f"{loss.name}_irr_{prefix}"] = comp.irreducible
        row[f"{loss.name}_total_{prefix}"] = comp.total
    return row


def synth_cell(
    rho,
    n=10_000,
    seed=0,
    cell=0,
    surface="main",
    calibrator="isotonic",
    folds=5,
    quantize_levels=8,
    lcs_lambda=1.0,
    losses=(BRIER, LOGLOSS),
):
    """One rho cell of the recalibration experiment: a row per score variant.

    The recalibrator is fitted on the calibration split. Decomposition terms
    before and after use cross-fitted isotonic C on the test split; LCS uses
    a cross-fitted monotone spline with a fixed penalty.
    """
    with get_tracer().start_as_current_span(
        "synth.cell", attributes={"rho": float(rho), "cell": cell, "seed": seed}
    ):
        splits = draw_splits(DGPConfig(rho=rho, n=n, seed=seed, surface=surface), cell)
        train, calib, test = (splits[name] for name in SPLIT_NAMES)
        models = {
            "s1": fit_logistic(train, ("x1",)),
            "s2": fit_logistic(train, ("x2",)),
            "s12": fit_logistic(train, ("x1", "x2")),
        }
        calib_scores = variant_scores(models, calib, quantize_levels)
        test_scores = variant_scores(models, test, quantize_levels)
        spline_config = CalibratorConfig(lam=lcs_lambda, seed=seed)
        config = CalibratorConfig(seed=seed, clip_levels=True)
        rows = []
        for variant in VARIANTS:
            g = fit_calibrator(calibrator, calib_scores[variant], calib.y, config)
            row = {"rho": float(rho), "variant": variant, "n": n}
            for prefix, scores in (
                ("before", test_scores[variant]),
                ("after", np.asarray(predict(g, test_scores[variant]), dtype=float)),
            ):
                sample = ScoredSample(scores=scores, outcomes=test.y, oracle_q=test.q)
                c_hat = cross_fit_calibrated(sample, "isotonic", folds, seed)
                lcs_values = cross_fit_calibrated(sample, "monotone_spline", folds, seed, spline_config)
                row.update(_terms(prefix, sample, c_hat, losses, lcs_values))
            rows.append(row)
        logger.debug("synth cell rho=%g done", rho)
        return rows


def run_synth(rhos, n=10_000, seed=0, surface="main", calibrator="isotonic", folds=5,
              quantize_levels=8, lcs_lambda=1.0, losses=(BRIER, LOGLOSS)):
    """Sweep the rho grid; cells run in threads, rows come back in grid order."""
    def run(indexed):
        cell, rho = indexed
        return synth_cell(rho, n, seed, cell, surface, calibrator, folds, quantize_levels, lcs_lambda, losses)

    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        results = list(pool.map(run, enumerate(rhos)))
    return pd.DataFrame([row for rows in results for row in rows])


@dataclass(frozen=True, eq=False)
class BoostingResult:
    """Per-stage table plus the exact objects it was computed from."""

    table: pd.DataFrame
    etas: list
    filtration: list
    brier: object
    logloss: object


def boosting_demo(space_size=8, depth=3, seed=0, trivial=False):
    """Telescoping decomposition along a random refining filtration.

    Stage t predicts with eta_t = P(Y=1 | F_t); the initial predictor is eta_0.
    With ``trivial`` every level equals F_0 and all gains vanish.
    """
    if depth < 1:
        raise InputError(f"depth must be >= 1, got {depth}")
    rng = make_rng(seed, BOOST_STREAM)
    space = random_space(rng, space_size, 2)
    filtration = random_filtration(rng, space_size, depth + 1)
    if trivial:
        filtration = [filtration[0]] * (depth + 1)
    start = conditional_law(space, filtration[0])
    brier = telescope_decompose(space, filtration, start, BRIER)
    logloss = telescope_decompose(space, filtration, start, LOGLOSS)
    etas = [conditional_law(space, part).at_atoms()[:, 1] for part in filtration]
    rows = []
    for stage in range(depth + 1):
        if stage == 0:
            gain = log_gain = info = pythagoras = 0.0
        else:
            gain = brier.gains[stage - 1]
            log_gain = logloss.gains[stage - 1]
            info = conditional_mutual_information(space, filtration[stage - 1], filtration[stage])
            pythagoras = brier.stage_risks[stage] - (brier.stage_risks[stage - 1] - gain)
        rows.append(
            {
                "stage": stage,
                "blocks": filtration[stage].block_count,
                "brier_risk": brier.stage_risks[stage],
                "gain": gain,
                "logloss_risk": logloss.stage_risks[stage],
                "logloss_gain": log_gain,
                "mutual_info": info,
                "pythagoras_gap": pythagoras,
            }
        )
    return BoostingResult(
        table=pd.DataFrame(rows), etas=etas, filtration=filtration, brier=brier, logloss=logloss
    )


def _redeclare(space, predictor, partition):
    """The same atom-level predictor expressed block-wise on ``partition``."""
    values = predictor.at_atoms()
    first_atom = np.zeros(partition.block_count, dtype=np.int64)
    first_atom[partition.block_of_atom[::-1]] = np.arange(space.n_atoms)[::-1]
    return BlockPredictor(partition, values[first_atom])


def stagewise_recalibrate(space, part_s, score, loss):
    """Replace the stage score by P(Y | score) and report the loss removed.

    ``score`` is declared on ``part_s``; recalibration conditions on the
    sigma-algebra the score itself generates.
    """
    if not score.partition.is_coarser_than(part_s):
        raise DimensionMismatchError("stage score is not declared against the given partition")
    level = induced_partition(space, score)
    stage = _redeclare(space, score, level)
    recalibrated = conditional_law(space, level)
    pre_loss = expected_loss(space, stage, loss)
    removed = one_level_decompose(space, level, stage, loss).regret
    post_loss = expected_loss(space, recalibrated, loss)
    post_level = induced_partition(space, recalibrated)
    post_reliability = one_level_decompose(
        space, post_level, _redeclare(space, recalibrated, post_level), loss
    ).regret
    return {
        "pre_loss": pre_loss,
        "reliability_removed": removed,
        "post_loss": post_loss,
        "post_reliability": post_reliability,
        "identity_gap": post_loss - (pre_loss - removed),
    }


def _cross_fit_c2(sample, folds, seed, basis_size, bandwidth, lam):
    labels = fold_labels(sample.n, folds, seed)
    values = np.empty(sample.n)
    for fold in range(folds):
        held_out = labels == fold
        fit = c2_spline_calibrate(
            sample.scores[~held_out], sample.outcomes[~held_out], basis_size, bandwidth, lam
        )
        values[held_out] = fit.predict(sample.scores[held_out])
    return values


def _max_decrease(fit, grid):
    return float(max(0.0, -np.min(np.diff(fit.predict(grid)))))


def bandwidth_sweep(bandwidths, basis_sizes, n=2000, seed=0, rho=0.0, surface="appendix_sim",
                    folds=5, lam=1.0):
    """ICI and LCS of isotonic, unconstrained C2 and monotone spline maps across (h, k).

    A plain two-feature logistic model is fitted on one draw and its scores
    are recalibrated on a second, independent draw with ``folds``-fold
    cross-fitting. Isotonic regression has no (h, k) and gets a single row;
    ``max_decrease`` is the largest drop, between neighbouring points of a
    1001-point grid, of the map fitted on the whole evaluation draw.
    """
    config = DGPConfig(rho=rho, n=n, seed=seed, surface=surface)
    train = _draw(make_rng(seed, BANDWIDTH_STREAM, 0), rho, n, surface)
    evaluation = _draw(make_rng(seed, BANDWIDTH_STREAM, 1), rho, n, surface)
    model = fit_logistic(train, FEATURE_NAMES)
    sample = ScoredSample(scores=model.predict(evaluation), outcomes=evaluation.y, oracle_q=evaluation.q)
    grid = np.linspace(0.0, 1.0, 1001)

    def row(method, k, h, g_hat, drop):
        return {
            "method": method,
            "basis_size": k,
            "bandwidth": h,
            "ici": ici(sample, g_hat),
            "lcs": lcs(sample, g_hat),
            "max_decrease": drop,
        }

    iso_hat = cross_fit_calibrated(sample, "isotonic", folds, seed)
    rows = [row("isotonic", None, None, iso_hat, 0.0)]
    for k in basis_sizes:
        for h in bandwidths:
            k, h = int(k), float(h)
            c2_hat = _cross_fit_c2(sample, folds, seed, k, h, lam)
            c2 = c2_spline_calibrate(sample.scores, sample.outcomes, k, h, lam)
            rows.append(row("c2_spline", k, h, c2_hat, _max_decrease(c2, grid)))
            spline_config = CalibratorConfig(basis_size=k, bandwidth=h, lam=lam, seed=seed)
            g_hat = cross_fit_calibrated(sample, "monotone_spline", folds, seed, spline_config)
            monotone = fit_calibrator("monotone_spline", sample.scores, sample.outcomes, spline_config)
            rows.append(row("monotone_spline", k, h, g_hat, _max_decrease(monotone, grid)))
    logger.debug("bandwidth sweep over %d cells for %s", len(rows), config)
    return pd.DataFrame(rows)
