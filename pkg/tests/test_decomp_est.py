"""Tests for the empirical decomposition estimators."""

import math

import numpy as np
import pytest

from src.scoredecomp.decomp_est import (
    ScoredSample,
    bootstrap_report,
    cross_fit_calibrated,
    decompose_sample,
    empirical_conditional_mean,
    fold_labels,
    grouping_hat,
    holdout_split,
    ici,
    irreducible_hat,
    lcs,
    mean_scores,
    reliability_diagram,
    reliability_hat,
)
from src.scoredecomp.errors import DimensionMismatchError, InputError
from src.scoredecomp.losses import BRIER, LOGLOSS
from src.scoredecomp.recalib import fit_calibrator


@pytest.fixture
def constant_sample():
    """Two rows scored 1/2 with oracle probabilities 0.9 and 0.1."""
    return ScoredSample(scores=[0.5, 0.5], outcomes=[1, 0], oracle_q=[0.9, 0.1])


@pytest.fixture
def average_sample():
    """Averaged scores (0.25, 0.5, 0.5, 0.75) with outcomes (0, 1, 0, 1)."""
    return ScoredSample(scores=[0.25, 0.5, 0.5, 0.75], outcomes=[0, 1, 0, 1])


@pytest.fixture
def oracle_sample():
    """Large sample whose scores equal the oracle probabilities."""
    rng = np.random.default_rng(5)
    q = rng.uniform(0.05, 0.95, 20000)
    return ScoredSample(scores=q, outcomes=(rng.random(q.size) < q).astype(int), oracle_q=q)


class TestScoredSample:
    """Test suite for sample validation."""

    def test_rejects_bad_outcome(self):
        """Test outcomes other than 0 and 1 are rejected."""
        with pytest.raises(InputError):
            ScoredSample(scores=[0.5], outcomes=[2])

    def test_rejects_out_of_range_score(self):
        """Test scores outside [0, 1] are rejected."""
        with pytest.raises(InputError):
            ScoredSample(scores=[1.2], outcomes=[1])

    def test_rejects_misaligned(self):
        """Test misaligned vectors are a dimension mismatch."""
        with pytest.raises(DimensionMismatchError):
            ScoredSample(scores=[0.5, 0.5], outcomes=[1])

    def test_subset(self, constant_sample):
        """Test subsetting keeps the oracle aligned."""
        part = constant_sample.subset([1])
        assert part.n == 1
        assert part.oracle_q.tolist() == [0.1]


class TestCalibratedConstant:
    """Test suite for the constant 1/2 score with an informative feature."""

    def test_brier_terms(self, constant_sample):
        """Test reliability 0, grouping 0.16 and irreducible 0.09 sum to 0.25."""
        c = empirical_conditional_mean(constant_sample.scores, constant_sample.oracle_q)
        report = decompose_sample(constant_sample, c, losses=(BRIER,))
        comp = report["brier"]
        assert comp.reliability == pytest.approx(0.0, abs=1e-12)
        assert comp.grouping == pytest.approx(0.16, abs=1e-12)
        assert comp.irreducible == pytest.approx(0.09, abs=1e-12)
        assert comp.total == pytest.approx(0.25, abs=1e-12)
        assert abs(comp.residual) < 1e-12

    def test_logloss_terms(self, constant_sample):
        """Test the log-loss grouping term is KL(0.9 || 0.5)."""
        c = empirical_conditional_mean(constant_sample.scores, constant_sample.oracle_q)
        assert grouping_hat(LOGLOSS, constant_sample, c) == pytest.approx(0.368074, abs=1e-6)
        report = decompose_sample(constant_sample, c, losses=(LOGLOSS,))
        assert report["logloss"].total == pytest.approx(math.log(2), abs=1e-12)
        assert abs(report["logloss"].residual) < 1e-12

    def test_units_recorded(self, constant_sample):
        """Test the report records nats and the oracle flag."""
        report = decompose_sample(constant_sample, [0.5, 0.5]).to_dict()
        assert report["metadata"]["units"] == "nats"
        assert report["metadata"]["oracle"] is True
        assert report["components"]["logloss"]["clamped"] == 0


class TestAverageSample:
    """Test suite for the averaged-score sample."""

    def test_exact_reliability(self, average_sample):
        """Test exact C gives reliability 0.03125 and ICI 0.125."""
        c = empirical_conditional_mean(average_sample.scores, average_sample.outcomes)
        assert np.allclose(c, [0.0, 0.5, 0.5, 1.0])
        assert reliability_hat(BRIER, average_sample, c) == pytest.approx(0.03125, abs=1e-12)
        assert ici(average_sample, c) == pytest.approx(0.125, abs=1e-12)

    def test_lcs_equals_brier_reliability(self, average_sample):
        """Test LCS coincides with the binary Brier reliability."""
        c = empirical_conditional_mean(average_sample.scores, average_sample.outcomes)
        assert lcs(average_sample, c) == pytest.approx(reliability_hat(BRIER, average_sample, c), abs=1e-15)

    def test_diagram(self, average_sample):
        """Test three quantile bins recover the three score levels."""
        diagram = reliability_diagram(average_sample, 3)
        assert [(b.mean_score, b.emp_freq, b.mass) for b in diagram] == [
            (0.25, 0.0, 1),
            (0.5, 0.5, 2),
            (0.75, 1.0, 1),
        ]

    def test_diagram_bin_count(self, average_sample):
        """Test more bins than rows is an input error."""
        with pytest.raises(InputError):
            reliability_diagram(average_sample, 5)

    def test_oracle_terms_need_oracle(self, average_sample):
        """Test grouping and irreducible refuse samples without oracle."""
        with pytest.raises(InputError):
            irreducible_hat(BRIER, average_sample)
        report = decompose_sample(average_sample, [0.0, 0.5, 0.5, 1.0])
        assert report["brier"].grouping is None
        assert report["brier"].residual is None


class TestEstimators:
    """Test suite for estimator properties on larger samples."""

    def test_ici_squared_below_lcs(self, oracle_sample):
        """Test ICI^2 <= LCS by Jensen."""
        g = fit_calibrator("isotonic", oracle_sample.scores, oracle_sample.outcomes)
        assert ici(oracle_sample, g) ** 2 <= lcs(oracle_sample, g) + 1e-15

    def test_residual_small_for_calibrated_scores(self, oracle_sample):
        """Test the identity holds up to sampling noise when S = q."""
        report = decompose_sample(oracle_sample, oracle_sample.scores)
        for name in ("brier", "logloss"):
            assert report[name].reliability == pytest.approx(0.0, abs=1e-12)
            assert abs(report[name].residual) < 0.02

    def test_reliability_nonnegative(self, oracle_sample):
        """Test cross-fitted reliability is nonnegative for both losses."""
        c = cross_fit_calibrated(oracle_sample, "isotonic", folds=5, seed=0)
        for loss in (BRIER, LOGLOSS):
            assert reliability_hat(loss, oracle_sample, c) >= 0.0

    def test_mean_scores(self, constant_sample):
        """Test raw mean scores of the constant predictor."""
        scores = mean_scores(constant_sample)
        assert scores["brier"] == pytest.approx(0.25)
        assert scores["logloss"] == pytest.approx(math.log(2))


class TestResampling:
    """Test suite for cross-fitting, holdout and bootstrap helpers."""

    def test_fold_labels_balanced(self):
        """Test fold sizes differ by at most one and are deterministic."""
        labels = fold_labels(23, 5, seed=3)
        counts = np.bincount(labels)
        assert counts.max() - counts.min() <= 1
        assert np.array_equal(labels, fold_labels(23, 5, seed=3))

    def test_too_many_folds(self):
        """Test more folds than rows is rejected."""
        with pytest.raises(InputError):
            fold_labels(3, 5, seed=0)

    def test_cross_fit_deterministic(self, oracle_sample):
        """Test cross-fitted values depend only on the seed."""
        first = cross_fit_calibrated(oracle_sample, "platt", folds=3, seed=1)
        second = cross_fit_calibrated(oracle_sample, "platt", folds=3, seed=1)
        assert np.array_equal(first, second)

    def test_holdout_split(self):
        """Test the holdout split partitions the rows."""
        calib, evaluation = holdout_split(10, 0.3, seed=0)
        assert calib.size == 3 and evaluation.size == 7
        assert sorted(np.concatenate([calib, evaluation]).tolist()) == list(range(10))

    def test_holdout_bad_fraction(self):
        """Test fractions outside (0, 1) are rejected."""
        with pytest.raises(InputError):
            holdout_split(10, 1.0, seed=0)

    def test_bootstrap_intervals(self, oracle_sample):
        """Test percentile intervals are ordered and cover every component."""
        part = oracle_sample.subset(np.arange(500))
        intervals = bootstrap_report(part, part.scores, (BRIER, LOGLOSS), replicates=50, seed=2)
        for name in ("brier", "logloss"):
            assert set(intervals[name]) == {"reliability", "grouping", "irreducible", "total", "residual"}
            for lo, hi in intervals[name].values():
                assert lo <= hi

    def test_bootstrap_needs_replicates(self, constant_sample):
        """Test a single replicate is rejected."""
        with pytest.raises(InputError):
            bootstrap_report(constant_sample, [0.5, 0.5], (BRIER,), replicates=1)
