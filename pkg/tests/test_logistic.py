"""Tests for the Newton logistic solver."""

import numpy as np
import pytest

from src.scoredecomp import logistic
from src.scoredecomp.errors import DegenerateDataError, ScoreDecompWarning
from src.scoredecomp.logistic import fit_logistic_regression, is_separated, newton_logistic


@pytest.fixture
def logistic_data():
    """Two features with known coefficients (intercept -0.5, slopes 1.5 and -2)."""
    rng = np.random.default_rng(99)
    features = rng.normal(size=(20000, 2))
    eta = -0.5 + 1.5 * features[:, 0] - 2.0 * features[:, 1]
    y = (rng.random(20000) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return features, y


class TestLogisticRegression:
    """Test suite for logistic maximum likelihood."""

    def test_recovers_coefficients(self, logistic_data):
        """Test the MLE lands near the generating coefficients."""
        result = fit_logistic_regression(*logistic_data)
        assert result.converged
        assert not result.separated
        assert np.allclose(result.coef, [-0.5, 1.5, -2.0], atol=0.1)

    def test_gradient_vanishes(self, logistic_data):
        """Test the score equations hold at the solution."""
        features, y = logistic_data
        design = np.column_stack([np.ones(y.size), features])
        result = newton_logistic(design, y)
        residual = design.T @ (y - result.predict(design)) / y.size
        assert np.max(np.abs(residual)) < 1e-6

    def test_separation_warns_and_flags(self):
        """Test separated classes trigger the ridge refit."""
        x = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        with pytest.warns(ScoreDecompWarning):
            result = fit_logistic_regression(x, y)
        assert result.separated
        assert result.ridge == pytest.approx(1e-8)
        assert np.all(np.isfinite(result.coef))

    def test_is_separated(self):
        """Test the separation check on overlapping and split predictors."""
        y = np.array([0, 0, 1, 1])
        assert is_separated(np.array([-2.0, -1.0, 1.0, 2.0]), y)
        assert not is_separated(np.array([-2.0, 1.5, 1.0, 2.0]), y)

    def test_single_class(self):
        """Test a single outcome class is degenerate."""
        with pytest.raises(DegenerateDataError):
            fit_logistic_regression(np.arange(5.0), np.zeros(5))

    def test_intercept_only(self):
        """Test an intercept-only fit returns the log-odds of the mean."""
        y = np.array([1.0, 0.0, 0.0, 0.0])
        result = newton_logistic(np.ones((4, 1)), y)
        assert result.coef[0] == pytest.approx(np.log(0.25 / 0.75), abs=1e-6)

    def test_stalled_line_search_not_converged(self, monkeypatch, logistic_data):
        """Test a line search that never decreases the objective away from the optimum is flagged."""
        original = logistic._objective

        def worse_away_from_start(design, y, w, beta, ridge):
            obj, eta = original(design, y, w, beta, ridge)
            return obj + float(np.any(beta != 0.0)), eta

        monkeypatch.setattr(logistic, "_objective", worse_away_from_start)
        features, y = logistic_data
        result = newton_logistic(np.column_stack([np.ones(y.size), features]), y)
        assert not result.converged
        assert np.all(result.coef == 0.0)
