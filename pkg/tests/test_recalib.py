"""Tests for the monotone recalibrators."""

import itertools
import warnings

import numpy as np
import pytest

from src.scoredecomp.errors import DegenerateDataError, InputError, ScoreDecompWarning
from src.scoredecomp.recalib import (
    BinnedFit,
    CalibratorConfig,
    IsotonicFit,
    SortedSample,
    binned_fit,
    c2_spline_calibrate,
    calibrator_from_dict,
    calibrator_to_dict,
    canonical_method,
    fit_calibrator,
    kernel_presmooth,
    kkt_residuals,
    load_calibrator,
    monotone_spline_calibrate,
    monotone_spline_fit,
    nadaraya_watson,
    pav_isotonic,
    platt_fit,
    predict,
    pspline_fit,
    quantile_bins,
    roc_auc,
    save_calibrator,
    select_lambda,
    solve_monotone_qp,
    triweight,
)
from src.scoredecomp.recalib import spline
from src.scoredecomp.recalib.isotonic import pool_adjacent_violators
from src.scoredecomp.recalib.spline import LAMBDA_GRID, difference_matrix


@pytest.fixture
def rng():
    """Seeded generator for calibration samples."""
    return np.random.default_rng(424242)


@pytest.fixture
def linear_sample(rng):
    """Uniform scores whose outcomes are Bernoulli(score)."""
    scores = rng.random(3000)
    outcomes = (rng.random(3000) < scores).astype(float)
    return scores, outcomes


def minmax_isotonic(values, weights):
    """Isotonic regression by the max-min block-average formula."""
    n = len(values)
    fitted = np.empty(n)
    for i in range(n):
        fitted[i] = max(
            min(
                np.dot(weights[j:k + 1], values[j:k + 1]) / weights[j:k + 1].sum()
                for k in range(i, n)
            )
            for j in range(i + 1)
        )
    return fitted


class TestIsotonic:
    """Test suite for pool-adjacent-violators."""

    def test_small_example(self):
        """Test x = (0.1, 0.2, 0.3), y = (1, 0, 1) pools the first two points."""
        fit = pav_isotonic(SortedSample([0.1, 0.2, 0.3], [1.0, 0.0, 1.0]))
        assert np.allclose(fit.values, [0.5, 0.5, 1.0])
        assert fit.predict(0.25) == pytest.approx(0.5)

    def test_matches_minmax_formula(self, rng):
        """Test PAV against the max-min formula for every n <= 8."""
        for n in range(1, 9):
            for _ in range(25):
                values = rng.random(n)
                weights = rng.uniform(0.1, 2.0, n)
                fitted = pool_adjacent_violators(values, weights)
                assert np.max(np.abs(fitted - minmax_isotonic(values, weights))) < 1e-12

    def test_binary_patterns(self):
        """Test every 0/1 pattern of length 6 against the max-min formula."""
        weights = np.ones(6)
        for pattern in itertools.product((0.0, 1.0), repeat=6):
            values = np.array(pattern)
            assert np.allclose(pool_adjacent_violators(values, weights), minmax_isotonic(values, weights))

    def test_ties_share_a_level(self):
        """Test tied inputs are pooled before fitting."""
        fit = pav_isotonic(SortedSample.from_unsorted([0.5, 0.2, 0.5], [1.0, 0.0, 0.0]))
        assert fit.breakpoints.tolist() == [0.2, 0.5]
        assert np.allclose(fit.values, [0.0, 0.5])

    def test_step_function_prediction(self):
        """Test the fit is right-continuous and flat outside its breakpoints."""
        fit = IsotonicFit(breakpoints=np.array([0.2, 0.6]), values=np.array([0.1, 0.7]))
        assert fit.predict(0.0) == pytest.approx(0.1)
        assert fit.predict(0.6) == pytest.approx(0.7)
        assert np.allclose(fit.predict([0.59, 1.0]), [0.1, 0.7])

    def test_unsorted_rejected(self):
        """Test SortedSample refuses unsorted inputs."""
        with pytest.raises(InputError):
            SortedSample([0.3, 0.1], [1.0, 0.0])


class TestBinned:
    """Test suite for the quantile-bin calibrator."""

    def test_ties_share_a_bin(self):
        """Test tied scores never straddle a bin boundary."""
        index = quantile_bins([0.1, 0.5, 0.5, 0.5, 0.9, 0.95], 3)
        assert index[1] == index[2] == index[3]

    def test_too_many_bins(self):
        """Test more bins than points is an input error."""
        with pytest.raises(InputError):
            quantile_bins([0.1, 0.2], 3)

    def test_monotone_levels(self, linear_sample):
        """Test bin frequencies are made nondecreasing."""
        fit = binned_fit(*linear_sample, bins=20)
        assert isinstance(fit, BinnedFit)
        assert np.all(np.diff(fit.values) >= 0.0)


class TestPlatt:
    """Test suite for Platt scaling."""

    def test_positive_slope(self, linear_sample):
        """Test increasing risk gives a positive slope."""
        assert platt_fit(*linear_sample).a > 0.0

    def test_negative_slope_clamped(self, rng):
        """Test decreasing risk falls back to the intercept-only fit."""
        scores = rng.random(2000)
        outcomes = (rng.random(2000) < 1.0 - scores).astype(float)
        fit = platt_fit(scores, outcomes)
        assert fit.a == 0.0
        assert fit.predict(0.3) == pytest.approx(outcomes.mean(), abs=1e-4)

    def test_single_class(self):
        """Test a single-class sample is degenerate."""
        with pytest.raises(DegenerateDataError):
            platt_fit([0.1, 0.2, 0.3], [1.0, 1.0, 1.0])


class TestKernel:
    """Test suite for triweight smoothing."""

    def test_triweight_integrates_to_one(self):
        """Test the kernel integrates to one."""
        u = np.linspace(-1.0, 1.0, 20001)
        assert np.trapezoid(triweight(u), u) == pytest.approx(1.0, abs=1e-8)

    def test_flat_limit_is_mean(self, linear_sample):
        """Test a huge bandwidth returns the global mean everywhere."""
        scores, outcomes = linear_sample
        values = nadaraya_watson(scores, outcomes, [0.0, 0.5, 1.0], h=1e4)
        assert np.max(np.abs(values - outcomes.mean())) < 1e-6

    def test_uncovered_points(self):
        """Test grid points without data are flagged and NaN."""
        smoothed = kernel_presmooth([0.1, 0.15], [0.0, 1.0], np.linspace(0.0, 1.0, 11), h=0.08)
        assert smoothed.covered[1] and not smoothed.covered[-1]
        assert np.isnan(smoothed.pseudo[-1])

    def test_bad_bandwidth(self):
        """Test a nonpositive bandwidth is rejected."""
        with pytest.raises(InputError):
            nadaraya_watson([0.1], [1.0], [0.1], h=0.0)


class TestQP:
    """Test suite for the active-set solver."""

    def test_matches_pav(self, rng):
        """Test the diagonal QP reproduces weighted isotonic regression."""
        for n in (2, 5, 8):
            values = rng.random(n)
            weights = rng.uniform(0.5, 2.0, n)
            result = solve_monotone_qp(np.diag(weights), -weights * values, difference_matrix(n))
            assert result.converged
            assert np.max(np.abs(result.x - pool_adjacent_violators(values, weights))) < 1e-10

    def test_kkt_at_solution(self):
        """Test KKT residuals vanish on a three-point example."""
        hessian = np.eye(3)
        linear = -np.array([3.0, 1.0, 2.0])
        constraints = difference_matrix(3)
        result = solve_monotone_qp(hessian, linear, constraints)
        assert np.allclose(result.x, [2.0, 2.0, 2.0])
        kkt = kkt_residuals(hessian @ result.x + linear, constraints, result.x, result.active)
        assert kkt["dual"] >= -1e-12
        assert kkt["stationarity"] < 1e-12
        assert kkt["complementarity"] < 1e-12


class TestMonotoneSpline:
    """Test suite for the kernel-smoothed monotone spline."""

    def test_nondecreasing(self, linear_sample):
        """Test the fitted map never decreases on a fine grid."""
        fit = monotone_spline_calibrate(*linear_sample, lam=1.0)
        grid = np.linspace(0.0, 1.0, 2001)
        assert np.min(fit.derivative(grid)) >= -1e-9
        assert np.all(np.diff(fit.predict(grid)) >= -1e-12)

    def test_kkt_residuals(self, linear_sample):
        """Test the identity-link solution satisfies KKT to 1e-7."""
        fit = monotone_spline_calibrate(*linear_sample, lam=1.0, link="identity")
        assert fit.converged
        assert fit.kkt["primal"] >= -1e-9
        assert fit.kkt["dual"] >= -1e-7
        assert fit.kkt["complementarity"] < 1e-7
        assert fit.kkt["stationarity"] < 1e-7

    def test_decreasing_data_gives_constant(self):
        """Test decreasing pseudo-responses collapse to their mean."""
        grid = np.linspace(0.0, 1.0, 101)
        fit = monotone_spline_fit(grid, 1.0 - grid, np.ones(101), lam=1.0, link="identity")
        assert np.allclose(fit.predict(grid), 0.5, atol=1e-9)

    def test_large_penalty_is_linear(self):
        """Test a huge penalty drives the coefficient second differences to zero."""
        grid = np.linspace(0.0, 1.0, 101)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScoreDecompWarning)
            fit = monotone_spline_fit(grid, grid ** 2, np.ones(101), lam=1e9, link="identity")
        assert np.max(np.abs(np.diff(fit.coefficients, n=2))) < 1e-6
        assert np.all(np.diff(fit.coefficients) >= -1e-9)

    def test_tracks_truth(self, linear_sample):
        """Test the logit-link fit recovers g(s) = s on calibrated data."""
        fit = monotone_spline_calibrate(*linear_sample, lam=1.0)
        grid = np.linspace(0.1, 0.9, 9)
        assert np.max(np.abs(fit.predict(grid) - grid)) < 0.08

    def test_select_lambda(self, rng):
        """Test cross-validation picks a candidate and reports every score."""
        scores = rng.random(400)
        outcomes = (rng.random(400) < scores).astype(float)
        best, cv_scores = select_lambda(scores, outcomes, folds=3)
        assert best in LAMBDA_GRID
        assert len(cv_scores) == len(LAMBDA_GRID)

    def test_bad_link(self):
        """Test unknown links are rejected."""
        grid = np.linspace(0.0, 1.0, 11)
        with pytest.raises(InputError):
            monotone_spline_fit(grid, grid, np.ones(11), link="probit")

    def test_pspline(self, linear_sample):
        """Test the unconstrained P-spline follows the diagonal."""
        fit = pspline_fit(*linear_sample, lam=1.0)
        assert np.max(np.abs(fit.predict([0.2, 0.5, 0.8]) - [0.2, 0.5, 0.8])) < 0.08

    def test_pspline_weights(self):
        """Test zero-weight points do not pull the fit."""
        x = np.linspace(0.0, 1.0, 40)
        y = np.where(np.arange(40) % 2 == 0, x, 1.0)
        weights = (np.arange(40) % 2 == 0).astype(float)
        fit = pspline_fit(x, y, basis_size=8, lam=1e-6, weights=weights)
        assert np.max(np.abs(fit.predict([0.25, 0.5, 0.75]) - [0.25, 0.5, 0.75])) < 1e-6

    def test_c2_spline_is_unconstrained(self, rng):
        """Test the smooth unconstrained spline follows a decreasing trend."""
        scores = rng.random(3000)
        outcomes = (rng.random(3000) < 1.0 - scores).astype(float)
        fit = c2_spline_calibrate(scores, outcomes, basis_size=8, bandwidth=0.1)
        assert fit.predict(0.2) > fit.predict(0.8) + 0.3

    def test_stalled_irls_not_converged(self, monkeypatch, linear_sample):
        """Test IRLS whose line search never decreases the objective reports no convergence."""
        original = spline._bernoulli_objective
        calls = []

        def worse_after_start(basis, y, v, lam, penalty, beta):
            calls.append(1)
            return original(basis, y, v, lam, penalty, beta) + (len(calls) > 1)

        monkeypatch.setattr(spline, "_bernoulli_objective", worse_after_start)
        with pytest.warns(ScoreDecompWarning):
            fit = monotone_spline_calibrate(*linear_sample, lam=1.0)
        assert not fit.converged


class TestCalibrators:
    """Test suite for calibrator dispatch and persistence."""

    def test_alias(self):
        """Test the spline flag maps to the monotone spline."""
        assert canonical_method("spline") == "monotone_spline"
        with pytest.raises(InputError):
            canonical_method("beta")

    def test_scores_out_of_range(self):
        """Test fitting on scores outside [0, 1] is rejected."""
        with pytest.raises(InputError):
            fit_calibrator("isotonic", [0.2, 1.5], [0.0, 1.0])

    def test_predict_clamps_with_warning(self):
        """Test prediction clamps out-of-range scores and warns."""
        fit = fit_calibrator("isotonic", [0.2, 0.4, 0.6, 0.8], [0.0, 0.0, 1.0, 1.0])
        with pytest.warns(ScoreDecompWarning):
            values = predict(fit, [-0.5, 1.5])
        assert np.allclose(values, [0.0, 1.0])

    def test_every_method_is_monotone(self, linear_sample):
        """Test every calibrator yields a nondecreasing map."""
        config = CalibratorConfig(lam=1.0)
        grid = np.linspace(0.0, 1.0, 501)
        for method in ("isotonic", "platt", "spline", "binned", "identity"):
            fit = fit_calibrator(method, *linear_sample, config=config)
            assert np.all(np.diff(predict(fit, grid)) >= -1e-12), method

    def test_auc_preserved_by_platt(self, linear_sample):
        """Test a strictly increasing map leaves the AUC unchanged."""
        scores, outcomes = linear_sample
        fit = fit_calibrator("platt", scores, outcomes)
        assert roc_auc(predict(fit, scores), outcomes) == pytest.approx(roc_auc(scores, outcomes), abs=1e-12)

    def test_auc_changes_only_through_induced_ties(self, rng):
        """Test flat calibrators move the AUC only by the pairs they tie."""
        scores = rng.integers(0, 40, 800) / 40.0
        outcomes = (rng.random(800) < scores).astype(float)
        for method in ("isotonic", "spline"):
            fit = fit_calibrator(method, scores, outcomes, config=CalibratorConfig(lam=1.0))
            calibrated = np.round(predict(fit, scores), 12)
            pos, neg = outcomes == 1, outcomes == 0
            s_diff = scores[pos][:, None] - scores[neg][None, :]
            tied = calibrated[pos][:, None] == calibrated[neg][None, :]
            induced = tied & (s_diff != 0)
            shift = np.sum(np.where(s_diff[induced] > 0, 0.5, -0.5)) / s_diff.size
            assert roc_auc(calibrated, outcomes) == pytest.approx(roc_auc(scores, outcomes) - shift, abs=1e-12), method

    def test_platt_independent_outcome_is_flat(self, rng):
        """Test Platt on an outcome unrelated to the score stays near the base rate."""
        scores = rng.random(3000)
        outcomes = (rng.random(3000) < 0.3).astype(float)
        fit = platt_fit(scores, outcomes)
        assert 0.0 <= fit.a < 0.6
        assert np.max(np.abs(predict(fit, np.linspace(0.0, 1.0, 11)) - outcomes.mean())) < 0.08

    def test_clip_levels(self):
        """Test clipped step calibrators stay inside [1/(n+1), n/(n+1)]."""
        scores, outcomes = [0.2, 0.4, 0.6, 0.8], [0.0, 0.0, 1.0, 1.0]
        config = CalibratorConfig(clip_levels=True, bins=2)
        iso = fit_calibrator("isotonic", scores, outcomes, config=config)
        assert np.allclose(iso.values, [0.2, 0.2, 0.8, 0.8])
        binned = fit_calibrator("binned", scores, outcomes, config=config)
        assert isinstance(binned, BinnedFit)
        assert np.allclose(binned.values, [0.2, 0.8])
        assert np.allclose(fit_calibrator("isotonic", scores, outcomes).values, [0.0, 0.0, 1.0, 1.0])

    def test_auc_matches_pair_count(self, rng):
        """Test midrank AUC equals the pairwise count with ties as one half."""
        scores = rng.integers(0, 5, 60) / 4.0
        outcomes = rng.integers(0, 2, 60)
        pos, neg = scores[outcomes == 1], scores[outcomes == 0]
        diff = pos[:, None] - neg[None, :]
        expected = (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size
        assert roc_auc(scores, outcomes) == pytest.approx(expected, abs=1e-12)

    def test_dict_round_trip(self, linear_sample):
        """Test rebuilt calibrators predict the same values."""
        grid = np.linspace(0.0, 1.0, 101)
        for method in ("isotonic", "platt", "spline", "binned", "identity"):
            fit = fit_calibrator(method, *linear_sample, config=CalibratorConfig(lam=1.0))
            rebuilt = calibrator_from_dict(calibrator_to_dict(fit))
            assert np.allclose(predict(rebuilt, grid), predict(fit, grid), atol=1e-12)

    def test_save_and_load(self, tmp_path, linear_sample):
        """Test calibrators survive a trip through a JSON file."""
        fit = fit_calibrator("spline", *linear_sample, config=CalibratorConfig(lam=1.0))
        path = tmp_path / "calibrator.json"
        save_calibrator(path, fit)
        assert np.allclose(load_calibrator(path).predict([0.25, 0.75]), fit.predict([0.25, 0.75]))

    def test_load_missing_file(self, tmp_path):
        """Test a missing calibrator file is an input error."""
        with pytest.raises(InputError):
            load_calibrator(tmp_path / "absent.json")

    def test_unknown_kind(self):
        """Test unknown calibrator kinds are rejected."""
        with pytest.raises(InputError):
            calibrator_from_dict({"kind": "beta"})
