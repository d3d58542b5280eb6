"""Tests for the paired tests and resampling inference."""

import itertools

import numpy as np
import pandas as pd
import pytest
from scipy.stats import rankdata

from src.scoredecomp.errors import InputError, PairingError
from src.scoredecomp.losses import LOGLOSS
from src.scoredecomp.pipeline import run_pipeline
from src.scoredecomp.stats_infer import (
    PipelineSpec,
    ReplicateTable,
    bootstrap_pipeline,
    holm_correct,
    paired_comparison,
    repeated_splits,
    split_data,
    summarize_table,
    wilcoxon_one_sided,
    win_rate,
)


def brute_force_p(deltas):
    """P(W+ <= observed) by enumerating every sign pattern of the nonzero deltas."""
    deltas = np.asarray(deltas, dtype=float)
    nonzero = deltas[deltas != 0.0]
    ranks = rankdata(np.abs(nonzero))
    observed = ranks[nonzero > 0].sum()
    hits = 0
    for signs in itertools.product((False, True), repeat=nonzero.size):
        if ranks[np.array(signs, dtype=bool)].sum() <= observed + 1e-9:
            hits += 1
    return hits / 2 ** nonzero.size


@pytest.fixture
def toy_table():
    """Three replicates: method a always beats the reference, b always loses."""
    rows = []
    for replicate in range(3):
        rows.append({"replicate": replicate, "seed": replicate, "method": "average", "loss": 1.0 + replicate})
        rows.append({"replicate": replicate, "seed": replicate, "method": "a", "loss": 0.0 + replicate})
        rows.append({"replicate": replicate, "seed": replicate, "method": "b", "loss": 2.0 + replicate})
    return ReplicateTable(pd.DataFrame(rows))


@pytest.fixture
def small_spec():
    """Tiny pipeline run with log-loss metrics only."""
    return PipelineSpec(n=300, rho=0.2, losses=(LOGLOSS,), seed=3)


class TestWilcoxon:
    """Test suite for the one-sided signed-rank test."""

    def test_all_negative(self):
        """Test five negative deltas give p = 1/32."""
        result = wilcoxon_one_sided([-1, -2, -3, -4, -5])
        assert result.p_value == pytest.approx(1 / 32, abs=1e-15)
        assert result.branch == "exact"
        assert result.statistic == 0.0

    def test_single_delta(self):
        """Test a single negative delta gives p = 1/2."""
        assert wilcoxon_one_sided([-1.0]).p_value == pytest.approx(0.5)

    def test_all_positive(self):
        """Test all-positive deltas give p = 1."""
        assert wilcoxon_one_sided([1.0, 2.0, 3.0]).p_value == pytest.approx(1.0)

    def test_exact_matches_enumeration(self):
        """Test the exact tail against brute force, ties and zeros included."""
        rng = np.random.default_rng(8)
        for n in range(1, 11):
            for _ in range(10):
                deltas = rng.integers(-3, 4, size=n).astype(float)
                if not np.any(deltas):
                    continue
                result = wilcoxon_one_sided(deltas, method="exact")
                assert result.p_value == pytest.approx(brute_force_p(deltas), abs=1e-12)

    def test_zeros_dropped(self):
        """Test zero deltas are removed before ranking."""
        result = wilcoxon_one_sided([0.0, -1.0, -2.0, 0.0])
        assert result.n_effective == 2
        assert result.p_value == pytest.approx(0.25)
        assert result.zero_handling == "dropped"

    def test_all_zero(self):
        """Test all-zero deltas give p = 1 and are flagged."""
        result = wilcoxon_one_sided([0.0, 0.0, 0.0])
        assert result.all_zero
        assert result.p_value == 1.0

    def test_normal_close_to_exact(self):
        """Test the normal branch tracks the exact one at n = 20."""
        rng = np.random.default_rng(12)
        for _ in range(20):
            deltas = rng.normal(loc=-0.3, size=20)
            exact = wilcoxon_one_sided(deltas, method="exact").p_value
            normal = wilcoxon_one_sided(deltas, method="normal").p_value
            assert abs(exact - normal) < 0.01

    def test_branch_switch(self):
        """Test auto uses the normal branch above 20 nonzero deltas."""
        assert wilcoxon_one_sided(-np.arange(1.0, 21.0)).branch == "exact"
        assert wilcoxon_one_sided(-np.arange(1.0, 22.0)).branch == "normal"

    def test_empty(self):
        """Test an empty delta vector is rejected."""
        with pytest.raises(InputError):
            wilcoxon_one_sided([])


class TestHolm:
    """Test suite for the Holm step-down correction."""

    def test_two_values(self):
        """Test (0.01, 0.04) adjusts to (0.02, 0.04)."""
        assert np.allclose(holm_correct([0.01, 0.04]), [0.02, 0.04])

    def test_equal_values(self):
        """Test three equal p-values all become 0.09."""
        assert np.allclose(holm_correct([0.03, 0.03, 0.03]), [0.09, 0.09, 0.09])

    def test_order_preserved(self):
        """Test adjusted values come back in input order and capped at one."""
        adjusted = holm_correct([0.5, 0.01, 0.2])
        assert np.allclose(adjusted, [0.5, 0.03, 0.4])
        assert np.all(holm_correct([0.6, 0.7]) <= 1.0)

    def test_bounds(self):
        """Test raw <= adjusted <= min(1, m * raw)."""
        pvals = np.random.default_rng(1).random(12)
        adjusted = holm_correct(pvals)
        assert np.all(adjusted >= pvals)
        assert np.all(adjusted <= np.minimum(1.0, 12 * pvals) + 1e-15)


class TestReplicateTable:
    """Test suite for the replicate table and its summaries."""

    def test_win_rate(self):
        """Test ties do not count as wins."""
        assert win_rate([-1.0, 0.0, 2.0, -3.0]) == pytest.approx(0.5)

    def test_missing_columns(self):
        """Test tables without key columns are rejected."""
        with pytest.raises(InputError):
            ReplicateTable(pd.DataFrame({"method": ["a"], "loss": [1.0]}))

    def test_summary(self, toy_table):
        """Test mean and sample sd per method."""
        summary = summarize_table(toy_table).set_index(["method", "metric"])
        assert summary.loc[("a", "loss"), "mean"] == pytest.approx(1.0)
        assert summary.loc[("a", "loss"), "sd"] == pytest.approx(1.0)
        assert not summary.loc[("a", "loss"), "sd_undefined"]

    def test_single_replicate_sd(self):
        """Test a single replicate reports sd 0 and flags it."""
        table = ReplicateTable(pd.DataFrame([{"replicate": 0, "seed": 0, "method": "a", "loss": 1.0}]))
        summary = summarize_table(table)
        assert summary["sd"].iloc[0] == 0.0
        assert summary["sd_undefined"].iloc[0]

    def test_csv_round_trip(self, toy_table, tmp_path):
        """Test the table survives a CSV round trip."""
        path = tmp_path / "replicates.csv"
        toy_table.to_csv(path)
        assert ReplicateTable.read_csv(path).frame.equals(toy_table.frame)


class TestPairedComparison:
    """Test suite for split-wise paired comparisons."""

    def test_toy_comparison(self, toy_table):
        """Test deltas, win rates and Holm-adjusted p-values."""
        result = paired_comparison(toy_table, reference="average").set_index("method")
        assert result.loc["a", "delta_mean"] == pytest.approx(-1.0)
        assert result.loc["a", "win_rate"] == 1.0
        assert result.loc["b", "win_rate"] == 0.0
        assert result.loc["a", "p_raw"] == pytest.approx(0.125)
        assert result.loc["a", "p_holm"] == pytest.approx(0.25)
        assert result.loc["b", "p_holm"] == pytest.approx(1.0)
        assert set(result["test"]) == {"exact"}

    def test_missing_reference(self, toy_table):
        """Test an absent reference method is an input error."""
        with pytest.raises(InputError):
            paired_comparison(toy_table, reference="glm")

    def test_mismatched_seeds(self, toy_table):
        """Test methods with different replicate seeds cannot be paired."""
        frame = toy_table.frame
        broken = frame[~((frame["method"] == "b") & (frame["seed"] == 2))]
        with pytest.raises(PairingError):
            paired_comparison(ReplicateTable(broken), reference="average")


class TestSplits:
    """Test suite for the seeded split helper."""

    def test_sizes(self):
        """Test thirds of nine rows are three each and disjoint."""
        splits = split_data(9, (1 / 3, 1 / 3, 1 / 3), seed=0)
        assert [s.size for s in splits] == [3, 3, 3]
        assert sorted(np.concatenate(splits).tolist()) == list(range(9))

    def test_deterministic(self):
        """Test the same seed gives the same split."""
        first = split_data(50, (0.5, 0.25, 0.25), seed=4)
        second = split_data(50, (0.5, 0.25, 0.25), seed=4)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_infeasible(self):
        """Test fractions above one and empty splits are rejected."""
        with pytest.raises(InputError):
            split_data(10, (0.5, 0.5, 0.5), seed=0)
        with pytest.raises(InputError):
            split_data(2, (1 / 3, 1 / 3, 1 / 3), seed=0)


class TestResampling:
    """Test suite for repeated splits and the pipeline bootstrap."""

    def test_repeated_splits(self, small_spec):
        """Test one row per (replicate, method) and reproducible results."""
        table, summary = repeated_splits(small_spec, replicates=3, base_seed=10)
        assert len(table) == 3
        assert len(table.frame) == 3 * 5
        assert sorted(table.frame["seed"].unique().tolist()) == [10, 11, 12]
        assert set(summary["metric"]) == set(small_spec.metric_names())
        again, _ = repeated_splits(small_spec, replicates=3, base_seed=10)
        pd.testing.assert_frame_equal(table.frame, again.frame)

    def test_bootstrap_modes(self, small_spec):
        """Test both modes share the calibration resample of each replicate."""
        calib_only = bootstrap_pipeline(small_spec, "calibration_only", replicates=5, seed=1)
        end_to_end = bootstrap_pipeline(small_spec, "end_to_end", replicates=5, seed=1)
        assert calib_only.requested == 5
        assert set(calib_only.summary.columns) >= {"method", "metric", "point", "lo", "hi"}
        assert np.all(calib_only.summary["lo"] <= calib_only.summary["hi"])
        # isotonic recalibration of s1 only sees the order of x1, which refitting keeps
        a = calib_only.replicates.set_index(["replicate", "method"])["logloss_recal"]
        b = end_to_end.replicates.set_index(["replicate", "method"])["logloss_recal"]
        shared = a.index.intersection(b.index)
        s1 = [key for key in shared if key[1] == "s1"]
        assert s1
        assert np.allclose(a.loc[s1].to_numpy(), b.loc[s1].to_numpy(), atol=1e-12)

    def test_bootstrap_deterministic(self, small_spec):
        """Test a rerun with the same seed reproduces the replicates."""
        first = bootstrap_pipeline(small_spec, "end_to_end", replicates=3, seed=2)
        second = bootstrap_pipeline(small_spec, "end_to_end", replicates=3, seed=2)
        pd.testing.assert_frame_equal(first.replicates, second.replicates)

    def test_bad_mode(self, small_spec):
        """Test unknown bootstrap modes are rejected."""
        with pytest.raises(InputError):
            bootstrap_pipeline(small_spec, "jackknife", replicates=3)


class TestPipelineProperties:
    """Test suite for pipeline behaviour at the default synthetic scale."""

    def test_recalibrated_logloss_not_clamped(self):
        """Test isotonic recalibration never sends a test row to the log-loss floor."""
        results = run_pipeline(PipelineSpec(seed=0))
        for method, metrics in results.items():
            assert metrics["logloss_recal_clamped"] == 0, method
            assert np.isfinite(metrics["logloss_recal"])
            assert metrics["logloss_recal"] < metrics["logloss_raw"] + 0.1, method

    def test_clamp_counts_reported_not_compared(self, small_spec):
        """Test clamp counts reach the bootstrap output but stay out of paired tests."""
        result = bootstrap_pipeline(small_spec, "calibration_only", replicates=3, seed=0)
        assert "logloss_recal_clamped" in set(result.summary["metric"])
        table, _ = repeated_splits(small_spec, replicates=3, base_seed=0)
        assert "logloss_recal_clamped" not in set(paired_comparison(table)["metric"])

    def test_end_to_end_intervals_are_wider(self):
        """Test refitting the base models widens the recalibrated log-loss intervals."""
        spec = PipelineSpec(n=2000, losses=(LOGLOSS,), seed=0)
        widths = {}
        for mode in ("calibration_only", "end_to_end"):
            summary = bootstrap_pipeline(spec, mode, replicates=200, seed=0).summary
            rows = summary[summary["metric"] == "logloss_recal"]
            widths[mode] = float((rows["hi"] - rows["lo"]).sum())
        assert widths["end_to_end"] >= widths["calibration_only"]

    def test_stacking_more_reliable_than_average(self):
        """Test stacking beats averaging on Brier reliability over repeated splits."""
        table, _ = repeated_splits(PipelineSpec(n=2000, seed=0), replicates=50, base_seed=0)
        comparison = paired_comparison(table, reference="average", metrics=["rel_brier"])
        stacking = comparison[comparison["method"] == "stacking"].iloc[0]
        assert stacking["delta_mean"] < 0.0
        assert stacking["win_rate"] >= 0.7
        assert stacking["p_holm"] < 0.05
