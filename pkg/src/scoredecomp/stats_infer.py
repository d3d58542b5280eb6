"""Resampling inference and paired tests for pipeline metrics."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr
from scipy.stats import rankdata

from .config import get_thread_count
from .errors import DegenerateDataError, InputError, PairingError
from .pipeline import (
    PipelineSpec,
    draw_pipeline_data,
    evaluate_methods,
    fit_base_models,
    run_pipeline,
    split_data,
)
from .synthgen import make_rng
from .tracing import get_tracer

logger = logging.getLogger(__name__)

__all__ = [
    "BootstrapResult",
    "PipelineSpec",
    "ReplicateTable",
    "WilcoxonResult",
    "bootstrap_pipeline",
    "holm_correct",
    "paired_comparison",
    "repeated_splits",
    "split_data",
    "summarize_table",
    "wilcoxon_one_sided",
    "win_rate",
]

EXACT_MAX_N = 20
BOOT_TRAIN_STREAM = 31
BOOT_CALIB_STREAM = 32
MODES = ("calibration_only", "end_to_end")
# columns that count events rather than measure a loss
COUNT_SUFFIX = "_clamped"


@dataclass(frozen=True)
class WilcoxonResult:
    """One-sided signed-rank test of H1: deltas tend to be negative.

    ``statistic`` is W+, the rank sum of positive deltas; ``branch`` is
    ``exact``, ``normal`` or ``all_zero``.
    """

    p_value: float
    statistic: float
    n_effective: int
    branch: str
    zero_handling: str = "dropped"

    @property
    def all_zero(self):
        return self.branch == "all_zero"


def _exact_lower_tail(ranks, statistic):
    """P(W+ <= statistic) under the null, by counting sign patterns on doubled ranks."""
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts = counts + shifted
    cutoff = int(np.rint(2.0 * statistic))
    return float(counts[: cutoff + 1].sum()) / float(2 ** doubled.size)


def _normal_lower_tail(ranks, statistic):
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes ** 3 - tie_sizes) / 48.0
    if variance <= 0:
        return 1.0
    return float(ndtr((statistic - mean + 0.5) / np.sqrt(variance)))


def wilcoxon_one_sided(deltas, method="auto"):
    """Signed-rank test that ``deltas`` (method - reference) are shifted below 0.

    Zeros are dropped and tied magnitudes get midranks. The exact null
    distribution is used for up to 20 nonzero deltas unless ``method`` forces
    ``exact`` or ``normal``.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise InputError("Wilcoxon test needs at least one delta")
    nonzero = deltas[deltas != 0.0]
    if nonzero.size == 0:
        return WilcoxonResult(p_value=1.0, statistic=0.0, n_effective=0, branch="all_zero")
    ranks = rankdata(np.abs(nonzero), method="average")
    statistic = float(ranks[nonzero > 0].sum())
    if method not in ("auto", "exact", "normal"):
        raise InputError(f"method must be auto, exact or normal, got '{method}'")
    use_exact = method == "exact" or (method == "auto" and nonzero.size <= EXACT_MAX_N)
    if use_exact:
        p_value, branch = _exact_lower_tail(ranks, statistic), "exact"
    else:
        p_value, branch = _normal_lower_tail(ranks, statistic), "normal"
    return WilcoxonResult(
        p_value=min(1.0, p_value), statistic=statistic, n_effective=int(nonzero.size), branch=branch
    )


def holm_correct(pvals):
    """Holm step-down adjusted p-values, in the input order."""
    pvals = np.asarray(pvals, dtype=float)
    if pvals.size == 0:
        raise InputError("Holm correction needs at least one p-value")
    m = pvals.size
    order = np.argsort(pvals, kind="stable")
    stepped = np.minimum(1.0, (m - np.arange(m)) * pvals[order])
    adjusted = np.empty(m)
    adjusted[order] = np.maximum.accumulate(stepped)
    return adjusted


def win_rate(deltas):
    """Fraction of strictly negative deltas."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise InputError("win rate needs at least one delta")
    return float(np.mean(deltas < 0.0))


class ReplicateTable:
    """Long table with one row per (replicate, method) and a column per metric."""

    KEYS = ("replicate", "seed", "method")

    def __init__(self, frame):
        missing = [k for k in self.KEYS if k not in frame.columns]
        if missing:
            raise InputError(f"replicate table is missing columns {missing}")
        if frame.empty:
            raise InputError("replicate table has no rows")
        if frame.isna().any().any():
            raise InputError("replicate table has missing cells")
        self.frame = frame.reset_index(drop=True)

    @property
    def methods(self):
        return list(dict.fromkeys(self.frame["method"]))

    @property
    def metrics(self):
        return [c for c in self.frame.columns if c not in self.KEYS]

    def for_method(self, method):
        return self.frame[self.frame["method"] == method].reset_index(drop=True)

    def __len__(self):
        return int(self.frame["replicate"].nunique())

    def to_csv(self, path):
        self.frame.to_csv(path, index=False)

    @classmethod
    def read_csv(cls, path):
        return cls(pd.read_csv(path))


def _rows(replicate, seed, results):
    return [{"replicate": replicate, "seed": seed, "method": m, **metrics} for m, metrics in results.items()]


def summarize_table(table):
    """Mean and sample sd per (method, metric); sd is 0 and flagged when R = 1."""
    records = []
    for method in table.methods:
        rows = table.for_method(method)
        for metric in table.metrics:
            values = rows[metric].to_numpy(dtype=float)
            single = values.size < 2
            records.append(
                {
                    "method": method,
                    "metric": metric,
                    "mean": float(values.mean()),
                    "sd": 0.0 if single else float(values.std(ddof=1)),
                    "n": int(values.size),
                    "sd_undefined": single,
                }
            )
    return pd.DataFrame(records)


def repeated_splits(spec, replicates, base_seed=0):
    """Rerun the whole pipeline with seeds base_seed, base_seed + 1, ...

    Returns:
        (ReplicateTable, summary DataFrame)
    """
    if replicates < 1:
        raise InputError("repeated splits need at least one replicate")

    def run(replicate):
        seed = base_seed + replicate
        with get_tracer().start_as_current_span(
            "robustness.replicate", attributes={"replicate": replicate, "seed": seed}
        ):
            return _rows(replicate, seed, run_pipeline(spec, seed))

    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        results = list(pool.map(run, range(replicates)))
    table = ReplicateTable(pd.DataFrame([row for rows in results for row in rows]))
    return table, summarize_table(table)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    mode: str
    summary: pd.DataFrame
    replicates: pd.DataFrame
    point: dict
    dropped: int
    requested: int


def _percentile_summary(frame, point, level):
    tail = 100.0 * (1.0 - level) / 2.0
    records = []
    metrics = [c for c in frame.columns if c not in ReplicateTable.KEYS]
    for method in dict.fromkeys(frame["method"]):
        rows = frame[frame["method"] == method]
        for metric in metrics:
            values = rows[metric].to_numpy(dtype=float)
            records.append(
                {
                    "method": method,
                    "metric": metric,
                    "point": point[method][metric],
                    "mean": float(values.mean()),
                    "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
                    "lo": float(np.percentile(values, tail)),
                    "hi": float(np.percentile(values, 100.0 - tail)),
                }
            )
    return pd.DataFrame(records)


def _resample(dataset, rng):
    return dataset.subset(rng.integers(0, len(dataset), size=len(dataset)))


def bootstrap_pipeline(spec, mode, replicates, seed=0, level=0.95):
    """Percentile bootstrap of the pipeline metrics on a fixed test split.

    ``calibration_only`` resamples the calibration split and keeps the base
    models fitted on the original training split; ``end_to_end`` also
    resamples the training split and refits everything. Both modes draw the
    calibration resample of replicate r from the same stream. Replicates
    whose resample leaves a single class are dropped and counted.
    """
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got '{mode}'")
    if replicates < 2:
        raise InputError("bootstrap needs at least 2 replicates")
    train, calib, test = draw_pipeline_data(spec, spec.seed)
    base_models = fit_base_models(train)
    point = evaluate_methods(spec, base_models, calib, test)

    def run(replicate):
        with get_tracer().start_as_current_span(
            "bootstrap.replicate", attributes={"replicate": replicate, "mode": mode}
        ):
            calib_r = _resample(calib, make_rng(seed, BOOT_CALIB_STREAM, replicate))
            try:
                if mode == "end_to_end":
                    train_r = _resample(train, make_rng(seed, BOOT_TRAIN_STREAM, replicate))
                    models = fit_base_models(train_r)
                else:
                    models = base_models
                return _rows(replicate, seed, evaluate_methods(spec, models, calib_r, test))
            except DegenerateDataError as exc:
                logger.debug("bootstrap replicate %d dropped: %s", replicate, exc)
                return None

    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        results = list(pool.map(run, range(replicates)))
    kept = [rows for rows in results if rows is not None]
    dropped = replicates - len(kept)
    if len(kept) < 2:
        raise DegenerateDataError(f"only {len(kept)} of {replicates} bootstrap replicates were usable")
    if dropped:
        logger.info("bootstrap (%s): dropped %d degenerate replicates", mode, dropped)
    frame = pd.DataFrame([row for rows in kept for row in rows])
    return BootstrapResult(
        mode=mode,
        summary=_percentile_summary(frame, point, level),
        replicates=frame,
        point=point,
        dropped=dropped,
        requested=replicates,
    )


def paired_comparison(table, reference="average", metrics=None):
    """Split-wise deltas (method - reference) with win rate, Wilcoxon and Holm.

    Holm runs across methods within each metric. By default every metric
    column except the clamp counts is compared.

    Raises:
        InputError: reference method absent
        PairingError: a method's replicate seeds differ from the reference's
    """
    if reference not in table.methods:
        raise InputError(f"reference method '{reference}' is not in the table")
    metrics = list(metrics or [m for m in table.metrics if not m.endswith(COUNT_SUFFIX)])
    ref = table.for_method(reference).set_index("seed")
    if ref.index.has_duplicates:
        raise PairingError(f"reference '{reference}' repeats a seed")
    others = [m for m in table.methods if m != reference]
    aligned = {}
    for method in others:
        rows = table.for_method(method).set_index("seed")
        if rows.index.has_duplicates or set(rows.index) != set(ref.index):
            raise PairingError(f"replicate seeds of '{method}' do not match '{reference}'")
        aligned[method] = rows.loc[ref.index]
    records = []
    for metric in metrics:
        block = []
        for method in others:
            deltas = (aligned[method][metric] - ref[metric]).to_numpy(dtype=float)
            test = wilcoxon_one_sided(deltas)
            block.append(
                {
                    "metric": metric,
                    "method": method,
                    "reference": reference,
                    "delta_mean": float(deltas.mean()),
                    "delta_sd": float(deltas.std(ddof=1)) if deltas.size > 1 else 0.0,
                    "win_rate": win_rate(deltas),
                    "p_raw": test.p_value,
                    "n_effective": test.n_effective,
                    "test": test.branch,
                }
            )
        if block:
            adjusted = holm_correct([row["p_raw"] for row in block])
            for row, p_holm in zip(block, adjusted):
                row["p_holm"] = float(p_holm)
        records.extend(block)
    columns = ["metric", "method", "reference", "delta_mean", "delta_sd", "win_rate",
               "p_raw", "p_holm", "n_effective", "test"]
    return pd.DataFrame(records, columns=columns)
