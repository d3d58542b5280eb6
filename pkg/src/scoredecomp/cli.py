#!/usr/bin/env python3
"""scoredecomp command-line entry point.

Every subcommand prints one JSON result ``{"success": ..., "message": ...}``
on stdout, writes its CSV/JSON files under ``--out`` and returns an exit code:
0 success, 1 identity suite violation, 2 input or config error, 3 degenerate
data. Status lines go to stderr.
"""

import argparse
import logging
import sys

import numpy as np
import pandas as pd

from .config import (
    CALIBRATOR_CHOICES,
    LOSS_CHOICES,
    SURFACE_CHOICES,
    build_config,
    load_config_file,
    tracing_requested,
)
from .decomp_est import (
    bootstrap_report,
    cross_fit_calibrated,
    decompose_sample,
    empirical_conditional_mean,
    holdout_split,
    reliability_diagram,
)
from .errors import ConfigError, DegenerateDataError, ScoreDecompError
from .fileio import diagram_frame, dumps, read_score_file, write_csv, write_json
from .finite_world import conditional_law, counterexample_average, identity_suite, one_level_decompose
from .losses import losses_from_flag
from .pipeline import METHODS, PipelineSpec
from .recalib import (
    CalibratorConfig,
    canonical_method,
    fit_calibrator,
    load_calibrator,
    predict,
    save_calibrator,
)
from .stats_infer import MODES, bootstrap_pipeline, paired_comparison, repeated_splits
from .synthgen import boosting_demo, bandwidth_sweep, run_synth
from .tracing import get_tracer, setup_tracing

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-12

_COMMON_INPUTS = {
    "seed": {"type": "integer", "required": False, "description": "Master seed (default 0)"},
    "config": {"type": "string", "required": False, "description": "JSON config file; flags override it"},
    "out": {"type": "string", "required": False, "description": "Output directory (default .)"},
    "loss": {"type": "string", "required": False, "description": "brier, logloss or both"},
    "calibrator": {"type": "string", "required": False, "description": "isotonic, platt, spline or binned"},
    "folds": {"type": "integer", "required": False, "description": "Cross-fitting folds (default 5)"},
}


def _context(capability, description, inputs, outputs):
    merged = dict(_COMMON_INPUTS)
    merged.update(inputs)
    return {
        "capability": capability,
        "inputs": merged,
        "outputs": {"success": "boolean", "message": "string", "files": "array", **outputs},
        "description": description,
    }


def get_context(command):
    """Return a subcommand's capabilities for agent discovery."""
    contexts = {
        "decompose": _context(
            "decompose",
            "Reliability, grouping and irreducible terms of a score file, plus a reliability diagram",
            {
                "score_file": {"type": "string", "required": True, "description": "CSV score,outcome[,oracle_q]"},
                "holdout_fraction": {"type": "number", "required": False, "description": "Fit C on this fraction; not with calibrator_in or exact_calibrator"},
                "exact_calibrator": {"type": "boolean", "required": False, "description": "Use the exact C"},
                "bins": {"type": "integer", "required": False, "description": "Reliability diagram bins"},
                "bootstrap": {"type": "integer", "required": False, "description": "Bootstrap replicates for CIs"},
            },
            {"report": "object"},
        ),
        "synth": _context(
            "synth",
            "Recalibration experiment over a grid of copula correlations",
            {
                "rho": {"type": "array", "required": False, "description": "Correlation grid"},
                "n": {"type": "integer", "required": False, "description": "Rows per split"},
                "surface": {"type": "string", "required": False, "description": "main or appendix_sim"},
            },
            {"rows": "integer"},
        ),
        "counterexample": _context(
            "counterexample",
            "Two calibrated scores whose average is miscalibrated",
            {},
            {"table": "array"},
        ),
        "boost": _context(
            "boost",
            "Telescoping decomposition along a random refining filtration",
            {
                "depth": {"type": "integer", "required": False, "description": "Refinement stages"},
                "atoms": {"type": "integer", "required": False, "description": "Atoms in the space"},
                "trivial": {"type": "boolean", "required": False, "description": "Never refine"},
            },
            {"table": "array"},
        ),
        "robustness": _context(
            "robustness",
            "Repeated splits of the pipeline and paired comparison against a reference method",
            {
                "replicates": {"type": "integer", "required": False, "description": "Number of seeds"},
                "reference": {"type": "string", "required": False, "description": "Reference method"},
                "n": {"type": "integer", "required": False, "description": "Pooled sample size"},
            },
            {"summary": "array", "comparison": "array"},
        ),
        "bootstrap": _context(
            "bootstrap",
            "Percentile bootstrap of the pipeline metrics in calibration-only and end-to-end modes",
            {
                "replicates": {"type": "integer", "required": False, "description": "Bootstrap replicates"},
                "mode": {"type": "string", "required": False, "description": "calibration_only, end_to_end or both"},
            },
            {"modes": "object"},
        ),
        "identities": _context(
            "identities",
            "Check every exact decomposition identity on random finite spaces",
            {
                "n_spaces": {"type": "integer", "required": False, "description": "Random spaces"},
                "max_atoms": {"type": "integer", "required": False, "description": "Largest space"},
            },
            {"residuals": "object"},
        ),
        "bandwidth": _context(
            "bandwidth",
            "ICI, LCS and largest decrease of isotonic, unconstrained C2 and monotone spline maps across bandwidths and basis sizes",
            {
                "bandwidths": {"type": "array", "required": False, "description": "Kernel bandwidths"},
                "basis_sizes": {"type": "array", "required": False, "description": "Spline basis sizes"},
            },
            {"rows": "integer"},
        ),
    }
    return contexts[command]


def _status(message):
    print(message, file=sys.stderr)


def cmd_decompose(config):
    """Fit C out-of-sample, decompose, and write the report and diagram."""
    sample = read_score_file(config.score_file)
    if np.unique(sample.outcomes).size < 2:
        raise DegenerateDataError(f"{config.score_file}: outcomes contain a single class")
    losses = losses_from_flag(config.loss)
    method = canonical_method(config.calibrator)
    cal_config = CalibratorConfig(bins=config.bins, seed=config.seed)
    meta = {"seed": config.seed, "score_file": str(config.score_file)}
    if config.exact_calibrator and (config.calibrator_in or config.calibrator_out):
        raise ConfigError("exact_calibrator cannot be combined with calibrator_in or calibrator_out")
    if config.holdout_fraction > 0.0 and (config.exact_calibrator or config.calibrator_in):
        raise ConfigError("holdout_fraction only applies when the calibrator is fitted here")

    evaluation = sample
    fitted = None
    if config.exact_calibrator:
        # E[Y | S] = E[q | S]; the oracle gives the population value
        target = sample.oracle_q if sample.has_oracle else sample.outcomes
        calibrated = empirical_conditional_mean(sample.scores, target)
        meta.update(calibration="exact", calibrator="exact")
    elif config.calibrator_in:
        fitted = load_calibrator(config.calibrator_in)
        calibrated = np.asarray(predict(fitted, sample.scores), dtype=float)
        meta.update(calibration="loaded", calibrator=fitted.kind, calibrator_in=config.calibrator_in)
    elif config.holdout_fraction > 0.0:
        calib_idx, eval_idx = holdout_split(sample.n, config.holdout_fraction, config.seed)
        calib = sample.subset(calib_idx)
        evaluation = sample.subset(eval_idx)
        fitted = fit_calibrator(method, calib.scores, calib.outcomes, cal_config)
        calibrated = np.asarray(predict(fitted, evaluation.scores), dtype=float)
        meta.update(
            calibration="holdout", calibrator=method, n_calibration=int(calib.n), n_evaluation=int(evaluation.n)
        )
    else:
        calibrated = cross_fit_calibrated(sample, method, config.folds, config.seed, cal_config)
        meta.update(calibration="cross_fit", calibrator=method, folds=config.folds)
        if config.calibrator_out:
            fitted = fit_calibrator(method, sample.scores, sample.outcomes, cal_config)

    report = decompose_sample(evaluation, calibrated, losses, meta)
    if config.bootstrap:
        report.intervals = bootstrap_report(evaluation, calibrated, losses, config.bootstrap, config.seed)
        report.metadata["bootstrap_replicates"] = config.bootstrap

    bins = min(config.bins, evaluation.n)
    report.metadata["diagram_bins"] = bins
    files = [
        write_json(config.out_dir / "decomposition.json", report.to_dict()),
        write_csv(config.out_dir / "reliability_diagram.csv", diagram_frame(reliability_diagram(evaluation, bins))),
    ]
    if config.calibrator_out and fitted is not None:
        save_calibrator(config.calibrator_out, fitted)
        files.append(config.calibrator_out)
    _status(f"✅ Decomposed {evaluation.n} scores ({meta['calibration']})")
    return {"success": True, "message": "decomposition written", "report": report.to_dict(), "files": files}


def cmd_synth(config):
    frame = run_synth(
        config.rho,
        n=config.n,
        seed=config.seed,
        surface=config.surface,
        calibrator=config.calibrator,
        folds=config.folds,
        quantize_levels=config.quantize_levels,
        lcs_lambda=config.lcs_lambda,
        losses=losses_from_flag(config.loss),
    )
    path = write_csv(config.out_dir / "synth.csv", frame)
    _status(f"✅ Synthetic sweep over {len(config.rho)} rho values")
    return {"success": True, "message": "synthetic sweep written", "rows": len(frame), "files": [path]}


def cmd_counterexample(config):
    """Component and average reliability on the four-atom world."""
    world = counterexample_average()
    losses = losses_from_flag(config.loss)
    table = []
    for name in ("s1", "s2", "avg"):
        part = world.partitions[name]
        levels = world.predictors[name].probs[:, 1]
        means = conditional_law(world.space, part).probs[:, 1]
        reliability = {
            loss.name: one_level_decompose(world.space, part, world.predictors[name], loss).regret for loss in losses
        }
        for level, mean in zip(levels, means):
            row = {"score": name, "level": float(level), "conditional_mean": float(mean)}
            row.update({f"reliability_{k}": v for k, v in reliability.items()})
            table.append(row)
        _status(f"📊 {name}: " + ", ".join(f"E[Y|{name}={lv:g}]={m:g}" for lv, m in zip(levels, means)))
        _status("   reliability: " + ", ".join(f"{k}={v:.6g}" for k, v in reliability.items()))
    frame = pd.DataFrame(table)
    path = write_csv(config.out_dir / "counterexample.csv", frame)
    return {
        "success": True,
        "message": "two calibrated scores whose average is miscalibrated",
        "table": frame.to_dict("records"),
        "files": [path],
    }


def cmd_boost(config):
    result = boosting_demo(space_size=config.atoms, depth=config.depth, seed=config.seed, trivial=config.trivial)
    path = write_csv(config.out_dir / "boost.csv", result.table)
    risks = result.table["brier_risk"].to_numpy()
    _status(f"✅ {config.depth} boosting stages over {config.atoms} atoms")
    return {
        "success": True,
        "message": "telescoping decomposition written",
        "table": result.table.to_dict("records"),
        "brier_nonincreasing": bool(np.all(np.diff(risks) <= IDENTITY_TOL)),
        "files": [path],
    }


def _pipeline_spec(config):
    return PipelineSpec(
        n=config.n,
        rho=config.rho,
        surface=config.surface,
        calibrator=config.calibrator,
        losses=losses_from_flag(config.loss),
        seed=config.seed,
    )


def cmd_robustness(config):
    """Repeated splits plus paired Wilcoxon/Holm comparison against the reference."""
    if config.reference not in METHODS:
        raise ConfigError(f"reference must be one of {METHODS}, got '{config.reference}'")
    table, summary = repeated_splits(_pipeline_spec(config), config.replicates, config.seed)
    comparison = paired_comparison(table, config.reference)
    files = [
        write_csv(config.out_dir / "replicates.csv", table.frame),
        write_csv(config.out_dir / "comparison.csv", comparison),
        write_json(config.out_dir / "summary.json", summary.to_dict("records")),
    ]
    _status(f"✅ {config.replicates} replicates, reference '{config.reference}'")
    return {
        "success": True,
        "message": "robustness tables written",
        "summary": summary.to_dict("records"),
        "comparison": comparison.to_dict("records"),
        "files": files,
    }


def cmd_bootstrap(config):
    spec = _pipeline_spec(config)
    modes = MODES if config.mode == "both" else (config.mode,)
    files = []
    out = {}
    for mode in modes:
        result = bootstrap_pipeline(spec, mode, config.replicates, config.seed)
        files.append(write_csv(config.out_dir / f"bootstrap_{mode}.csv", result.summary))
        files.append(write_csv(config.out_dir / f"bootstrap_{mode}_replicates.csv", result.replicates))
        out[mode] = {
            "dropped": result.dropped,
            "requested": result.requested,
            "summary": result.summary.to_dict("records"),
        }
        _status(f"✅ bootstrap {mode}: {result.requested - result.dropped}/{result.requested} replicates kept")
    files.append(write_json(config.out_dir / "bootstrap.json", out))
    return {"success": True, "message": "bootstrap intervals written", "modes": out, "files": files}


def cmd_identities(config):
    residuals = identity_suite(config.n_spaces, config.seed, config.max_atoms)
    violations = sorted(name for name, value in residuals.items() if value >= IDENTITY_TOL)
    path = write_json(config.out_dir / "identities.json", residuals)
    for name, value in residuals.items():
        _status(f"{'✅' if value < IDENTITY_TOL else '❌'} {name}: {value:.3e}")
    if violations:
        return {
            "success": False,
            "message": f"identities violated beyond {IDENTITY_TOL:g}: {violations}",
            "residuals": residuals,
            "files": [path],
        }
    return {
        "success": True,
        "message": f"all identities hold on {config.n_spaces} spaces",
        "residuals": residuals,
        "files": [path],
    }


def cmd_bandwidth(config):
    frame = bandwidth_sweep(
        config.bandwidths,
        config.basis_sizes,
        n=config.n,
        seed=config.seed,
        rho=config.rho,
        surface=config.surface,
        folds=config.folds,
    )
    path = write_csv(config.out_dir / "bandwidth.csv", frame)
    _status(f"✅ Bandwidth study over {len(frame)} cells")
    return {"success": True, "message": "bandwidth study written", "rows": len(frame), "files": [path]}


COMMANDS = {
    "decompose": cmd_decompose,
    "synth": cmd_synth,
    "counterexample": cmd_counterexample,
    "boost": cmd_boost,
    "robustness": cmd_robustness,
    "bootstrap": cmd_bootstrap,
    "identities": cmd_identities,
    "bandwidth": cmd_bandwidth,
}


def _common_parser():
    # SUPPRESS keeps unset flags out of the namespace so file values survive
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--config", dest="config_file", help="JSON config file")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--loss", choices=LOSS_CHOICES, help="Loss functions to report")
    common.add_argument("--calibrator", choices=CALIBRATOR_CHOICES, help="Recalibration method")
    common.add_argument("--folds", type=int, help="Cross-fitting folds")
    common.add_argument("--trace", action="store_true", help="Send spans to Phoenix")
    common.add_argument("--context", action="store_true", help="Print capabilities as JSON and exit")
    common.add_argument("--verbose", action="store_true", help="Debug logging on stderr")
    return common


def _pipeline_flags(parser):
    parser.add_argument("--n", type=int, help="Pooled sample size")
    parser.add_argument("--rho", type=float, help="Copula correlation")
    parser.add_argument("--surface", choices=SURFACE_CHOICES, help="Outcome surface")
    parser.add_argument("--replicates", type=int, help="Number of replicates")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="scoredecomp",
        description="Proper-loss decompositions, recalibration and resampling inference",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    kw = {"parents": [common], "argument_default": argparse.SUPPRESS}

    decompose = sub.add_parser("decompose", help="Decompose a score file", **kw)
    decompose.add_argument("score_file", nargs="?", help="CSV with header score,outcome[,oracle_q]")
    decompose.add_argument("--holdout-fraction", type=float, help="Fit C on a held-out fraction")
    decompose.add_argument("--exact-calibrator", action="store_true", help="Use the exact C of the sample")
    decompose.add_argument("--bins", type=int, help="Reliability diagram bins")
    decompose.add_argument("--bootstrap", type=int, help="Bootstrap replicates for intervals")
    decompose.add_argument("--calibrator-in", help="Apply a saved calibrator instead of fitting")
    decompose.add_argument("--calibrator-out", help="Save the fitted calibrator as JSON")

    synth = sub.add_parser("synth", help="Recalibration sweep over rho", **kw)
    synth.add_argument("--rho", type=float, nargs="+", help="Correlation grid")
    synth.add_argument("--n", type=int, help="Rows per split")
    synth.add_argument("--surface", choices=SURFACE_CHOICES, help="Outcome surface")
    synth.add_argument("--quantize-levels", type=int, help="Levels of the quantized score")
    synth.add_argument("--lcs-lambda", type=float, help="Spline penalty for LCS")

    sub.add_parser("counterexample", help="Calibrated components, miscalibrated average", **kw)

    boost = sub.add_parser("boost", help="Telescoping decomposition along a filtration", **kw)
    boost.add_argument("--depth", type=int, help="Refinement stages")
    boost.add_argument("--atoms", type=int, help="Atoms in the random space")
    boost.add_argument("--trivial", action="store_true", help="Never refine")

    robustness = sub.add_parser("robustness", help="Repeated splits and paired comparison", **kw)
    _pipeline_flags(robustness)
    robustness.add_argument("--reference", choices=METHODS, help="Reference method")

    bootstrap = sub.add_parser("bootstrap", help="Pipeline bootstrap intervals", **kw)
    _pipeline_flags(bootstrap)
    bootstrap.add_argument("--mode", choices=MODES + ("both",), help="Resampling mode")

    identities = sub.add_parser("identities", help="Exact identity suite", **kw)
    identities.add_argument("--n-spaces", type=int, help="Random spaces")
    identities.add_argument("--max-atoms", type=int, help="Largest space")

    bandwidth = sub.add_parser("bandwidth", help="Spline bandwidth study", **kw)
    bandwidth.add_argument("--bandwidths", type=float, nargs="+", help="Kernel bandwidths")
    bandwidth.add_argument("--basis-sizes", type=int, nargs="+", help="Spline basis sizes")
    bandwidth.add_argument("--n", type=int, help="Rows per draw")
    bandwidth.add_argument("--surface", choices=SURFACE_CHOICES, help="Outcome surface")
    bandwidth.add_argument("--rho", type=float, help="Copula correlation")
    return parser


def _stringify_files(result):
    if "files" in result:
        result["files"] = [str(path) for path in result["files"]]
    return result


def run_command(command, flags):
    """Resolve the config for ``command`` and run it inside a span."""
    file_values = load_config_file(flags["config_file"]) if "config_file" in flags else {}
    config = build_config(command, file_values, flags)
    with get_tracer().start_as_current_span(f"cli.{command}", attributes={"seed": config.seed}):
        return COMMANDS[command](config)


def main(argv=None):
    """Parse arguments, run one subcommand, print its JSON result."""
    args = build_parser().parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    logging.basicConfig(
        level=logging.DEBUG if flags.get("verbose") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if flags.get("context"):
        print(dumps(get_context(command)))
        return 0
    if flags.get("trace") or tracing_requested():
        setup_tracing(project_name=f"scoredecomp-{command}")
    try:
        result = run_command(command, flags)
    except ScoreDecompError as exc:
        _status(f"❌ {exc}")
        print(dumps({"success": False, "message": str(exc), "error": type(exc).__name__}))
        return exc.exit_code
    print(dumps(_stringify_files(result)))
    return 0 if result["success"] else 1


if __name__ == "__main__":
    sys.exit(main())
