#!/usr/bin/env python3
"""Desk-scale demo - exact identities, the averaging counterexample and a small rho sweep."""

import os
import sys
import tempfile
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

# pylint: disable=wrong-import-position,import-error
from dotenv import load_dotenv
from src.scoredecomp.cli import main as cli_main
from src.scoredecomp.decomp_est import ScoredSample
from src.scoredecomp.fileio import write_score_file
from src.scoredecomp.finite_world import counterexample_average, identity_suite, one_level_decompose
from src.scoredecomp.losses import BRIER
from src.scoredecomp.synthgen import DGPConfig, boosting_demo, draw_splits, ensemble_average, fit_logistic, run_synth
from src.scoredecomp.tracing import setup_tracing
# pylint: enable=wrong-import-position,import-error

# Load configuration from .env file
load_dotenv()


def main():
    """Run the desk-scale demo."""
    if os.getenv("SCOREDECOMP_TRACE", "0") == "1":
        setup_tracing(project_name="scoredecomp-demo")
    print("🚀 scoredecomp desk demo")
    print("-" * 50)

    print("\n🧮 Exact identities on 20 random finite spaces:")
    for name, value in identity_suite(n_spaces=20).items():
        print(f"   {name:<22} max |residual| = {value:.2e}")

    print("\n⚖️  Averaging two calibrated scores:")
    world = counterexample_average()
    for name in ("s1", "s2", "avg"):
        rel = one_level_decompose(world.space, world.partitions[name], world.predictors[name], BRIER).regret
        print(f"   {name:<4} Brier reliability = {rel:.5f}")

    print("\n🌲 Boosting along a filtration:")
    print(boosting_demo(space_size=8, depth=3, seed=0).table.to_string(index=False))

    print("\n📈 Recalibration sweep (n=2000, three rho values):")
    frame = run_synth([-0.7, 0.0, 0.7], n=2000, seed=0)
    print(frame[["rho", "variant", "lcs_before", "lcs_after", "brier_rel_before", "brier_rel_after"]].to_string(index=False))

    print("\n📄 Decomposing an averaged score written to a score file:")
    splits = draw_splits(DGPConfig(rho=0.0, n=2000, seed=0))
    s1 = fit_logistic(splits["train"], ("x1",)).predict(splits["test"])
    s2 = fit_logistic(splits["train"], ("x2",)).predict(splits["test"])
    sample = ScoredSample(scores=ensemble_average(s1, s2), outcomes=splits["test"].y, oracle_q=splits["test"].q)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "average_scores.csv"
        write_score_file(path, sample)
        code = cli_main(["decompose", str(path), "--loss", "brier", "--out", str(Path(tmp) / "decomposition")])
    print(f"   decompose exited with {code}")


if __name__ == "__main__":
    main()
