"""scoredecomp - Proper-loss decompositions of probabilistic scores."""

__version__ = "0.1.0"

from .decomp_est import DecompositionReport, ScoredSample, decompose_sample
from .errors import DegenerateDataError, InputError, ScoreDecompError, ScoreDecompWarning
from .finite_world import FiniteSpace, Partition, chain_decompose
from .losses import BRIER, LOGLOSS, ProperLoss, divergence, entropy
from .recalib import fit_calibrator, predict
from .tracing import setup_tracing

__all__ = [
    "BRIER",
    "DecompositionReport",
    "DegenerateDataError",
    "FiniteSpace",
    "InputError",
    "LOGLOSS",
    "Partition",
    "ProperLoss",
    "ScoreDecompError",
    "ScoreDecompWarning",
    "ScoredSample",
    "chain_decompose",
    "decompose_sample",
    "divergence",
    "entropy",
    "fit_calibrator",
    "predict",
    "setup_tracing",
]
