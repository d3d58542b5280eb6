"""Run configuration: environment variables, JSON config files and flags.

Values resolve field by field as dataclass defaults, then the JSON file given
with ``--config``, then flags given explicitly on the command line.
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

# pylint: disable=import-error
from dotenv import load_dotenv
# pylint: enable=import-error

from .errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

LOSS_CHOICES = ("brier", "logloss", "both")
CALIBRATOR_CHOICES = ("isotonic", "platt", "spline", "binned")
SURFACE_CHOICES = ("main", "appendix_sim")
DEFAULT_RHO_GRID = [step / 10 for step in range(-9, 10)]


def get_thread_count():
    """Worker-thread cap from ``SCOREDECOMP_THREADS`` (default: CPU count)."""
    raw = os.getenv("SCOREDECOMP_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SCOREDECOMP_THREADS must be an integer, got '{raw}'") from exc
    if value < 1:
        raise ConfigError(f"SCOREDECOMP_THREADS must be >= 1, got {value}")
    return value


def tracing_requested():
    """True when ``SCOREDECOMP_TRACE`` is set to a truthy value."""
    return os.getenv("SCOREDECOMP_TRACE", "").strip().lower() in {"1", "true", "yes", "on"}


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class RunConfig:
    """Fields shared by every subcommand."""

    seed: int = 0
    loss: str = "both"
    calibrator: str = "isotonic"
    folds: int = 5
    out: str = "."

    def __post_init__(self):
        self.validate()

    def validate(self):
        _require(_is_int(self.seed) and self.seed >= 0, f"seed must be a nonnegative integer, got {self.seed!r}")
        _require(self.loss in LOSS_CHOICES, f"loss must be one of {LOSS_CHOICES}, got {self.loss!r}")
        _require(
            self.calibrator in CALIBRATOR_CHOICES,
            f"calibrator must be one of {CALIBRATOR_CHOICES}, got {self.calibrator!r}",
        )
        _require(_is_int(self.folds) and self.folds >= 2, f"folds must be an integer >= 2, got {self.folds!r}")
        _require(isinstance(self.out, str) and self.out, "out must be a directory path")

    @property
    def out_dir(self):
        return Path(self.out)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class DecomposeConfig(RunConfig):
    score_file: str = ""
    holdout_fraction: float = 0.0
    exact_calibrator: bool = False
    bins: int = 10
    bootstrap: int = 0
    calibrator_in: str = ""
    calibrator_out: str = ""

    def validate(self):
        super().validate()
        _require(self.score_file, "decompose needs a score file")
        _require(
            _is_number(self.holdout_fraction) and 0.0 <= self.holdout_fraction < 1.0,
            f"holdout_fraction must lie in [0, 1), got {self.holdout_fraction!r}",
        )
        _require(isinstance(self.exact_calibrator, bool), "exact_calibrator must be true or false")
        _require(_is_int(self.bins) and self.bins >= 1, f"bins must be an integer >= 1, got {self.bins!r}")
        _require(
            _is_int(self.bootstrap) and self.bootstrap >= 0,
            f"bootstrap must be a nonnegative integer, got {self.bootstrap!r}",
        )


@dataclass
class SynthConfig(RunConfig):
    rho: list = field(default_factory=lambda: list(DEFAULT_RHO_GRID))
    n: int = 10_000
    surface: str = "main"
    quantize_levels: int = 8
    lcs_lambda: float = 1.0

    def validate(self):
        super().validate()
        _require(isinstance(self.rho, list) and self.rho, "rho must be a nonempty list")
        for value in self.rho:
            _require(_is_number(value) and -1.0 < value < 1.0, f"rho values must lie in (-1, 1), got {value!r}")
        _require(_is_int(self.n) and self.n >= 10, f"n must be an integer >= 10, got {self.n!r}")
        _require(self.surface in SURFACE_CHOICES, f"surface must be one of {SURFACE_CHOICES}")
        _require(
            _is_int(self.quantize_levels) and self.quantize_levels >= 2,
            f"quantize_levels must be an integer >= 2, got {self.quantize_levels!r}",
        )
        _require(_is_number(self.lcs_lambda) and self.lcs_lambda >= 0, "lcs_lambda must be >= 0")


@dataclass
class CounterexampleConfig(RunConfig):
    pass


@dataclass
class BoostConfig(RunConfig):
    depth: int = 3
    atoms: int = 8
    trivial: bool = False

    def validate(self):
        super().validate()
        _require(_is_int(self.depth) and self.depth >= 1, f"depth must be an integer >= 1, got {self.depth!r}")
        _require(_is_int(self.atoms) and self.atoms >= 2, f"atoms must be an integer >= 2, got {self.atoms!r}")
        _require(isinstance(self.trivial, bool), "trivial must be true or false")


@dataclass
class PipelineRunConfig(RunConfig):
    """Shared fields of the commands that run the synthetic pipeline."""

    n: int = 2000
    rho: float = 0.0
    surface: str = "main"
    replicates: int = 50

    def validate(self):
        super().validate()
        _require(_is_int(self.n) and self.n >= 30, f"n must be an integer >= 30, got {self.n!r}")
        _require(_is_number(self.rho) and -1.0 < self.rho < 1.0, f"rho must lie in (-1, 1), got {self.rho!r}")
        _require(self.surface in SURFACE_CHOICES, f"surface must be one of {SURFACE_CHOICES}")
        _require(
            _is_int(self.replicates) and self.replicates >= 1,
            f"replicates must be an integer >= 1, got {self.replicates!r}",
        )


@dataclass
class RobustnessConfig(PipelineRunConfig):
    reference: str = "average"

    def validate(self):
        super().validate()
        _require(isinstance(self.reference, str) and self.reference, "reference must name a method")


@dataclass
class BootstrapConfig(PipelineRunConfig):
    replicates: int = 200
    mode: str = "both"

    def validate(self):
        super().validate()
        _require(self.replicates >= 2, "bootstrap needs at least 2 replicates")
        _require(
            self.mode in ("calibration_only", "end_to_end", "both"),
            f"mode must be calibration_only, end_to_end or both, got {self.mode!r}",
        )


@dataclass
class IdentitiesConfig(RunConfig):
    n_spaces: int = 100
    max_atoms: int = 12

    def validate(self):
        super().validate()
        _require(_is_int(self.n_spaces) and self.n_spaces >= 1, "n_spaces must be an integer >= 1")
        _require(_is_int(self.max_atoms) and self.max_atoms >= 2, "max_atoms must be an integer >= 2")


@dataclass
class BandwidthConfig(RunConfig):
    bandwidths: list = field(default_factory=lambda: [0.02, 0.04, 0.08, 0.16, 0.32])
    basis_sizes: list = field(default_factory=lambda: [8, 15, 25])
    n: int = 2000
    surface: str = "appendix_sim"
    rho: float = 0.0

    def validate(self):
        super().validate()
        _require(isinstance(self.bandwidths, list) and self.bandwidths, "bandwidths must be a nonempty list")
        for h in self.bandwidths:
            _require(_is_number(h) and h > 0, f"bandwidths must be positive, got {h!r}")
        _require(isinstance(self.basis_sizes, list) and self.basis_sizes, "basis_sizes must be a nonempty list")
        for k in self.basis_sizes:
            _require(_is_int(k) and k >= 4, f"basis sizes must be integers >= 4, got {k!r}")
        _require(_is_int(self.n) and self.n >= 50, f"n must be an integer >= 50, got {self.n!r}")
        _require(self.surface in SURFACE_CHOICES, f"surface must be one of {SURFACE_CHOICES}")
        _require(_is_number(self.rho) and -1.0 < self.rho < 1.0, f"rho must lie in (-1, 1), got {self.rho!r}")


COMMAND_CONFIGS = {
    "decompose": DecomposeConfig,
    "synth": SynthConfig,
    "counterexample": CounterexampleConfig,
    "boost": BoostConfig,
    "robustness": RobustnessConfig,
    "bootstrap": BootstrapConfig,
    "identities": IdentitiesConfig,
    "bandwidth": BandwidthConfig,
}


def load_config_file(path):
    """Read a JSON config file into a dict."""
    try:
        document = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return document


def build_config(command, file_values=None, flag_values=None):
    """Resolve a command's config from file values overridden by flag values.

    Unknown keys in the file are rejected; flag values that are not config
    fields (``--trace``, ``--context`` and the like) are ignored.
    """
    try:
        config_cls = COMMAND_CONFIGS[command]
    except KeyError as exc:
        raise ConfigError(f"unknown command '{command}'") from exc
    known = {f.name for f in fields(config_cls)}
    file_values = dict(file_values or {})
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    values = dict(file_values)
    values.update({k: v for k, v in (flag_values or {}).items() if k in known})
    logger.debug("resolved %s config: %s", command, values)
    return config_cls(**values)
