"""Exception and warning types shared across scoredecomp."""


class ScoreDecompError(Exception):
    """Base class for all scoredecomp errors."""

    exit_code = 1


class InputError(ScoreDecompError, ValueError):
    """Malformed input, invalid argument or inconsistent configuration."""

    exit_code = 2


class DimensionMismatchError(InputError):
    """Probability vectors, outcomes or predictors of incompatible shapes."""


class NonNestedPartitionError(InputError):
    """Partitions that were required to be nested are not."""


class ConfigError(InputError):
    """Invalid configuration file, flag or environment variable."""


class PairingError(InputError):
    """Replicates of two methods cannot be paired split-wise."""


class DegenerateDataError(ScoreDecompError):
    """Data without both classes, or any input that makes an estimator undefined."""

    exit_code = 3


class ScoreDecompWarning(UserWarning):
    """Numerical condition that was handled but should be visible to the caller."""
