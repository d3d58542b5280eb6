"""CSV and JSON ingestion and emission."""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .decomp_est import ScoredSample
from .errors import InputError

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ("score", "outcome")
ORACLE_COLUMN = "oracle_q"
DIAGRAM_COLUMNS = ("bin", "mean_score", "emp_freq", "mass")


def _line(index):
    # header is line 1
    return int(index) + 2


def _check_range(frame, column, lo, hi, path):
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() | (values < lo) | (values > hi)
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        raise InputError(
            f"{path}: line {_line(first)}: {column} must be a number in [{lo}, {hi}], "
            f"got '{frame[column].iloc[first]}'"
        )
    return values.to_numpy(dtype=float)


def read_score_file(path):
    """Load a ``score,outcome[,oracle_q]`` CSV into a ScoredSample.

    Raises:
        InputError: missing file, wrong header, empty body or a bad row
            (the message names the offending line)
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as exc:
        raise InputError(f"score file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise InputError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        raise InputError(f"{path}: malformed CSV ({exc})") from exc
    header = tuple(c.strip() for c in frame.columns)
    if header not in (SCORE_COLUMNS, SCORE_COLUMNS + (ORACLE_COLUMN,)):
        raise InputError(f"{path}: header must be 'score,outcome' or 'score,outcome,oracle_q', got '{','.join(header)}'")
    frame.columns = header
    if frame.empty:
        raise InputError(f"{path}: no data rows")
    scores = _check_range(frame, "score", 0.0, 1.0, path)
    outcomes = _check_range(frame, "outcome", 0, 1, path)
    fractional = outcomes != np.round(outcomes)
    if fractional.any():
        first = int(np.flatnonzero(fractional)[0])
        raise InputError(f"{path}: line {_line(first)}: outcome must be 0 or 1")
    oracle = _check_range(frame, ORACLE_COLUMN, 0.0, 1.0, path) if ORACLE_COLUMN in header else None
    logger.debug("read %d rows from %s (oracle: %s)", len(frame), path, oracle is not None)
    return ScoredSample(scores=scores, outcomes=outcomes.astype(np.int64), oracle_q=oracle)


def write_score_file(path, sample):
    columns = {"score": sample.scores, "outcome": sample.outcomes}
    if sample.has_oracle:
        columns[ORACLE_COLUMN] = sample.oracle_q
    write_csv(path, pd.DataFrame(columns))


def diagram_frame(diagram):
    return pd.DataFrame(
        [(b.bin, b.mean_score, b.emp_freq, b.mass) for b in diagram], columns=list(DIAGRAM_COLUMNS)
    )


def write_csv(path, frame):
    """Write without the index; floats use the shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def json_default(value):
    """``json.dumps`` hook for numpy scalars and arrays."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(document):
    return json.dumps(document, indent=2, sort_keys=True, default=json_default)


def write_json(path, document):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(document) + "\n")
    return path
