"""Proper losses on finite label sets.

Every function accepts either a ``ProbVector`` or an array whose last axis
holds probability vectors, so the same code scores one prediction or a whole
table of them. Entropies and divergences are in nats.
"""

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InputError, ScoreDecompWarning

logger = logging.getLogger(__name__)

SUM_TOL = 1e-12
NEGATIVE_TOL = 1e-12
DEFAULT_CLAMP = 1e-12
LOSS_UNITS = "nats"


class LossKind(str, enum.Enum):
    """Supported proper losses."""

    BRIER = "brier"
    LOGLOSS = "logloss"


@dataclass(frozen=True)
class ProperLoss:
    """A strictly proper loss.

    Attributes:
        kind: Brier or log-loss
        clamp_epsilon: probability floor applied before taking logarithms
    """

    kind: LossKind
    clamp_epsilon: float = DEFAULT_CLAMP

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not self.clamp_epsilon > 0:
            raise InputError(f"clamp_epsilon must be > 0, got {self.clamp_epsilon}")

    @property
    def name(self):
        return self.kind.value


BRIER = ProperLoss(LossKind.BRIER)
LOGLOSS = ProperLoss(LossKind.LOGLOSS)


def get_loss(name):
    """Look up a loss by its flag name (``brier`` or ``logloss``)."""
    try:
        return ProperLoss(LossKind(name))
    except ValueError as exc:
        raise InputError(f"Unknown loss '{name}' (expected brier or logloss)") from exc


def losses_from_flag(flag):
    """Expand the ``--loss`` flag value into a tuple of losses."""
    if flag == "both":
        return (BRIER, LOGLOSS)
    return (get_loss(flag),)


def validate_probs(probs):
    """Return ``probs`` as a float array after checking it lies on the simplex.

    The last axis indexes labels and must have length at least 2.
    """
    arr = np.asarray(probs, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise DimensionMismatchError(
            f"probability vectors need at least 2 labels, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError("probability vectors must be finite")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InputError("probability coordinates must lie in [0, 1]")
    gap = np.max(np.abs(arr.sum(axis=-1) - 1.0))
    if gap > SUM_TOL:
        raise InputError(f"probability vectors must sum to 1 (max gap {gap:.3g})")
    return arr


class ProbVector:
    """A point of the probability simplex over K >= 2 labels."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        arr = np.array(validate_probs(probs), dtype=float)
        if arr.ndim != 1:
            raise DimensionMismatchError(
                f"ProbVector takes a single vector, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        self.probs = arr

    @classmethod
    def onehot(cls, label, n_labels):
        vec = np.zeros(n_labels)
        vec[_check_label(label, n_labels)] = 1.0
        return cls(vec)

    @property
    def n_labels(self):
        return self.probs.shape[0]

    def __len__(self):
        return self.n_labels

    def __array__(self, dtype=None, copy=None):
        return np.array(self.probs, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, ProbVector):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"ProbVector({self.probs.tolist()})"


def bernoulli(p):
    """Binary ProbVector with P(label 1) = p."""
    return ProbVector([1.0 - float(p), float(p)])


def binary_probs(p):
    """Stack positive-class probabilities into (..., 2) simplex points."""
    p = np.asarray(p, dtype=float)
    return np.stack([1.0 - p, p], axis=-1)


def _as_probs(x):
    if isinstance(x, ProbVector):
        return x.probs
    return validate_probs(x)


def _check_label(label, n_labels):
    label = int(label)
    if not 0 <= label < n_labels:
        raise DimensionMismatchError(f"label {label} outside 0..{n_labels - 1}")
    return label


def _check_pair(p, q):
    if p.shape[-1] != q.shape[-1]:
        raise DimensionMismatchError(
            f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]} labels"
        )
    try:
        np.broadcast_shapes(p.shape, q.shape)
    except ValueError as exc:
        raise DimensionMismatchError(str(exc)) from exc


def _finish(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return float(values)
    return values


def _brier_scale(n_labels):
    # binary Brier is reported in its scalar form (p1 - y)^2
    return 0.5 if n_labels == 2 else 1.0


def _loss_table(loss, p):
    """Pointwise loss against every label: shape (..., K)."""
    n_labels = p.shape[-1]
    if loss.kind is LossKind.BRIER:
        if n_labels == 2:
            p1 = p[..., 1:2]
            return np.concatenate([p1 ** 2, (1.0 - p1) ** 2], axis=-1)
        sq_norm = np.sum(p * p, axis=-1, keepdims=True)
        return sq_norm - 2.0 * p + 1.0
    return -np.log(np.maximum(p, loss.clamp_epsilon))


def pointwise_loss(loss, p, y):
    """Loss of prediction ``p`` when label ``y`` occurs.

    Brier is the squared distance to onehot(y) ((p1 - y)^2 for two labels);
    log-loss is -log p_y with p_y floored at ``loss.clamp_epsilon``.
    """
    p = _as_probs(p)
    n_labels = p.shape[-1]
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise InputError("outcomes must be integer labels")
        y = y.astype(int)
    if np.any(y < 0) or np.any(y >= n_labels):
        raise DimensionMismatchError(f"labels must lie in 0..{n_labels - 1}")
    try:
        shape = np.broadcast_shapes(p.shape[:-1], y.shape)
    except ValueError as exc:
        raise DimensionMismatchError(str(exc)) from exc
    p = np.broadcast_to(p, shape + (n_labels,))
    y = np.broadcast_to(y, shape)
    table = _loss_table(loss, p)
    return _finish(np.take_along_axis(table, y[..., None], axis=-1)[..., 0])


def conditional_risk(loss, p, q):
    """Expected loss L(p, q) = sum_y q_y loss(p, y)."""
    p, q = _as_probs(p), _as_probs(q)
    _check_pair(p, q)
    return _finish(np.sum(q * _loss_table(loss, p), axis=-1))


def entropy(loss, q):
    """Generalized entropy E(q) = L(q, q)."""
    return conditional_risk(loss, q, q)


def divergence(loss, p, q):
    """Regret d(p, q) = L(p, q) - E(q), clamped at zero.

    Brier gives the (scaled) squared distance, log-loss gives KL(q || p).
    Residue below -1e-12 is reported with a warning before clamping.
    """
    p, q = _as_probs(p), _as_probs(q)
    _check_pair(p, q)
    if loss.kind is LossKind.BRIER:
        values = _brier_scale(p.shape[-1]) * np.sum((p - q) ** 2, axis=-1)
    else:
        eps = loss.clamp_epsilon
        values = np.sum(
            q * (np.log(np.maximum(q, eps)) - np.log(np.maximum(p, eps))), axis=-1
        )
    values = np.asarray(values, dtype=float)
    worst = float(np.min(values)) if values.size else 0.0
    if worst < -NEGATIVE_TOL:
        warnings.warn(
            f"{loss.name} divergence of {worst:.3g} clamped to 0",
            ScoreDecompWarning,
            stacklevel=2,
        )
    return _finish(np.maximum(values, 0.0))


def clamped_count(loss, p, y):
    """Number of predictions whose realized-label probability hits the log floor."""
    if loss.kind is not LossKind.LOGLOSS:
        return 0
    p = _as_probs(p)
    y = np.broadcast_to(np.asarray(y, dtype=int), p.shape[:-1])
    p_y = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    return int(np.sum(p_y < loss.clamp_epsilon))


def max_entropy(loss, n_labels=2):
    """Largest generalized entropy, attained at the uniform distribution."""
    return entropy(loss, np.full(n_labels, 1.0 / n_labels))
