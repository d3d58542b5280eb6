"""Exact finite probability spaces with partitions as information levels.

Every sub-sigma-algebra of a finite space is generated by a partition of its
atoms, so conditional laws, decompositions and information quantities are
computed here exactly. These routines are the oracle the sample estimators
are checked against.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from .errors import (
    DimensionMismatchError,
    InputError,
    NonNestedPartitionError,
)
from .losses import (
    BRIER,
    LOGLOSS,
    SUM_TOL,
    bernoulli,
    divergence,
    entropy,
    pointwise_loss,
    validate_probs,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """Atoms with positive probabilities and an atom-level conditional law.

    Attributes:
        atom_probs: P(omega) for each atom, shape (n,)
        chance: P(Y = . | atom), shape (n, K)
    """

    atom_probs: np.ndarray
    chance: np.ndarray

    def __post_init__(self):
        probs = np.array(self.atom_probs, dtype=float)
        chance = np.array(self.chance, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InputError("atom_probs must be a nonempty vector")
        if np.any(probs <= 0.0):
            raise InputError("atom probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise InputError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        if chance.ndim != 2 or chance.shape[0] != probs.size:
            raise DimensionMismatchError(
                f"chance must have shape ({probs.size}, K), got {chance.shape}"
            )
        validate_probs(chance)
        probs.setflags(write=False)
        chance.setflags(write=False)
        object.__setattr__(self, "atom_probs", probs)
        object.__setattr__(self, "chance", chance)

    @property
    def n_atoms(self):
        return self.atom_probs.shape[0]

    @property
    def n_labels(self):
        return self.chance.shape[1]

    def expect(self, values):
        """E[V] for an atom-level random variable V."""
        return float(np.dot(self.atom_probs, np.asarray(values, dtype=float)))

    def label_marginal(self):
        """E[onehot(Y)], computed from the joint table."""
        return self.atom_probs @ self.chance


@dataclass(frozen=True, eq=False)
class Partition:
    """A partition of the atoms, given as a block index per atom.

    Blocks are numbered 0..block_count-1 and none is empty. Two partitions
    compare equal when they split the atoms the same way.
    """

    block_of_atom: np.ndarray

    def __post_init__(self):
        blocks = np.array(self.block_of_atom)
        if blocks.ndim != 1 or blocks.size == 0:
            raise InputError("a partition needs a block index for every atom")
        if not np.issubdtype(blocks.dtype, np.integer):
            if np.any(blocks != np.round(blocks)):
                raise InputError("block indices must be integers")
            blocks = blocks.astype(int)
        if blocks.min() != 0 or np.any(np.bincount(blocks) == 0):
            raise InputError("blocks must be nonempty and numbered contiguously from 0")
        blocks = blocks.astype(np.int64)
        blocks.setflags(write=False)
        object.__setattr__(self, "block_of_atom", blocks)

    @classmethod
    def trivial(cls, n_atoms):
        return cls(np.zeros(n_atoms, dtype=int))

    @classmethod
    def discrete(cls, n_atoms):
        return cls(np.arange(n_atoms))

    @classmethod
    def from_labels(cls, labels):
        """Partition whose blocks are the level sets of ``labels``."""
        _, inverse = np.unique(np.asarray(labels), return_inverse=True)
        return cls(inverse.reshape(-1))

    @property
    def n_atoms(self):
        return self.block_of_atom.shape[0]

    @property
    def block_count(self):
        return int(self.block_of_atom.max()) + 1

    def is_coarser_than(self, finer):
        """True when no block of ``finer`` straddles two blocks of ``self``."""
        if finer.n_atoms != self.n_atoms:
            return False
        first_atom = np.zeros(finer.block_count, dtype=np.int64)
        first_atom[finer.block_of_atom[::-1]] = np.arange(self.n_atoms)[::-1]
        coarse_of_fine = self.block_of_atom[first_atom]
        return bool(
            np.array_equal(coarse_of_fine[finer.block_of_atom], self.block_of_atom)
        )

    def common_refinement(self, other):
        if other.n_atoms != self.n_atoms:
            raise DimensionMismatchError("partitions over different atom sets")
        pairs = self.block_of_atom * other.block_count + other.block_of_atom
        return Partition.from_labels(pairs)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.is_coarser_than(other) and other.is_coarser_than(self)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BlockPredictor:
    """One prediction per block of a partition."""

    partition: Partition
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(validate_probs(self.probs), dtype=float)
        if probs.ndim != 2 or probs.shape[0] != self.partition.block_count:
            raise DimensionMismatchError(
                f"predictor has {probs.shape[0] if probs.ndim == 2 else 0} rows "
                f"for a partition with {self.partition.block_count} blocks"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def constant(cls, partition, probs):
        row = np.asarray(probs, dtype=float)
        return cls(partition, np.tile(row, (partition.block_count, 1)))

    @property
    def n_labels(self):
        return self.probs.shape[1]

    def at_atoms(self):
        return self.probs[self.partition.block_of_atom]


@dataclass(frozen=True, eq=False)
class LabeledWorld:
    """A space together with named partitions and predictors."""

    space: FiniteSpace
    partitions: dict = field(default_factory=dict)
    predictors: dict = field(default_factory=dict)


def _check_partition(space, partition):
    if partition.n_atoms != space.n_atoms:
        raise DimensionMismatchError(
            f"partition over {partition.n_atoms} atoms, space has {space.n_atoms}"
        )


def _check_nested(coarse, fine, what="partitions"):
    if not coarse.is_coarser_than(fine):
        raise NonNestedPartitionError(f"{what} are not nested coarse to fine")


def _check_predictor(space, predictor, partition):
    """The predictor must match the space and be measurable at ``partition``."""
    _check_partition(space, predictor.partition)
    if predictor.n_labels != space.n_labels:
        raise DimensionMismatchError(
            f"predictor has {predictor.n_labels} labels, space has {space.n_labels}"
        )
    if not predictor.partition.is_coarser_than(partition):
        raise DimensionMismatchError(
            "predictor is not declared against the given information level"
        )


def conditional_law(space, partition):
    """Q_A = P(Y in . | A) as one ProbVector per block of ``partition``."""
    _check_partition(space, partition)
    blocks = partition.block_of_atom
    count = partition.block_count
    mass = np.bincount(blocks, weights=space.atom_probs, minlength=count)
    joint = np.stack(
        [
            np.bincount(blocks, weights=space.atom_probs * space.chance[:, k], minlength=count)
            for k in range(space.n_labels)
        ],
        axis=1,
    )
    return BlockPredictor(partition, joint / mass[:, None])


def expected_loss(space, predictor, loss):
    """E[loss(T, Y)] by direct summation over every (atom, label) pair."""
    _check_partition(space, predictor.partition)
    preds = predictor.at_atoms()
    total = 0.0
    for label in range(space.n_labels):
        per_atom = pointwise_loss(loss, preds, np.full(space.n_atoms, label))
        total += float(np.sum(space.atom_probs * space.chance[:, label] * per_atom))
    return total


def _laws_at_atoms(space, partition):
    return conditional_law(space, partition).at_atoms()


def _expected_divergence(space, loss, p_atoms, q_atoms):
    return space.expect(divergence(loss, p_atoms, q_atoms))


def _expected_entropy(space, loss, q_atoms):
    return space.expect(entropy(loss, q_atoms))


@dataclass(frozen=True)
class OneLevelDecomposition:
    regret: float
    entropy_term: float
    direct_loss: float

    @property
    def total(self):
        return self.regret + self.entropy_term

    @property
    def residual(self):
        return self.total - self.direct_loss


@dataclass(frozen=True)
class ChainDecomposition:
    reliability: float
    grouping: float
    entropy_term: float
    direct_loss: float

    @property
    def total(self):
        return self.reliability + self.grouping + self.entropy_term

    @property
    def residual(self):
        return self.total - self.direct_loss


@dataclass(frozen=True)
class FourTermDecomposition:
    reliability: float
    grouping: float
    chance_heterogeneity: float
    intrinsic: float
    direct_loss: float

    @property
    def total(self):
        return self.reliability + self.grouping + self.chance_heterogeneity + self.intrinsic

    @property
    def residual(self):
        return self.total - self.direct_loss


@dataclass(frozen=True)
class URCDecomposition:
    uncertainty: float
    resolution: float
    reliability: float
    direct_loss: float

    @property
    def total(self):
        return self.uncertainty - self.resolution + self.reliability

    @property
    def residual(self):
        return self.total - self.direct_loss


@dataclass(frozen=True)
class TelescopeDecomposition:
    """Initial regret, one gain per refinement step and the final entropy.

    ``stage_risks[t]`` is E[loss(Q_t, Y)] for the Bayes predictor at level t.
    """

    initial_regret: float
    gains: tuple
    final_entropy: float
    direct_loss: float
    stage_risks: tuple

    @property
    def total(self):
        return self.initial_regret + float(sum(self.gains)) + self.final_entropy

    @property
    def residual(self):
        return self.total - self.direct_loss


def one_level_decompose(space, partition, predictor, loss):
    """E[loss(T,Y)] = E[d(T, Q_A)] + E[E(Q_A)] for an A-measurable T."""
    _check_partition(space, partition)
    _check_predictor(space, predictor, partition)
    law = _laws_at_atoms(space, partition)
    return OneLevelDecomposition(
        regret=_expected_divergence(space, loss, predictor.at_atoms(), law),
        entropy_term=_expected_entropy(space, loss, law),
        direct_loss=expected_loss(space, predictor, loss),
    )


def chain_decompose(space, part_a, part_b, predictor, loss):
    """Reliability at A, grouping from A to B, and entropy at B."""
    _check_partition(space, part_a)
    _check_partition(space, part_b)
    _check_nested(part_a, part_b)
    _check_predictor(space, predictor, part_a)
    law_a = _laws_at_atoms(space, part_a)
    law_b = _laws_at_atoms(space, part_b)
    return ChainDecomposition(
        reliability=_expected_divergence(space, loss, predictor.at_atoms(), law_a),
        grouping=_expected_divergence(space, loss, law_a, law_b),
        entropy_term=_expected_entropy(space, loss, law_b),
        direct_loss=expected_loss(space, predictor, loss),
    )


def four_term_decompose(space, part_s, part_x, part_z, predictor, loss):
    """Reliability, grouping, chance heterogeneity and intrinsic uncertainty."""
    for part in (part_s, part_x, part_z):
        _check_partition(space, part)
    _check_nested(part_s, part_x, "score and feature levels")
    _check_nested(part_x, part_z, "feature and latent levels")
    _check_predictor(space, predictor, part_s)
    calibrated = _laws_at_atoms(space, part_s)
    feature_law = _laws_at_atoms(space, part_x)
    chance = _laws_at_atoms(space, part_z)
    return FourTermDecomposition(
        reliability=_expected_divergence(space, loss, predictor.at_atoms(), calibrated),
        grouping=_expected_divergence(space, loss, calibrated, feature_law),
        chance_heterogeneity=_expected_divergence(space, loss, feature_law, chance),
        intrinsic=_expected_entropy(space, loss, chance),
        direct_loss=expected_loss(space, predictor, loss),
    )


def climatology(space):
    """The marginal label law, i.e. the one-block conditional law."""
    return conditional_law(space, Partition.trivial(space.n_atoms)).probs[0]


def urc_decompose(space, part_s, predictor, loss):
    """Uncertainty - resolution + reliability relative to the climatology."""
    _check_partition(space, part_s)
    _check_predictor(space, predictor, part_s)
    base = climatology(space)
    calibrated = _laws_at_atoms(space, part_s)
    base_atoms = np.broadcast_to(base, calibrated.shape)
    return URCDecomposition(
        uncertainty=float(entropy(loss, base)),
        resolution=_expected_divergence(space, loss, base_atoms, calibrated),
        reliability=_expected_divergence(space, loss, predictor.at_atoms(), calibrated),
        direct_loss=expected_loss(space, predictor, loss),
    )


def _check_filtration(space, filtration):
    if not filtration:
        raise InputError("a filtration needs at least one level")
    for part in filtration:
        _check_partition(space, part)
    for step, (coarse, fine) in enumerate(zip(filtration[:-1], filtration[1:])):
        _check_nested(coarse, fine, f"filtration levels {step} and {step + 1}")


def telescope_decompose(space, filtration, predictor, loss):
    """Telescoping decomposition of E[loss(T,Y)] along a refining filtration."""
    filtration = list(filtration)
    _check_filtration(space, filtration)
    _check_predictor(space, predictor, filtration[0])
    laws = [conditional_law(space, part) for part in filtration]
    atoms = [law.at_atoms() for law in laws]
    gains = tuple(
        _expected_divergence(space, loss, coarse, fine)
        for coarse, fine in zip(atoms[:-1], atoms[1:])
    )
    return TelescopeDecomposition(
        initial_regret=_expected_divergence(space, loss, predictor.at_atoms(), atoms[0]),
        gains=gains,
        final_entropy=_expected_entropy(space, loss, atoms[-1]),
        direct_loss=expected_loss(space, predictor, loss),
        stage_risks=tuple(expected_loss(space, law, loss) for law in laws),
    )


def tower_check(space, part_a, part_b):
    """max |Q_A - E[Q_B | A]| over blocks and labels."""
    _check_partition(space, part_a)
    _check_partition(space, part_b)
    _check_nested(part_a, part_b)
    law_b = _laws_at_atoms(space, part_b)
    blocks = part_a.block_of_atom
    count = part_a.block_count
    mass = np.bincount(blocks, weights=space.atom_probs, minlength=count)
    averaged = np.stack(
        [
            np.bincount(blocks, weights=space.atom_probs * law_b[:, k], minlength=count)
            for k in range(space.n_labels)
        ],
        axis=1,
    ) / mass[:, None]
    return float(np.max(np.abs(conditional_law(space, part_a).probs - averaged)))


def martingale_gaps(space, filtration):
    """Tower gap between each pair of consecutive filtration levels."""
    filtration = list(filtration)
    _check_filtration(space, filtration)
    return [tower_check(space, a, b) for a, b in zip(filtration[:-1], filtration[1:])]


def conditional_entropy(space, partition):
    """H(Y | A) in nats from the joint (block, label) table."""
    _check_partition(space, partition)
    blocks = partition.block_of_atom
    count = partition.block_count
    joint = np.stack(
        [
            np.bincount(blocks, weights=space.atom_probs * space.chance[:, k], minlength=count)
            for k in range(space.n_labels)
        ],
        axis=1,
    )
    block_mass = joint.sum(axis=1, keepdims=True)
    return float(-np.sum(xlogy(joint, joint) - xlogy(joint, block_mass)))


def conditional_mutual_information(space, coarse, fine):
    """I(Y; fine | coarse) = H(Y | coarse) - H(Y | fine)."""
    _check_nested(coarse, fine)
    return conditional_entropy(space, coarse) - conditional_entropy(space, fine)


def variance_identity_gap(space, coarse, fine):
    """|E[C(1-C)] - E[Q(1-Q)] - E[(C-Q)^2]| for binary laws at two nested levels."""
    if space.n_labels != 2:
        raise DimensionMismatchError("the variance identity is stated for binary labels")
    _check_nested(coarse, fine)
    c = _laws_at_atoms(space, coarse)[:, 1]
    q = _laws_at_atoms(space, fine)[:, 1]
    return abs(
        space.expect(c * (1.0 - c)) - space.expect(q * (1.0 - q)) - space.expect((c - q) ** 2)
    )


def induced_partition(space, predictor):
    """The partition generated by the values an atom-level predictor takes."""
    _check_partition(space, predictor.partition)
    _, inverse = np.unique(predictor.at_atoms(), axis=0, return_inverse=True)
    return Partition(inverse.reshape(-1))


def calibrated_constant_example():
    """Two equally likely atoms with P(Y=1) 0.9 and 0.1 and the constant score 1/2.

    The score is perfectly calibrated yet loses all the information in X.
    """
    space = FiniteSpace(
        atom_probs=np.array([0.5, 0.5]),
        chance=np.array([bernoulli(0.9).probs, bernoulli(0.1).probs]),
    )
    score_level = Partition.trivial(2)
    return LabeledWorld(
        space=space,
        partitions={"s": score_level, "x": Partition.discrete(2)},
        predictors={"s": BlockPredictor.constant(score_level, bernoulli(0.5).probs)},
    )


def counterexample_average():
    """Two perfectly calibrated scores whose average is miscalibrated.

    Four equally likely atoms carry (S1, S2) in {0.25, 0.75}^2 and
    P(Y=1 | atom) = 0, 0.5, 0.5, 1.
    """
    s1 = np.array([0.25, 0.25, 0.75, 0.75])
    s2 = np.array([0.25, 0.75, 0.25, 0.75])
    chance_of_one = np.array([0.0, 0.5, 0.5, 1.0])
    space = FiniteSpace(
        atom_probs=np.full(4, 0.25),
        chance=np.stack([1.0 - chance_of_one, chance_of_one], axis=1),
    )
    partitions = {}
    predictors = {}
    for name, values in (("s1", s1), ("s2", s2), ("avg", 0.5 * (s1 + s2))):
        levels, inverse = np.unique(values, return_inverse=True)
        part = Partition(inverse.reshape(-1))
        partitions[name] = part
        predictors[name] = BlockPredictor(part, np.stack([1.0 - levels, levels], axis=1))
    partitions["x"] = Partition.discrete(4)
    return LabeledWorld(space=space, partitions=partitions, predictors=predictors)


def random_space(rng, n_atoms, n_labels):
    """Full-support random space from normalized exponential draws."""
    weights = rng.exponential(size=n_atoms)
    rows = rng.exponential(size=(n_atoms, n_labels))
    return FiniteSpace(
        atom_probs=weights / weights.sum(),
        chance=rows / rows.sum(axis=1, keepdims=True),
    )


def random_filtration(rng, n_atoms, length):
    """Random nested partitions, coarsest first.

    The finest level is drawn first; each coarser level merges random groups
    of the blocks below it.
    """
    if length < 1:
        raise InputError("filtration length must be at least 1")
    finest = Partition.from_labels(rng.integers(0, n_atoms, size=n_atoms))
    levels = [finest]
    for _ in range(length - 1):
        below = levels[-1]
        groups = rng.integers(0, max(1, (below.block_count + 1) // 2), size=below.block_count)
        levels.append(Partition.from_labels(groups[below.block_of_atom]))
    return levels[::-1]


def random_block_predictor(rng, partition, n_labels):
    rows = rng.exponential(size=(partition.block_count, n_labels))
    return BlockPredictor(partition, rows / rows.sum(axis=1, keepdims=True))


def identity_suite(n_spaces=100, seed=0, max_atoms=12):
    """Check every exact identity on random spaces; return max |residual| per identity.

    Space ``i`` draws from its own stream keyed by (seed, i).
    """
    worst = {
        "one_level": 0.0,
        "chain": 0.0,
        "four_term": 0.0,
        "urc": 0.0,
        "telescope": 0.0,
        "tower": 0.0,
        "martingale": 0.0,
        "brier_total_variance": 0.0,
        "brier_pythagoras": 0.0,
        "logloss_information": 0.0,
        "global_balance": 0.0,
    }

    def record(name, value):
        worst[name] = max(worst[name], abs(float(value)))

    for index in range(n_spaces):
        rng = np.random.default_rng([seed, index])
        n_atoms = int(rng.integers(2, max_atoms + 1))
        n_labels = int(rng.choice([2, 3, 4]))
        space = random_space(rng, n_atoms, n_labels)
        part_s, part_x, part_z = random_filtration(rng, n_atoms, 3)
        predictor = random_block_predictor(rng, part_s, n_labels)
        filtration = [part_s, part_x, part_z, Partition.discrete(n_atoms)]

        for loss in (BRIER, LOGLOSS):
            record("one_level", one_level_decompose(space, part_s, predictor, loss).residual)
            record("chain", chain_decompose(space, part_s, part_x, predictor, loss).residual)
            record(
                "four_term",
                four_term_decompose(space, part_s, part_x, part_z, predictor, loss).residual,
            )
            record("urc", urc_decompose(space, part_s, predictor, loss).residual)
            record("telescope", telescope_decompose(space, filtration, predictor, loss).residual)

        record("tower", tower_check(space, part_s, part_x))
        for gap in martingale_gaps(space, filtration):
            record("martingale", gap)

        bayes = conditional_law(space, part_s)
        balance = space.atom_probs @ bayes.at_atoms() - space.label_marginal()
        record("global_balance", np.max(np.abs(balance)))

        log_chain = chain_decompose(space, part_s, part_x, bayes, LOGLOSS)
        record(
            "logloss_information",
            log_chain.grouping - conditional_mutual_information(space, part_s, part_x),
        )
        log_steps = telescope_decompose(space, filtration, bayes, LOGLOSS)
        for step, gain in enumerate(log_steps.gains):
            cmi = conditional_mutual_information(space, filtration[step], filtration[step + 1])
            record("logloss_information", gain - cmi)

        if n_labels == 2:
            record("brier_total_variance", variance_identity_gap(space, part_s, part_x))
            record("brier_total_variance", variance_identity_gap(space, part_x, part_z))
            brier_steps = telescope_decompose(space, filtration, bayes, BRIER)
            risks = brier_steps.stage_risks
            for step, gain in enumerate(brier_steps.gains):
                record("brier_pythagoras", risks[step + 1] - (risks[step] - gain))

    logger.debug("identity suite over %d spaces: %s", n_spaces, worst)
    return worst


def space_to_dict(space, partitions=None):
    """JSON-ready fixture document for a space and its named partitions."""
    return {
        "atom_probs": space.atom_probs.tolist(),
        "chance": space.chance.tolist(),
        "partitions": {
            name: part.block_of_atom.tolist() for name, part in (partitions or {}).items()
        },
    }


def space_from_dict(document):
    """Inverse of ``space_to_dict``; returns (space, partitions)."""
    unknown = set(document) - {"atom_probs", "chance", "partitions"}
    if unknown:
        raise InputError(f"unknown keys in space document: {sorted(unknown)}")
    try:
        space = FiniteSpace(
            atom_probs=np.asarray(document["atom_probs"], dtype=float),
            chance=np.asarray(document["chance"], dtype=float),
        )
    except KeyError as exc:
        raise InputError(f"space document is missing {exc}") from exc
    partitions = {
        name: Partition(np.asarray(labels)) for name, labels in document.get("partitions", {}).items()
    }
    for part in partitions.values():
        _check_partition(space, part)
    return space, partitions


def save_space(path, space, partitions=None):
    Path(path).write_text(json.dumps(space_to_dict(space, partitions), indent=2) + "\n")


def load_space(path):
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return space_from_dict(document)


def decomposition_to_dict(result):
    """Plain dict of a decomposition result including its total and residual."""
    out = asdict(result)
    out["total"] = result.total
    out["residual"] = result.residual
    return out
