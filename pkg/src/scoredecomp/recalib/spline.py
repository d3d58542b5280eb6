"""Cubic B-spline calibrators.

The monotone calibrator is fitted in two steps: kernel pre-smoothing onto a
grid (see ``kernel``), then a penalized spline fit with nondecreasing
coefficients, which makes the cubic spline nondecreasing. With the logit
link the spline models the log-odds and is fitted by constrained IRLS,
each inner step being the same QP as the identity-link fit.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import expit, logit

from ..errors import DegenerateDataError, InputError, ScoreDecompWarning
from .kernel import kernel_presmooth, nadaraya_watson
from .qp import kkt_residuals, solve_monotone_qp

logger = logging.getLogger(__name__)

DEGREE = 3
DEFAULT_BASIS_SIZE = 15
DEFAULT_BANDWIDTH = 0.08
DEFAULT_GRID_SIZE = 101
LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2)
LINKS = ("identity", "logit")
PSEUDO_CLIP = 1e-6
IRLS_MAX_ITER = 200
PROB_FLOOR = 1e-15
CV_STREAM = 7
STALL_STEP_TOL = 1e-8


def clamped_knots(basis_size):
    """Uniform knots on [0, 1] with fourfold boundary knots."""
    if basis_size < DEGREE + 1:
        raise InputError(f"basis size must be >= {DEGREE + 1}, got {basis_size}")
    inner = np.linspace(0.0, 1.0, basis_size - DEGREE + 1)
    return np.concatenate([np.zeros(DEGREE), inner, np.ones(DEGREE)])


def basis_matrix(x, knots):
    """Dense B-spline design matrix at ``x`` (clipped to [0, 1])."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return BSpline.design_matrix(x, knots, DEGREE).toarray()


def difference_matrix(size, order=1):
    return np.diff(np.eye(size), n=order, axis=0)


def second_difference_penalty(size):
    second = difference_matrix(size, 2)
    return second.T @ second


def _spline_value(knots, coefficients, x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return BSpline(knots, coefficients, DEGREE, extrapolate=True)(x)


@dataclass(frozen=True, eq=False)
class MonotoneSplineFit:
    """Nondecreasing cubic spline calibrator.

    Attributes:
        knots: clamped knot vector on [0, 1]
        coefficients: nondecreasing B-spline coefficients
        link: ``identity`` (spline is the probability) or ``logit``
        lam: second-difference penalty weight
        bandwidth: pre-smoothing bandwidth the fit was built from
        grid: pre-smoothing grid
        fitted_values: calibrated values on the grid
        converged: False when IRLS or the QP hit their iteration cap
        kkt: KKT residuals of the final solve
    """

    kind: ClassVar[str] = "monotone_spline"

    knots: np.ndarray
    coefficients: np.ndarray
    link: str
    lam: float
    bandwidth: float
    grid: np.ndarray
    fitted_values: np.ndarray = None
    converged: bool = True
    n_iter: int = 0
    kkt: dict = field(default_factory=dict)
    cv_scores: tuple = ()

    @property
    def basis_size(self):
        return self.coefficients.shape[0]

    def linear_predictor(self, s):
        return _spline_value(self.knots, self.coefficients, s)

    def predict(self, s):
        """Calibrated probability; constant outside [0, 1]."""
        eta = self.linear_predictor(s)
        if self.link == "logit":
            out = np.clip(expit(eta), PROB_FLOOR, 1.0 - PROB_FLOOR)
        else:
            out = np.clip(eta, 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, s):
        """d/ds of the spline on its link scale mapped to probabilities (before clipping)."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        slope = BSpline(self.knots, self.coefficients, DEGREE, extrapolate=True).derivative()(s)
        if self.link == "logit":
            mu = expit(self.linear_predictor(s))
            return mu * (1.0 - mu) * slope
        return slope

    def to_dict(self):
        return {
            "kind": self.kind,
            "knots": self.knots.tolist(),
            "coefficients": self.coefficients.tolist(),
            "link": self.link,
            "lam": self.lam,
            "bandwidth": self.bandwidth,
            "grid": self.grid.tolist(),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "kkt": dict(self.kkt),
        }


@dataclass(frozen=True, eq=False)
class PSplineFit:
    """Unconstrained penalized cubic spline on the probability scale."""

    knots: np.ndarray
    coefficients: np.ndarray
    lam: float

    def predict(self, s):
        out = np.clip(_spline_value(self.knots, self.coefficients, s), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out


def _usable_points(grid, pseudo, mass):
    grid = np.asarray(grid, dtype=float)
    pseudo = np.asarray(pseudo, dtype=float)
    mass = np.asarray(mass, dtype=float)
    keep = np.isfinite(pseudo) & (mass > 0)
    if not keep.any():
        raise DegenerateDataError("no grid point carries kernel mass")
    weights = mass[keep]
    return grid[keep], pseudo[keep], weights / weights.mean()


def _bernoulli_objective(basis, y, v, lam, penalty, beta):
    eta = basis @ beta
    return -float(v @ (y * eta - np.logaddexp(0.0, eta))) + 0.5 * lam * float(beta @ penalty @ beta)


def _constrained_irls(basis, y, v, lam, penalty, constraints):
    """Penalized Bernoulli deviance under Ax >= 0, from the best constant."""
    y = np.clip(y, PSEUDO_CLIP, 1.0 - PSEUDO_CLIP)
    size = basis.shape[1]
    beta = np.full(size, logit(float(v @ y) / v.sum()))
    obj = _bernoulli_objective(basis, y, v, lam, penalty, beta)
    converged = False
    n_iter = 0
    for n_iter in range(1, IRLS_MAX_ITER + 1):
        eta = basis @ beta
        mu = expit(eta)
        variance = np.maximum(mu * (1.0 - mu), 1e-12)
        omega = v * variance
        working = eta + (y - mu) / variance
        hessian = (basis.T * omega) @ basis + lam * penalty
        linear = -(basis.T @ (omega * working))
        step = solve_monotone_qp(hessian, linear, constraints, start=beta).x - beta
        scale = 1.0
        for _ in range(50):
            candidate = beta + scale * step
            cand_obj = _bernoulli_objective(basis, y, v, lam, penalty, candidate)
            if cand_obj <= obj:
                break
            scale *= 0.5
        else:
            # a stalled line search only counts as converged at a rounding-level step
            converged = bool(np.max(np.abs(step)) <= STALL_STEP_TOL * (1.0 + np.max(np.abs(beta))))
            if not converged:
                logger.warning("constrained IRLS: line search stalled at iteration %d", n_iter)
            break
        change = obj - cand_obj
        beta, obj = candidate, cand_obj
        if change <= 1e-14 * (1.0 + abs(obj)) or np.max(np.abs(scale * step)) < 1e-10:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"constrained IRLS did not converge ({n_iter} iterations)",
            ScoreDecompWarning,
            stacklevel=3,
        )
    mu = expit(basis @ beta)
    gradient = basis.T @ (v * (mu - y)) + lam * (penalty @ beta)
    return beta, gradient, converged, n_iter


def monotone_spline_fit(
    grid, pseudo, mass, basis_size=DEFAULT_BASIS_SIZE, lam=1.0, link="logit", bandwidth=float("nan")
):
    """Step B: penalized monotone spline through pre-smoothed grid values.

    Grid points without kernel mass are dropped. Masses are rescaled to
    mean one so ``lam`` does not depend on the sample size.
    """
    if link not in LINKS:
        raise InputError(f"link must be one of {LINKS}, got '{link}'")
    if lam < 0:
        raise InputError(f"penalty must be >= 0, got {lam}")
    points, y, v = _usable_points(grid, pseudo, mass)
    knots = clamped_knots(basis_size)
    basis = basis_matrix(points, knots)
    constraints = difference_matrix(basis_size, 1)
    penalty = second_difference_penalty(basis_size)

    if link == "identity":
        hessian = (basis.T * v) @ basis + lam * penalty
        linear = -(basis.T @ (v * y))
        result = solve_monotone_qp(hessian, linear, constraints)
        beta = result.x
        gradient = hessian @ beta + linear
        converged, n_iter = result.converged, result.n_iter
    else:
        beta, gradient, converged, n_iter = _constrained_irls(
            basis, y, v, lam, penalty, constraints
        )
    slack = constraints @ beta
    active = slack <= 1e-10 * (1.0 + np.max(np.abs(beta)))
    kkt = kkt_residuals(gradient, constraints, beta, active)
    logger.debug("monotone spline (%s, lam=%g): %d iterations, kkt %s", link, lam, n_iter, kkt)

    grid = np.asarray(grid, dtype=float)
    fit = MonotoneSplineFit(
        knots=knots,
        coefficients=beta,
        link=link,
        lam=float(lam),
        bandwidth=float(bandwidth),
        grid=grid,
        converged=converged,
        n_iter=n_iter,
        kkt=kkt,
    )
    object.__setattr__(fit, "fitted_values", fit.predict(grid))
    return fit


def pspline_fit(scores, outcomes, basis_size=DEFAULT_BASIS_SIZE, lam=1.0, weights=None):
    """Unconstrained P-spline weighted least-squares fit to (score, response) pairs."""
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    w = np.ones_like(scores) if weights is None else np.asarray(weights, dtype=float)
    if scores.ndim != 1 or scores.shape != outcomes.shape or scores.shape != w.shape:
        raise InputError("scores, responses and weights must be vectors of equal length")
    if np.any(w < 0) or not w.sum() > 0:
        raise InputError("weights must be nonnegative with positive total")
    knots = clamped_knots(basis_size)
    basis = basis_matrix(scores, knots)
    lhs = (basis.T * w) @ basis + lam * second_difference_penalty(basis_size)
    rhs = basis.T @ (w * outcomes)
    try:
        beta = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return PSplineFit(knots=knots, coefficients=beta, lam=float(lam))


def c2_spline_calibrate(
    scores,
    outcomes,
    basis_size=DEFAULT_BASIS_SIZE,
    bandwidth=DEFAULT_BANDWIDTH,
    lam=1.0,
    grid_size=DEFAULT_GRID_SIZE,
):
    """Smooth but unconstrained counterpart of ``monotone_spline_calibrate``.

    Nadaraya-Watson values on the grid are fitted by a P-spline with equal
    weights on every grid point the kernel window reaches.
    """
    grid = np.linspace(0.0, 1.0, grid_size)
    pseudo = nadaraya_watson(scores, outcomes, grid, bandwidth)
    covered = np.isfinite(pseudo)
    if not covered.any():
        raise DegenerateDataError("no grid point carries kernel mass")
    return pspline_fit(grid[covered], pseudo[covered], basis_size, lam)


def _fold_labels(n, folds, seed):
    if folds < 2 or folds > n:
        raise InputError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.default_rng([seed, CV_STREAM])
    labels = np.empty(n, dtype=int)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


def _mean_deviance(probs, outcomes):
    p = np.clip(probs, PSEUDO_CLIP, 1.0 - PSEUDO_CLIP)
    return float(-np.mean(outcomes * np.log(p) + (1.0 - outcomes) * np.log1p(-p)))


def select_lambda(
    scores,
    outcomes,
    basis_size=DEFAULT_BASIS_SIZE,
    bandwidth=DEFAULT_BANDWIDTH,
    link="logit",
    grid_size=DEFAULT_GRID_SIZE,
    folds=5,
    seed=0,
    lam_grid=LAMBDA_GRID,
):
    """Pick the penalty with the smallest cross-validated deviance.

    Returns:
        (best lambda, tuple of mean held-out deviances per candidate)
    """
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    labels = _fold_labels(scores.size, folds, seed)
    grid = np.linspace(0.0, 1.0, grid_size)
    totals = np.zeros(len(lam_grid))
    for fold in range(folds):
        train = labels != fold
        smoothed = kernel_presmooth(scores[train], outcomes[train], grid, bandwidth)
        for i, lam in enumerate(lam_grid):
            fit = monotone_spline_fit(
                grid, smoothed.pseudo, smoothed.mass, basis_size, lam, link, bandwidth
            )
            held_out = ~train
            totals[i] += _mean_deviance(fit.predict(scores[held_out]), outcomes[held_out]) * held_out.sum()
    cv_scores = tuple(float(t / scores.size) for t in totals)
    best = float(lam_grid[int(np.argmin(totals))])
    logger.debug("lambda CV: %s -> %g", dict(zip(lam_grid, cv_scores)), best)
    return best, cv_scores


def monotone_spline_calibrate(
    scores,
    outcomes,
    basis_size=DEFAULT_BASIS_SIZE,
    bandwidth=DEFAULT_BANDWIDTH,
    lam=None,
    link="logit",
    grid_size=DEFAULT_GRID_SIZE,
    folds=5,
    seed=0,
):
    """Pre-smooth then fit; ``lam=None`` selects the penalty by cross-validation."""
    scores = np.asarray(scores, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    cv_scores = ()
    if lam is None:
        lam, cv_scores = select_lambda(
            scores, outcomes, basis_size, bandwidth, link, grid_size, folds, seed
        )
    grid = np.linspace(0.0, 1.0, grid_size)
    smoothed = kernel_presmooth(scores, outcomes, grid, bandwidth)
    fit = monotone_spline_fit(grid, smoothed.pseudo, smoothed.mass, basis_size, lam, link, bandwidth)
    if cv_scores:
        object.__setattr__(fit, "cv_scores", cv_scores)
    return fit
