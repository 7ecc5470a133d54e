"""Predictors that map a test graph to an affine combination of training graphs.

Training data are trajectories laid out one after another. Every snapshot
except the last of its trajectory is a predecessor whose successor is the
next snapshot. Predictors see only kernel or distance values between the
test input and the predecessors, and return coefficients over all training
snapshots plus one coefficient for the test input itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .latent import AffinePrediction

KR_DEGENERATE = 1e-12
VARIANCE_FLOOR = 1e-12


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrainingIndex:
    """(predecessor, successor) positions into the training point ordering."""

    predecessors: np.ndarray
    successors: np.ndarray
    n_points: int

    def __post_init__(self):
        pred = np.asarray(self.predecessors, dtype=np.int64)
        succ = np.asarray(self.successors, dtype=np.int64)
        if pred.shape != succ.shape:
            raise ValueError("predecessor and successor lists differ in length")
        for arr in (pred, succ):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_points):
                raise ValueError("pair index out of range")
        object.__setattr__(self, "predecessors", pred)
        object.__setattr__(self, "successors", succ)

    @classmethod
    def from_lengths(cls, lengths: Sequence[int]) -> "TrainingIndex":
        pred, succ, start = [], [], 0
        for T in lengths:
            pred.extend(range(start, start + T - 1))
            succ.extend(range(start + 1, start + T))
            start += T
        return cls(np.array(pred, dtype=np.int64), np.array(succ, dtype=np.int64), start)

    def __len__(self):
        return int(self.predecessors.shape[0])

    def subset(self, positions) -> "TrainingIndex":
        positions = np.asarray(positions, dtype=np.int64)
        return TrainingIndex(self.predecessors[positions], self.successors[positions], self.n_points)


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: AffinePrediction
    variance: float


def predict_identity(n_train: int) -> AffinePrediction:
    """Baseline: the next graph equals the current one."""
    return AffinePrediction(np.zeros(n_train), 1.0)


def predict_1nn(test_distance_row, pairs: TrainingIndex) -> AffinePrediction:
    """Successor of the closest predecessor; ties go to the lowest index."""
    row = np.asarray(test_distance_row, dtype=float).ravel()
    if len(pairs) == 0:
        raise ValueError("1-NN needs at least one training pair")
    if row.shape[0] != len(pairs):
        raise ValueError(f"distance row has {row.shape[0]} entries for {len(pairs)} predecessors")
    coef = np.zeros(pairs.n_points)
    coef[pairs.successors[int(np.argmin(row))]] = 1.0
    return AffinePrediction(coef, 0.0)


def predict_kr(test_kernel_row, pairs: TrainingIndex) -> AffinePrediction:
    """Nadaraya-Watson: successors weighted by the kernel to their predecessor."""
    row = np.asarray(test_kernel_row, dtype=float).ravel()
    if row.shape[0] != len(pairs):
        raise ValueError(f"kernel row has {row.shape[0]} entries for {len(pairs)} predecessors")
    if np.any(row < 0):
        raise ValueError("kernel regression requires non-negative kernel values")
    total = row.sum()
    if total < KR_DEGENERATE:
        return predict_identity(pairs.n_points)
    coef = np.zeros(pairs.n_points)
    np.add.at(coef, pairs.successors, row / total)
    return AffinePrediction(coef, 0.0)


@dataclass(frozen=True, eq=False)
class GpModel:
    noise_std: float
    factor: tuple
    pairs: TrainingIndex
    jitter: float = 0.0

    def solve(self, rhs) -> np.ndarray:
        return cho_solve(self.factor, np.asarray(rhs, dtype=float))

    @property
    def size(self) -> int:
        return self.factor[0].shape[0]


def fit_gp(K_pred, noise_std: float, pairs: TrainingIndex | None = None) -> GpModel:
    """Cholesky-factorize ``K_pred + noise_std**2 * I``.

    If the factorization fails, jitter starting at ``1e-10 * trace / N`` is
    added and grown tenfold, at most three times.
    """
    K = np.asarray(K_pred, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n):
        raise ValueError(f"kernel matrix must be square, got {K.shape}")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if pairs is None:
        pairs = TrainingIndex(np.arange(n), np.arange(n), n)
    elif len(pairs) != n:
        raise ValueError(f"kernel covers {n} predecessors but {len(pairs)} pairs were given")
    system = K + noise_std**2 * np.eye(n)
    jitter = 0.0
    base = 1e-10 * max(float(np.trace(K)) / max(n, 1), np.finfo(float).tiny)
    for attempt in range(4):
        try:
            factor = cho_factor(system + jitter * np.eye(n), lower=True, check_finite=True)
            return GpModel(float(noise_std), factor, pairs, jitter)
        except LinAlgError:
            jitter = base * 10.0**attempt
    raise NumericalError(f"kernel matrix not positive definite even with jitter {jitter:.3g}")


def _gp_coefficients(model: GpModel, gamma: np.ndarray) -> np.ndarray:
    """Map solve weights (one row per test point) to training coefficients."""
    pairs = model.pairs
    coef = np.zeros((gamma.shape[0], pairs.n_points))
    # mean = x + sum_i gamma_i (y_i - x_i)
    np.add.at(coef.T, pairs.successors, gamma.T)
    np.subtract.at(coef.T, pairs.predecessors, gamma.T)
    return coef


def predict_gp_many(model: GpModel, test_kernel_rows, k_xx) -> list[PredictiveDistribution]:
    """GP posterior with the identity prior for several test points at once."""
    rows = np.atleast_2d(np.asarray(test_kernel_rows, dtype=float))
    if rows.shape[1] != model.size:
        raise ValueError(f"kernel rows have {rows.shape[1]} entries, model has {model.size}")
    k_xx = np.broadcast_to(np.asarray(k_xx, dtype=float), (rows.shape[0],))
    gamma = model.solve(rows.T).T
    variance = k_xx - np.einsum("ij,ij->i", rows, gamma)
    variance = np.clip(variance, 0.0, k_xx)
    coef = _gp_coefficients(model, gamma)
    return [
        PredictiveDistribution(AffinePrediction(c, 1.0), float(v))
        for c, v in zip(coef, variance)
    ]


def predict_gp(model: GpModel, test_kernel_row, k_xx: float) -> PredictiveDistribution:
    row = np.asarray(test_kernel_row, dtype=float)
    if row.ndim != 1:
        raise ValueError("expected a single kernel row")
    return predict_gp_many(model, row[None, :], k_xx)[0]


# -- robust Bayesian committee machine --------------------------------------


def combine_rbcm(
    experts: Sequence[PredictiveDistribution], sigma_prior: float
) -> PredictiveDistribution:
    """Merge expert predictions with differential-entropy weights.

    With ``beta_c = 0.5 * (log sp2 - log var_c)`` the combined precision is
    ``sum beta_c / var_c + (1 - sum beta_c) / sp2`` and the mean is the
    precision-weighted blend of expert means and the prior mean (the test
    input). The result keeps coefficient 1 on the test input.
    """
    if not sigma_prior > 0:
        raise ValueError("sigma_prior must be positive")
    if not experts:
        raise ValueError("need at least one expert")
    sp2 = float(sigma_prior) ** 2
    var = np.array([max(e.variance, VARIANCE_FLOOR) for e in experts])
    beta = 0.5 * (np.log(sp2) - np.log(var))
    weights = beta / var
    precision = float(weights.sum() + (1.0 - beta.sum()) / sp2)
    if not (precision > 0 and np.isfinite(precision)):
        detail = ", ".join(f"(var={v:.3g}, beta={b:.3g})" for v, b in zip(var, beta))
        raise NumericalError(f"non-positive rBCM precision {precision:.3g}; experts: {detail}")
    combined = 1.0 / precision
    train = sum(
        (combined * w) * e.mean.train_coefficients for w, e in zip(weights, experts)
    )
    return PredictiveDistribution(
        AffinePrediction(train, 1.0), max(combined, VARIANCE_FLOOR)
    )


def predict_rbcm(
    cluster_models: Sequence[GpModel],
    test_kernel_rows: Sequence,
    k_xx: float,
    sigma_prior: float,
) -> PredictiveDistribution:
    """rBCM prediction from per-cluster GP models and their kernel rows."""
    if len(cluster_models) != len(test_kernel_rows):
        raise ValueError("need one kernel row per cluster model")
    experts = [predict_gp(m, r, k_xx) for m, r in zip(cluster_models, test_kernel_rows)]
    return combine_rbcm(experts, sigma_prior)


@dataclass(frozen=True, eq=False)
class RbcmModel:
    """GP experts, one per non-empty cluster of predecessors."""

    experts: list[GpModel]
    members: list[np.ndarray] = field(default_factory=list)
    sigma_prior: float = 1.0

    def predict_many(self, test_kernel_rows, k_xx) -> list[PredictiveDistribution]:
        rows = np.atleast_2d(np.asarray(test_kernel_rows, dtype=float))
        per_expert = [
            predict_gp_many(m, rows[:, idx], k_xx) for m, idx in zip(self.experts, self.members)
        ]
        return [
            combine_rbcm([pe[p] for pe in per_expert], self.sigma_prior)
            for p in range(rows.shape[0])
        ]


def fit_rbcm(
    K_pred, pairs: TrainingIndex, labels, noise_std: float, sigma_prior: float
) -> RbcmModel:
    """One GP per cluster; ``labels[i]`` is the cluster of the i-th pair."""
    K = np.asarray(K_pred, dtype=float)
    labels = np.asarray(labels)
    if labels.shape[0] != len(pairs):
        raise ValueError("need one cluster label per training pair")
    experts, members = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        experts.append(fit_gp(K[np.ix_(idx, idx)], noise_std, pairs.subset(idx)))
        members.append(idx)
    return RbcmModel(experts, members, float(sigma_prior))
