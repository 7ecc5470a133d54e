"""Affine combinations of data points in an implicit (pseudo-)Euclidean space.

Predictions are never embedded explicitly. A prediction is a coefficient
vector over the training points plus one coefficient on the test input, and
distances or kernel values to it follow from the pairwise matrices alone.

Point ordering convention: in an extended matrix the ``N`` training points
come first, followed by test points. Unless told otherwise, the test input of
a prediction sits at index ``N``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

AFFINE_TOL = 1e-9
NEGATIVE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AffinePrediction:
    train_coefficients: np.ndarray
    test_coefficient: float = 0.0

    def __post_init__(self):
        coef = np.array(self.train_coefficients, dtype=float).ravel()
        coef.setflags(write=False)
        object.__setattr__(self, "train_coefficients", coef)
        object.__setattr__(self, "test_coefficient", float(self.test_coefficient))

    @property
    def n_train(self) -> int:
        return self.train_coefficients.shape[0]

    def total(self) -> float:
        return float(self.train_coefficients.sum() + self.test_coefficient)

    def is_affine(self, tol: float = AFFINE_TOL) -> bool:
        return abs(self.total() - 1.0) <= tol

    def as_vector(self, n_total: int, test_index: int | None = None) -> np.ndarray:
        """Dense coefficient vector of length ``n_total``."""
        if n_total < self.n_train:
            raise ValueError(f"matrix of size {n_total} cannot hold {self.n_train} training points")
        vec = np.zeros(n_total)
        vec[: self.n_train] = self.train_coefficients
        if test_index is None:
            test_index = self.n_train
        if 0 <= test_index < n_total:
            if test_index < self.n_train:
                raise ValueError("test index collides with a training point")
            vec[test_index] += self.test_coefficient
        elif self.test_coefficient != 0.0:
            raise IndexError(f"test index {test_index} out of range for size {n_total}")
        return vec

    def __eq__(self, other):
        if not isinstance(other, AffinePrediction):
            return NotImplemented
        return self.test_coefficient == other.test_coefficient and np.array_equal(
            self.train_coefficients, other.train_coefficients
        )

    __hash__ = None


def _coefficients(alpha, n_total, test_index):
    if isinstance(alpha, AffinePrediction):
        return alpha.as_vector(n_total, test_index)
    vec = np.asarray(alpha, dtype=float).ravel()
    if vec.shape[0] != n_total:
        raise ValueError(f"coefficient vector has length {vec.shape[0]}, expected {n_total}")
    return vec


def _check_index(i, n):
    if not 0 <= i < n:
        raise IndexError(f"target index {i} out of range for {n} points")


def extend_squared_distance(alpha, D2, target_index: int, test_index: int | None = None) -> float:
    """Squared distance between point ``target_index`` and the combination.

    Evaluates ``sum_i a_i D2[t, i] - 0.5 * a D2 a^T``, valid for affine ``a``.
    In a pseudo-Euclidean space the result may be negative; values within
    rounding noise of zero are clamped to zero, larger negatives are kept.
    """
    D2 = np.asarray(D2, dtype=float)
    n = D2.shape[0]
    _check_index(target_index, n)
    a = _coefficients(alpha, n, test_index)
    value = float(a @ D2[:, target_index] - 0.5 * a @ D2 @ a)
    if -NEGATIVE_TOL <= value < 0.0:
        return 0.0
    return value


def extend_kernel(alpha, K, target_index: int, test_index: int | None = None) -> float:
    """Inner product of point ``target_index`` with the combination (linear in ``a``)."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    _check_index(target_index, n)
    a = _coefficients(alpha, n, test_index)
    return float(a @ K[:, target_index])


def kernel_squared_distance(alpha, K, target_index: int, test_index: int | None = None) -> float:
    """The same squared distance computed from kernel values only."""
    K = np.asarray(K, dtype=float)
    a = _coefficients(alpha, K.shape[0], test_index)
    return float(K[target_index, target_index] - 2.0 * extend_kernel(a, K, target_index) + a @ K @ a)


def prediction_matrix(predictions: Sequence[AffinePrediction], n_total: int) -> np.ndarray:
    """Stack per-step predictions for a held-out trajectory.

    Row ``p`` puts the training coefficients first and the test coefficient on
    index ``N + p``, the position of the p-th test snapshot.
    """
    n_train = predictions[0].n_train
    A = np.zeros((len(predictions), n_total))
    for p, pred in enumerate(predictions):
        if pred.n_train != n_train:
            raise ValueError("predictions disagree on the number of training points")
        A[p, :n_train] = pred.train_coefficients
        A[p, n_train + p] += pred.test_coefficient
    return A


def step_squared_errors(predictions: Sequence[AffinePrediction], D2) -> np.ndarray:
    """Squared latent distance from each prediction to the true successor.

    ``D2`` covers the ``N`` training points followed by the ``T`` snapshots of
    the test trajectory; prediction ``p`` is made from snapshot ``p`` and is
    compared with snapshot ``p + 1``.
    """
    D2 = np.asarray(D2, dtype=float)
    T = len(predictions) + 1
    n_total = D2.shape[0]
    n_train = n_total - T
    if n_train < 0 or predictions[0].n_train != n_train:
        raise ValueError(
            f"matrix of size {n_total} does not match {predictions[0].n_train} "
            f"training points plus {T} test snapshots"
        )
    A = prediction_matrix(predictions, n_total)
    AD = A @ D2
    targets = n_train + 1 + np.arange(T - 1)
    err = AD[np.arange(T - 1), targets] - 0.5 * np.einsum("ij,ij->i", AD, A)
    worst = float(err.min())
    scale = max(1.0, float(np.abs(D2).max()))
    if worst < -NEGATIVE_TOL * scale:
        warnings.warn(
            f"negative squared distance {worst:.3g} to a prediction "
            "(indefinite geometry); clamped to zero",
            RuntimeWarning,
            stacklevel=2,
        )
    return np.maximum(err, 0.0)


def fold_rmse(predictions: Sequence[AffinePrediction], D2) -> float:
    """Root mean squared latent error over the transitions of one test trajectory."""
    if len(predictions) < 1:
        raise ValueError("need a test trajectory with at least 2 snapshots")
    return float(np.sqrt(step_squared_errors(predictions, D2).mean()))
