"""Relational neural gas: prototype clustering from squared dissimilarities.

Prototypes are convex combinations of data points, so their distances to the
data follow from ``D2`` alone (see :mod:`graphseries.latent`). Batch updates
use rank-based neighbourhood weights ``exp(-rank / lam)`` with ``lam``
annealed exponentially from ``C / 2`` to ``0.01``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class RngClustering:
    assignments: np.ndarray  # cluster id in 0..C-1 for every point
    prototypes: np.ndarray  # C x N convex coefficient vectors

    @property
    def n_clusters(self) -> int:
        return self.prototypes.shape[0]

    def quantization_error(self, D2) -> float:
        d = prototype_distances(self.prototypes, D2)
        return float(d[self.assignments, np.arange(d.shape[1])].sum())


def prototype_distances(prototypes: np.ndarray, D2, columns=None) -> np.ndarray:
    """Squared distances, shape (C, N), from each prototype to each point.

    ``columns`` restricts the prototypes' support to a subset of points; then
    ``D2`` needs rows for all points but only those columns.
    """
    D2 = np.asarray(D2, dtype=float)
    if columns is None:
        AD = prototypes @ D2
        self_term = np.einsum("ij,ij->i", AD, prototypes)
    else:
        A = prototypes[:, columns]
        AD = A @ D2[:, columns].T
        self_term = np.einsum("ij,ij->i", A @ D2[np.ix_(columns, columns)], A)
    return AD - 0.5 * self_term[:, None]


def _polish(A: np.ndarray, D2: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Hard-assignment batch updates after annealing.

    A prototype that wins no point is moved onto the point worst served by
    its current prototype, so no cluster ends up empty.
    """
    C, m = A.shape
    assign = None
    for _ in range(max_iter):
        dist = prototype_distances(A, D2)
        new = np.argmin(dist, axis=0)
        err = dist[new, np.arange(m)]
        taken = set()
        for c in range(C):
            if np.any(new == c):
                continue
            order = np.argsort(-err, kind="stable")
            for i in order:
                if i not in taken and np.sum(new == new[i]) > 1:
                    new[i] = c
                    err[i] = 0.0
                    taken.add(int(i))
                    break
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        updated = A.copy()
        for c in range(C):
            members = np.flatnonzero(assign == c)
            if members.size:
                updated[c] = 0.0
                updated[c, members] = 1.0 / members.size
        A = updated
    return A


def relational_neural_gas(
    D2,
    n_clusters: int,
    epochs: int = 100,
    seed: int = 0,
    subset: int | None = None,
    lambda_final: float = 0.01,
) -> RngClustering:
    """Cluster points given their squared pairwise dissimilarities.

    With ``subset`` set, prototypes are trained on that many randomly chosen
    points and the remaining points are only assigned to the nearest
    prototype, which keeps the cost linear in the number of points.
    """
    D2 = np.asarray(D2, dtype=float)
    n = D2.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n_clusters > n:
        raise ValueError(f"n_clusters={n_clusters} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    if subset is not None and subset < n:
        if subset < n_clusters:
            raise ValueError("subset must hold at least n_clusters points")
        train = np.sort(rng.choice(n, size=subset, replace=False))
    else:
        train = np.arange(n)
    Dt = D2[np.ix_(train, train)]
    m = train.shape[0]

    A = np.zeros((n_clusters, m))
    A[np.arange(n_clusters), rng.choice(m, size=n_clusters, replace=False)] = 1.0
    lam0 = n_clusters / 2.0
    for e in range(1, epochs + 1):
        lam = lam0 * (lambda_final / lam0) ** (e / epochs)
        dist = prototype_distances(A, Dt)
        ranks = np.argsort(np.argsort(dist, axis=0, kind="stable"), axis=0, kind="stable")
        H = np.exp(-ranks / lam)
        A = H / H.sum(axis=1, keepdims=True)
    A = _polish(A, Dt)

    prototypes = np.zeros((n_clusters, n))
    prototypes[:, train] = A
    dist = prototype_distances(prototypes, D2, columns=train)
    return RngClustering(np.argmin(dist, axis=0), prototypes)
