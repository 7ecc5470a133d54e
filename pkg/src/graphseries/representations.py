"""Graph features, pairwise dissimilarities and the conversion to kernels.

The chain used for prediction is::

    dissimilarity D --symmetrize--> D --normalize--> D / d_bar
        --rbf_similarity--> S --eigenvalue_correct_clip--> K
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .graph_model import LabeledSequence, TemporalGraph


class DegenerateInputError(ValueError):
    pass


# -- shortest paths ----------------------------------------------------------


def floyd_warshall(g: TemporalGraph) -> np.ndarray:
    """All-pairs shortest path lengths with unit edge weights.

    Rows and columns follow ``g.nodes``; unreachable pairs are ``inf``.
    """
    n = g.n_nodes
    index = {v: i for i, v in enumerate(g.nodes)}
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v in g.edges:
        if u != v and u in index and v in index:
            i, j = index[u], index[v]
            dist[i, j] = dist[j, i] = 1.0
    for k in range(n):
        dist = np.minimum(dist, dist[:, k : k + 1] + dist[k : k + 1, :])
    return dist


def _finite_pair_lengths(g: TemporalGraph) -> np.ndarray:
    dist = floyd_warshall(g)
    upper = dist[np.triu_indices(g.n_nodes, k=1)]
    return upper[np.isfinite(upper)].astype(np.int64)


def max_path_length(graphs: Sequence[TemporalGraph]) -> int:
    """Largest finite shortest-path length over all graphs (at least 1)."""
    best = 1
    for g in graphs:
        lengths = _finite_pair_lengths(g)
        if lengths.size:
            best = max(best, int(lengths.max()))
    return best


def path_histogram(g: TemporalGraph, max_len: int) -> np.ndarray:
    """Count unordered node pairs by shortest-path length.

    ``out[l - 1]`` is the number of pairs at distance ``l``. Self-distances
    and disconnected pairs are not counted.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    lengths = _finite_pair_lengths(g)
    if lengths.size and lengths.max() > max_len:
        raise ValueError(
            f"graph has a shortest path of length {int(lengths.max())} > max_len={max_len}"
        )
    if not lengths.size:
        return np.zeros(max_len, dtype=np.int64)
    return np.bincount(lengths - 1, minlength=max_len).astype(np.int64)


def path_histograms(graphs: Sequence[TemporalGraph], max_len: int | None = None) -> np.ndarray:
    """Stack histograms for a collection, sized to its largest diameter."""
    if max_len is None:
        max_len = max_path_length(graphs)
    return np.array([path_histogram(g, max_len) for g in graphs], dtype=np.int64).reshape(
        len(graphs), max_len
    )


def disconnected_pairs(g: TemporalGraph) -> int:
    """Number of unordered node pairs with no connecting path."""
    n = g.n_nodes
    dist = floyd_warshall(g)
    return int(np.isinf(dist[np.triu_indices(n, k=1)]).sum())


def path_features(
    graphs: Sequence[TemporalGraph], count_disconnected: bool = True
) -> np.ndarray:
    """Feature vectors: the path-length histogram, optionally followed by the
    number of disconnected pairs as one extra coordinate."""
    H = path_histograms(graphs)
    if not count_disconnected:
        return H
    extra = np.array([disconnected_pairs(g) for g in graphs], dtype=np.int64)
    return np.column_stack([H, extra])


def histogram_distance_matrix(hs) -> np.ndarray:
    """Euclidean distances between histogram rows."""
    rows = [np.asarray(h, dtype=float) for h in hs]
    if rows and len({r.shape for r in rows}) != 1:
        raise ValueError("histograms must all have the same length")
    X = np.array(rows, dtype=float).reshape(len(rows), -1)
    # explicit differences rather than the Gram trick: exact for integer counts
    return np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))


# -- sequence alignment ------------------------------------------------------


def unit_substitution(a: str, b: str) -> float:
    return 0.0 if a == b else 1.0


@dataclass(frozen=True)
class AlignmentCosts:
    substitution: Callable[[str, str], float] = field(default=unit_substitution)
    gap_open: float = 0.5
    gap_extend: float = 0.5

    def __post_init__(self):
        if self.gap_open < 0 or self.gap_extend < 0:
            raise ValueError("gap costs must be non-negative")

    def gap(self, length: int) -> float:
        return self.gap_open + length * self.gap_extend if length else 0.0


def affine_alignment_distance(
    a: LabeledSequence | Sequence[str],
    b: LabeledSequence | Sequence[str],
    costs: AlignmentCosts = AlignmentCosts(),
) -> float:
    """Global alignment cost with affine gaps (Gotoh's three-layer recursion).

    ``match[i][j]`` ends with a[i-1] aligned to b[j-1], ``dela[i][j]`` with
    a[i-1] against a gap, ``insb[i][j]`` with b[j-1] against a gap. A gap run
    of length ``g`` costs ``gap_open + g * gap_extend``; a deletion run directly
    followed by an insertion run pays two openings.
    """
    a = a.tokens if isinstance(a, LabeledSequence) else tuple(a)
    b = b.tokens if isinstance(b, LabeledSequence) else tuple(b)
    n, m = len(a), len(b)
    go, ge = costs.gap_open, costs.gap_extend
    sub = costs.substitution
    inf = float("inf")

    match_prev = [inf] * (m + 1)
    dela_prev = [inf] * (m + 1)
    insb_prev = [inf] * (m + 1)
    match_prev[0] = 0.0
    for j in range(1, m + 1):
        insb_prev[j] = go + j * ge
    for i in range(1, n + 1):
        match = [inf] * (m + 1)
        dela = [inf] * (m + 1)
        insb = [inf] * (m + 1)
        dela[0] = go + i * ge
        ai = a[i - 1]
        for j in range(1, m + 1):
            best_prev = min(match_prev[j - 1], dela_prev[j - 1], insb_prev[j - 1])
            match[j] = best_prev + sub(ai, b[j - 1])
            dela[j] = min(
                match_prev[j] + go + ge, dela_prev[j] + ge, insb_prev[j] + go + ge
            )
            insb[j] = min(
                match[j - 1] + go + ge, insb[j - 1] + ge, dela[j - 1] + go + ge
            )
        match_prev, dela_prev, insb_prev = match, dela, insb
    return float(min(match_prev[m], dela_prev[m], insb_prev[m]))


def alignment_distance_matrix(
    seqs: Sequence[LabeledSequence | Sequence[str]], costs: AlignmentCosts = AlignmentCosts()
) -> np.ndarray:
    n = len(seqs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = affine_alignment_distance(seqs[i], seqs[j], costs)
    return out


# -- dissimilarity -> similarity -> kernel ----------------------------------


def symmetrize(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    out = 0.5 * (m + m.T)
    np.fill_diagonal(out, 0.0)
    return out


def offdiagonal_mean(m: np.ndarray) -> float:
    n = m.shape[0]
    if n < 2:
        return 0.0
    return float((m.sum() - np.trace(m)) / (n * (n - 1)))


def normalize_distances(m) -> tuple[np.ndarray, float]:
    """Divide by the mean off-diagonal distance; returns ``(scaled, mean)``."""
    m = np.asarray(m, dtype=float)
    mean = offdiagonal_mean(m)
    if not mean > 0:
        raise DegenerateInputError("cannot normalize: all pairwise distances are zero")
    return m / mean, mean


def rbf_similarity(d, bandwidth: float):
    """``exp(-0.5 * (d / bandwidth)**2)``; works entry-wise on arrays."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    out = np.exp(-0.5 * (np.asarray(d, dtype=float) / bandwidth) ** 2)
    return float(out) if out.ndim == 0 else out


def eigenvalue_extremes(s: np.ndarray) -> tuple[float, float]:
    """Smallest eigenvalue and largest absolute eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(np.asarray(s, dtype=float))
    if not w.size:
        return 0.0, 0.0
    return float(w[0]), float(np.max(np.abs(w)))


def is_psd(s: np.ndarray, rtol: float = 1e-8) -> bool:
    lo, hi = eigenvalue_extremes(s)
    return lo >= -rtol * hi


def eigenvalue_correct_clip(s) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by zeroing negative eigenvalues."""
    s = np.asarray(s, dtype=float)
    s = 0.5 * (s + s.T)
    w, U = np.linalg.eigh(s)
    if w.size == 0 or w[0] >= 0:
        return s
    w = np.clip(w, 0.0, None)
    k = (U * w) @ U.T
    return 0.5 * (k + k.T)


def kernel_from_similarity(s: np.ndarray, assume_psd: bool = False, rtol: float = 1e-8) -> np.ndarray:
    """Use ``s`` as kernel when it is PSD (or known to be); clip otherwise."""
    if assume_psd or is_psd(s, rtol):
        return s
    return eigenvalue_correct_clip(s)


# -- matrix interchange ------------------------------------------------------


def save_matrix(m: np.ndarray, path) -> None:
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("refusing to persist a matrix with non-finite entries")
    np.savetxt(path, m, delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    m = np.loadtxt(Path(path), delimiter=",", dtype=float, ndmin=2)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{path}: matrix is not square ({m.shape})")
    return m
