"""Leave-one-trajectory-out evaluation with nested random hyperparameter search."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .graph_model import Dataset, LabeledSequence, graph_to_sequence, group_sequences
from .latent import AffinePrediction, fold_rmse
from .regressors import (
    TrainingIndex,
    fit_gp,
    fit_rbcm,
    predict_1nn,
    predict_gp_many,
    predict_identity,
    predict_kr,
)
from .representations import (
    AlignmentCosts,
    alignment_distance_matrix,
    histogram_distance_matrix,
    kernel_from_similarity,
    offdiagonal_mean,
    path_features,
    rbf_similarity,
    symmetrize,
)
from .clustering import relational_neural_gas

METHODS = ("identity", "1nn", "kr", "gpr", "rbcm")
SEARCHED = {"kr", "gpr", "rbcm"}
NEEDS_KERNEL = {"gpr", "rbcm"}


@dataclass(frozen=True)
class HyperParams:
    psi: float | None = None
    sigma_noise: float | None = None
    sigma_prior: float | None = None
    clusters: int | None = None

    def __post_init__(self):
        for name in ("psi", "sigma_noise", "sigma_prior"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.clusters is not None and self.clusters < 1:
            raise ValueError("clusters must be >= 1")


@dataclass(frozen=True)
class SearchConfig:
    trials: int = 10
    psi_range: tuple[float, float] = (0.05, 1.0)  # multiples of d_bar
    noise_range: tuple[float, float] = (1e-3, 1.0)  # multiples of d_bar
    prior_std: float = 1.0  # multiple of d_bar
    points_per_cluster: int = 100
    rng_epochs: int = 100
    rng_subset: int | None = None


# -- data --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeriesData:
    """Pairwise distances between all snapshots plus the trajectory layout.

    Points are ordered trajectory by trajectory. ``psd_guaranteed`` marks
    distances that are Euclidean in an explicit feature space, for which the
    RBF similarity is a kernel without correction.
    """

    distances: np.ndarray
    lengths: tuple[int, ...]
    ids: tuple[str, ...]
    psd_guaranteed: bool = False
    features: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        D = np.asarray(self.distances, dtype=float)
        object.__setattr__(self, "distances", D)
        object.__setattr__(self, "lengths", tuple(int(x) for x in self.lengths))
        object.__setattr__(self, "ids", tuple(str(x) for x in self.ids))
        if D.shape != (sum(self.lengths),) * 2:
            raise ValueError(
                f"distance matrix {D.shape} does not match {sum(self.lengths)} snapshots"
            )
        if len(self.ids) != len(self.lengths):
            raise ValueError("need one id per trajectory")

    @property
    def n_points(self) -> int:
        return self.distances.shape[0]

    @property
    def n_trajectories(self) -> int:
        return len(self.lengths)

    def blocks(self) -> list[np.ndarray]:
        starts = np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(int)
        return [np.arange(s, s + n) for s, n in zip(starts, self.lengths)]

    def subset(self, trajectories: Sequence[int]) -> "SeriesData":
        blocks = self.blocks()
        idx = np.concatenate([blocks[j] for j in trajectories]) if trajectories else np.arange(0)
        return SeriesData(
            self.distances[np.ix_(idx, idx)],
            [self.lengths[j] for j in trajectories],
            [self.ids[j] for j in trajectories],
            self.psd_guaranteed,
            None if self.features is None else self.features[idx],
            dict(self.metadata),
        )

    @classmethod
    def from_dataset(
        cls,
        d: Dataset,
        representation: str = "histogram",
        costs: AlignmentCosts | None = None,
        count_disconnected: bool = True,
    ) -> "SeriesData":
        graphs = d.graphs()
        ids = [t.id for t in d.trajectories]
        meta = dict(d.metadata, representation=representation)
        if representation == "histogram":
            H = path_features(graphs, count_disconnected)
            return cls(histogram_distance_matrix(H), d.lengths, ids, True, H, meta)
        if representation == "alignment":
            seqs = [graph_to_sequence(g) for g in graphs]
            D = symmetrize(alignment_distance_matrix(seqs, costs or AlignmentCosts()))
            return cls(D, d.lengths, ids, False, None, meta)
        raise ValueError(f"unknown representation {representation!r}")

    @classmethod
    def from_sequences(
        cls, seqs: Sequence[LabeledSequence], costs: AlignmentCosts | None = None
    ) -> "SeriesData":
        ids, ordered, lengths = group_sequences(seqs)
        D = symmetrize(alignment_distance_matrix(ordered, costs or AlignmentCosts()))
        return cls(D, lengths, ids, False, None, {"representation": "alignment"})


# -- one prediction round ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Geometry:
    """Normalized distances and (optionally) kernels over a fixed point set."""

    dist: np.ndarray
    sim: np.ndarray | None = None
    kern: np.ndarray | None = None

    @classmethod
    def build(cls, dist, method, psi, psd_guaranteed):
        if method not in SEARCHED:
            return cls(dist)
        sim = rbf_similarity(dist, psi)
        kern = kernel_from_similarity(sim, assume_psd=psd_guaranteed) if method in NEEDS_KERNEL else None
        return cls(dist, sim, kern)


def _predict_trajectory(method, geom, train_blocks, test_block, hp, labels=None):
    """Predict every transition of ``test_block`` from the training blocks.

    Returns the predictions, the point order (training points then the test
    trajectory) and the prediction wall time in seconds.
    """
    order = np.concatenate(train_blocks)
    n_train = order.shape[0]
    pairs = TrainingIndex.from_lengths([len(b) for b in train_blocks])
    preds_at = order[pairs.predecessors]
    inputs = test_block[:-1]
    if method == "identity":
        t0 = time.perf_counter()
        preds = [predict_identity(n_train) for _ in inputs]
    elif method == "1nn":
        rows = geom.dist[np.ix_(inputs, preds_at)]
        t0 = time.perf_counter()
        preds = [predict_1nn(r, pairs) for r in rows]
    elif method == "kr":
        rows = geom.sim[np.ix_(inputs, preds_at)]
        t0 = time.perf_counter()
        preds = [predict_kr(r, pairs) for r in rows]
    elif method == "gpr":
        model = fit_gp(geom.kern[np.ix_(preds_at, preds_at)], hp.sigma_noise, pairs)
        rows = geom.kern[np.ix_(inputs, preds_at)]
        t0 = time.perf_counter()
        preds = [p.mean for p in predict_gp_many(model, rows, geom.kern[inputs, inputs])]
    elif method == "rbcm":
        model = fit_rbcm(
            geom.kern[np.ix_(preds_at, preds_at)],
            pairs,
            labels[preds_at],
            hp.sigma_noise,
            hp.sigma_prior,
        )
        rows = geom.kern[np.ix_(inputs, preds_at)]
        t0 = time.perf_counter()
        preds = [p.mean for p in model.predict_many(rows, geom.kern[inputs, inputs])]
    else:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    elapsed = time.perf_counter() - t0
    return preds, np.concatenate([order, test_block]), elapsed


def _score(method, geom, blocks, hp, labels, sq) -> float:
    """Mean RMSE of a nested leave-one-trajectory-out round over ``blocks``."""
    scores = []
    for i, test in enumerate(blocks):
        train = [b for j, b in enumerate(blocks) if j != i] or [test]
        preds, full, _ = _predict_trajectory(method, geom, train, test, hp, labels)
        scores.append(fold_rmse(preds, sq[np.ix_(full, full)]))
    return float(np.mean(scores))


def sample_hyperparams(rng, dbar: float, config: SearchConfig, clusters: int = 1) -> HyperParams:
    """Bandwidth uniform, noise log-uniform, both scaled by ``dbar``."""
    lo, hi = config.psi_range
    psi = rng.uniform(lo * dbar, hi * dbar)
    nlo, nhi = config.noise_range
    sigma = math.exp(rng.uniform(math.log(nlo * dbar), math.log(nhi * dbar)))
    return HyperParams(float(psi), float(sigma), config.prior_std * dbar, clusters)


def random_search(
    train: SeriesData,
    method: str,
    trials: int = 10,
    dbar: float = 1.0,
    seed=0,
    config: SearchConfig = SearchConfig(),
    labels: np.ndarray | None = None,
    return_scores: bool = False,
):
    """Pick the candidate with the lowest nested LOO RMSE (first one on ties).

    ``train`` holds distances in the units ``dbar`` refers to. With a single
    training trajectory, candidates are scored by refitting on it and
    predicting it again.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    clusters = 1 if labels is None else int(labels.max()) + 1
    candidates = [sample_hyperparams(rng, dbar, config, clusters) for _ in range(trials)]
    blocks = train.blocks()
    sq = train.distances**2
    scores = []
    for hp in candidates:
        geom = _Geometry.build(train.distances, method, hp.psi, train.psd_guaranteed)
        scores.append(_score(method, geom, blocks, hp, labels, sq))
    best = candidates[int(np.argmin(scores))]
    if method == "kr":
        best = HyperParams(best.psi)
    return (best, scores, candidates) if return_scores else best


# -- leave-one-out -----------------------------------------------------------


@dataclass
class FoldRecord:
    trajectory: str
    rmse: float
    runtime_ms: float
    params: HyperParams | None
    dbar: float
    order: np.ndarray | None = None
    predictions: list[AffinePrediction] | None = None


@dataclass
class ExperimentResult:
    method: str
    folds: list[FoldRecord]
    metadata: dict = field(default_factory=dict)

    @property
    def rmse(self) -> np.ndarray:
        return np.array([f.rmse for f in self.folds])

    @property
    def runtime_ms(self) -> np.ndarray:
        return np.array([f.runtime_ms for f in self.folds])

    def rows(self, include_timing: bool = True) -> list[dict]:
        out = []
        for i, f in enumerate(self.folds):
            p = f.params or HyperParams()
            row = {
                "method": self.method,
                "fold": i,
                "rmse": repr(float(f.rmse)),
                "runtime_ms": repr(float(f.runtime_ms)) if include_timing else "",
                "psi": "" if p.psi is None else repr(p.psi),
                "sigma_noise": "" if p.sigma_noise is None else repr(p.sigma_noise),
            }
            out.append(row)
        return out

    def to_json(self, include_timing: bool = True) -> str:
        doc = {
            "method": self.method,
            "metadata": {str(k): str(v) for k, v in self.metadata.items()},
            "folds": [
                {
                    "trajectory": f.trajectory,
                    "rmse": f.rmse,
                    "runtime_ms": f.runtime_ms if include_timing else None,
                    "params": None if f.params is None else asdict(f.params),
                    "dbar": f.dbar,
                }
                for f in self.folds
            ],
        }
        return json.dumps(doc, sort_keys=True)


RESULT_FIELDS = ["method", "fold", "rmse", "runtime_ms", "psi", "sigma_noise"]


def write_results_csv(results: Sequence[ExperimentResult], stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=RESULT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerows(r.rows())


def _fold_seed(seed, fold):
    return np.random.SeedSequence([int(seed), int(fold)])


def _run_fold(data: SeriesData, method: str, fold: int, config: SearchConfig, seed, keep: bool):
    M = data.n_trajectories
    others = [j for j in range(M) if j != fold]
    blocks = data.blocks()
    train_idx = np.concatenate([blocks[j] for j in others])
    dbar = offdiagonal_mean(data.distances[np.ix_(train_idx, train_idx)])
    if not dbar > 0:
        dbar = 1.0
    seeds = _fold_seed(seed, fold).spawn(2)

    labels = None
    train = data.subset(others)
    train = SeriesData(
        train.distances / dbar, train.lengths, train.ids, train.psd_guaranteed, None, train.metadata
    )
    if method == "rbcm":
        pairs = TrainingIndex.from_lengths(train.lengths)
        n_pred = len(pairs)
        clusters = max(1, n_pred // config.points_per_cluster)
        sq_pred = train.distances[np.ix_(pairs.predecessors, pairs.predecessors)] ** 2
        clustering = relational_neural_gas(
            sq_pred,
            clusters,
            epochs=config.rng_epochs,
            seed=seeds[0],
            subset=config.rng_subset,
        )
        labels = np.full(train.n_points, -1, dtype=np.int64)
        labels[pairs.predecessors] = clustering.assignments

    if method in SEARCHED:
        hp = random_search(train, method, config.trials, 1.0, seeds[1], config, labels)
    else:
        hp = None

    # final fit on all training trajectories; the held-out rows enter only here
    full_idx = np.concatenate([train_idx, blocks[fold]])
    dist = data.distances[np.ix_(full_idx, full_idx)] / dbar
    n_train = train_idx.shape[0]
    local_blocks = train.blocks()
    test_block = np.arange(n_train, n_train + data.lengths[fold])
    geom = _Geometry.build(dist, method, hp.psi if hp else None, data.psd_guaranteed)
    if labels is not None:
        labels = np.concatenate([labels, np.full(test_block.shape[0], -1, dtype=np.int64)])
    preds, order, elapsed = _predict_trajectory(method, geom, local_blocks, test_block, hp, labels)
    rmse = fold_rmse(preds, dist[np.ix_(order, order)] ** 2)
    return FoldRecord(
        data.ids[fold],
        rmse,
        1000.0 * elapsed / len(preds),
        hp,
        dbar,
        full_idx[order] if keep else None,
        preds if keep else None,
    )


def loo_cv(
    data: SeriesData,
    method: str,
    config: SearchConfig = SearchConfig(),
    seed: int = 0,
    jobs: int = 1,
    keep_predictions: bool = False,
) -> ExperimentResult:
    """Hold out each trajectory in turn, tune on the rest, predict it.

    With ``keep_predictions`` each fold also stores its predictions and the
    global point indices their coefficients refer to.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if data.n_trajectories < 2:
        raise ValueError("leave-one-out needs at least 2 trajectories")
    if min(data.lengths) < 2:
        raise ValueError("every trajectory needs at least 2 snapshots")
    folds = range(data.n_trajectories)
    args = [(data, method, j, config, seed, keep_predictions) for j in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_fold, *zip(*args)))
    else:
        records = [_run_fold(*a) for a in args]
    return ExperimentResult(method, records, dict(data.metadata))


# -- statistics and reporting ------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int
    all_zero: bool = False


EXACT_MAX_N = 15


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided paired signed-rank test.

    Zero differences are dropped and tied magnitudes get average ranks. The
    statistic is ``min(W+, W-)``. For at most 15 non-zero differences the
    p-value comes from enumerating all sign patterns; beyond that a normal
    approximation with tie-corrected variance and continuity correction is
    used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = d.shape[0]
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= EXACT_MAX_N:
        signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        null = signs @ ranks
        eps = 1e-9
        lower = np.mean(null <= w_plus + eps)
        upper = np.mean(null >= w_plus - eps)
        p = min(1.0, 2.0 * min(lower, upper))
    else:
        mean = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
        # continuity correction keeps the two branches within 0.011 at n = 15
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, 2.0 * norm.sf(z))
    return WilcoxonResult(stat, float(p), n)


def pairwise_wilcoxon(results: Sequence[ExperimentResult]) -> list[dict]:
    out = []
    for r1, r2 in itertools.combinations(results, 2):
        w = wilcoxon_signed_rank(r1.rmse, r2.rmse)
        out.append(
            {
                "method_a": r1.method,
                "method_b": r2.method,
                "statistic": w.statistic,
                "p_value": w.p_value,
                "n_nonzero": w.n,
            }
        )
    return out


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def report_table(results: Sequence[ExperimentResult]) -> tuple[str, str]:
    """Summary table as aligned text and as CSV.

    The lowest mean RMSE is marked with ``*``; on ties the first listed
    method gets the mark and a note is appended.
    """
    means = [float(np.mean(r.rmse)) for r in results]
    best = int(np.argmin(means)) if results else -1
    tie = sum(m == means[best] for m in means) > 1 if results else False

    rows = []
    for i, r in enumerate(results):
        rows.append(
            {
                "method": r.method,
                "rmse_mean": means[i],
                "rmse_std": _std(r.rmse),
                "runtime_ms_mean": float(np.mean(r.runtime_ms)),
                "runtime_ms_std": _std(r.runtime_ms),
                "best": i == best,
            }
        )

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["method"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)

    header = f"{'method':<10} {'RMSE':>18} {'runtime [ms]':>20}"
    lines = [header, "-" * len(header)]
    for row in rows:
        rmse = f"{row['rmse_mean']:.3f} ({row['rmse_std']:.3f})" + ("*" if row["best"] else " ")
        rt = f"{row['runtime_ms_mean']:.3f} ({row['runtime_ms_std']:.3f})"
        lines.append(f"{row['method']:<10} {rmse:>18} {rt:>20}")
    if tie:
        lines.append("* tie for lowest mean RMSE; first listed method marked")
    return "\n".join(lines) + "\n", buf.getvalue()
