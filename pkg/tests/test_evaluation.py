import io
import itertools
import math

import numpy as np
import pytest
from scipy import stats

from graphseries.evaluation import (
    METHODS,
    ExperimentResult,
    FoldRecord,
    HyperParams,
    SearchConfig,
    SeriesData,
    loo_cv,
    pairwise_wilcoxon,
    random_search,
    report_table,
    sample_hyperparams,
    wilcoxon_signed_rank,
    write_results_csv,
)
from graphseries.generators import generate_ba_dataset
from graphseries.graph_model import LabeledSequence

FAST = SearchConfig(trials=3, rng_epochs=20)


@pytest.fixture(scope="module")
def ba_small():
    return SeriesData.from_dataset(generate_ba_dataset(4, m0=3, k=2, m=10, seed=2))


def test_series_layout(ba_small):
    assert ba_small.lengths == (8, 8, 8, 8)
    assert ba_small.n_points == 32
    assert ba_small.psd_guaranteed
    blocks = ba_small.blocks()
    assert blocks[1].tolist() == list(range(8, 16))
    sub = ba_small.subset([3, 1])
    assert sub.ids == ("ba3", "ba1")
    assert np.array_equal(sub.distances, ba_small.distances[np.ix_(
        list(range(24, 32)) + list(range(8, 16)), list(range(24, 32)) + list(range(8, 16))
    )])
    assert np.array_equal(sub.features, ba_small.features[list(range(24, 32)) + list(range(8, 16))])
    with pytest.raises(ValueError):
        SeriesData(np.zeros((3, 3)), [2, 2], ["a", "b"])


def test_series_from_sequences():
    seqs = [LabeledSequence("x:0", "ab"), LabeledSequence("y:0", "a"), LabeledSequence("x:1", "abc"), LabeledSequence("y:1", "")]
    s = SeriesData.from_sequences(seqs)
    assert s.ids == ("x", "y") and s.lengths == (2, 2)
    assert not s.psd_guaranteed
    assert s.distances[0, 1] == pytest.approx(1.0)  # "ab" vs "abc": one gap


def test_alignment_representation(ba_small):
    d = generate_ba_dataset(2, m=6, seed=0)
    s = SeriesData.from_dataset(d, representation="alignment")
    assert s.n_points == 8 and not s.psd_guaranteed
    with pytest.raises(ValueError):
        SeriesData.from_dataset(d, representation="spectral")


def test_identity_fold_is_step_rmse(ba_small):
    res = loo_cv(ba_small, "identity", FAST)
    D = ba_small.distances
    for fold, f in enumerate(res.folds):
        b = ba_small.blocks()[fold]
        steps = np.array([D[b[t], b[t + 1]] for t in range(len(b) - 1)]) / f.dbar
        assert f.rmse == pytest.approx(np.sqrt(np.mean(steps**2)), rel=1e-12)
        assert f.params is None


@pytest.mark.parametrize("method", METHODS)
def test_two_trajectories(method):
    data = SeriesData.from_dataset(generate_ba_dataset(2, m=8, seed=4))
    res = loo_cv(data, method, FAST, seed=1, keep_predictions=True)
    assert len(res.folds) == 2
    for f in res.folds:
        assert np.isfinite(f.rmse) and f.rmse >= 0
        for p in f.predictions:
            assert p.is_affine()


@pytest.mark.filterwarnings("ignore:negative squared distance")
def test_search_ignores_held_out_trajectory(ba_small):
    base = loo_cv(ba_small, "gpr", FAST, seed=3)
    D = ba_small.distances.copy()
    held = ba_small.blocks()[0]
    rest = np.setdiff1d(np.arange(D.shape[0]), held)
    D[np.ix_(held, rest)] *= 1.7
    D[np.ix_(rest, held)] *= 1.7
    # the scaled rows are no longer Euclidean, so the kernel may need correction
    moved = SeriesData(D, ba_small.lengths, ba_small.ids, False)
    other = loo_cv(moved, "gpr", FAST, seed=3)
    assert other.folds[0].params == base.folds[0].params
    assert other.folds[0].dbar == base.folds[0].dbar


def test_deterministic(ba_small):
    a = loo_cv(ba_small, "rbcm", FAST, seed=5)
    b = loo_cv(ba_small, "rbcm", FAST, seed=5)
    assert a.to_json(include_timing=False) == b.to_json(include_timing=False)
    c = loo_cv(ba_small, "rbcm", FAST, seed=5, jobs=2)
    assert a.to_json(include_timing=False) == c.to_json(include_timing=False)


def test_loo_input_checks(ba_small):
    with pytest.raises(ValueError, match="choose from"):
        loo_cv(ba_small, "svm")
    with pytest.raises(ValueError):
        loo_cv(ba_small.subset([0]), "identity")


def test_sampling_ranges():
    rng = np.random.default_rng(0)
    cfg = SearchConfig()
    for dbar in (1.0, 3.5):
        hps = [sample_hyperparams(rng, dbar, cfg) for _ in range(1000)]
        psi = np.array([h.psi for h in hps])
        noise = np.array([h.sigma_noise for h in hps])
        assert psi.min() >= 0.05 * dbar and psi.max() <= dbar
        assert noise.min() >= 1e-3 * dbar and noise.max() <= dbar
        # log-uniform: about half the draws fall below the geometric midpoint
        assert 0.4 < np.mean(noise < math.sqrt(1e-3) * dbar) < 0.6
        assert all(h.sigma_prior == dbar for h in hps)


def test_search_picks_lowest_score(ba_small):
    train = ba_small.subset([0, 1, 2])
    best, scores, cands = random_search(train, "gpr", trials=4, dbar=train.distances.max(), seed=1, return_scores=True)
    assert best == cands[int(np.argmin(scores))]
    one, scores1, cands1 = random_search(train, "gpr", trials=1, seed=1, return_scores=True)
    assert one == cands1[0] and len(scores1) == 1
    kr = random_search(train, "kr", trials=2, seed=1)
    assert kr.sigma_noise is None and kr.psi is not None


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(psi=0.0)
    with pytest.raises(ValueError):
        HyperParams(clusters=0)


# -- Wilcoxon ---------------------------------------------------------------------


def brute_wilcoxon(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))
    w = ranks[d > 0].sum()
    null = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=len(d))]
    null = np.array(null)
    p = 2 * min(np.mean(null <= w + 1e-9), np.mean(null >= w - 1e-9))
    return min(w, ranks.sum() - w), min(1.0, p)


def test_identical_samples():
    r = wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    assert r.p_value == 1.0 and r.all_zero


def test_constant_shift():
    a = np.arange(8.0)
    assert wilcoxon_signed_rank(a + 0.5, a).p_value == pytest.approx(0.0078125)
    assert wilcoxon_signed_rank(a, a + 0.5).p_value == pytest.approx(0.0078125)


def test_textbook_pairs():
    a = [125, 115, 130, 140, 140, 115, 140, 125, 140, 135]
    b = [110, 122, 125, 120, 140, 124, 123, 137, 135, 145]
    r = wilcoxon_signed_rank(a, b)
    stat, p = brute_wilcoxon(a, b)
    assert r.statistic == stat and r.p_value == pytest.approx(p)
    assert r.n == 9


def test_exact_matches_enumeration_and_scipy():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(3, 11))
        a, b = rng.normal(size=n), rng.normal(size=n)
        r = wilcoxon_signed_rank(a, b)
        stat, p = brute_wilcoxon(a, b)
        assert r.statistic == stat and r.p_value == pytest.approx(p)
        ref = stats.wilcoxon(a, b, method="exact")
        assert r.p_value == pytest.approx(ref.pvalue)


def test_exact_and_normal_branches_agree():
    import graphseries.evaluation as ev

    rng = np.random.default_rng(2)
    for _ in range(200):
        a = rng.normal(size=15)
        b = a + rng.normal(rng.uniform(0, 1), 1, size=15)
        exact = wilcoxon_signed_rank(a, b).p_value
        old = ev.EXACT_MAX_N
        try:
            ev.EXACT_MAX_N = 0
            approx = wilcoxon_signed_rank(a, b).p_value
        finally:
            ev.EXACT_MAX_N = old
        assert abs(exact - approx) <= 0.02


def test_normal_branch_matches_scipy():
    rng = np.random.default_rng(3)
    a = rng.normal(size=25)
    b = a + rng.normal(0.4, 1, size=25)
    r = wilcoxon_signed_rank(a, b)
    ref = stats.wilcoxon(a, b, method="approx", correction=True)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    assert r.statistic == pytest.approx(ref.statistic)


def test_mismatched_lengths():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])


# -- reporting -----------------------------------------------------------------------


def fake_result(method, rmses):
    return ExperimentResult(method, [FoldRecord(str(i), r, 0.1, None, 1.0) for i, r in enumerate(rmses)])


def test_table_single_method():
    text, csv_text = report_table([fake_result("identity", [0.1, 0.3])])
    assert text.count("identity") == 1
    assert "0.200 (0.141)*" in text
    assert len(csv_text.strip().splitlines()) == 2


def test_table_tie():
    text, _ = report_table([fake_result("kr", [0.2, 0.4]), fake_result("gpr", [0.4, 0.2])])
    lines = text.splitlines()
    assert "*" in lines[2] and "*" not in lines[3]
    assert "tie" in text


def test_results_csv_and_pairs():
    results = [fake_result("identity", [0.3, 0.4, 0.5]), fake_result("kr", [0.1, 0.2, 0.3])]
    buf = io.StringIO()
    write_results_csv(results, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "method,fold,rmse,runtime_ms,psi,sigma_noise"
    assert len(lines) == 7
    pairs = pairwise_wilcoxon(results)
    assert len(pairs) == 1 and pairs[0]["method_a"] == "identity"
