import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from graphseries.cli import load_matrix_dir, main
from graphseries.graph_model import LabeledSequence, load_dataset, save_sequences
from graphseries.representations import AlignmentCosts

from test_representations import brute_alignment


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def ba_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ba.json"
    assert run(["generate", "--model", "ba", "--trajectories", 4, "--m", 9, "--seed", 1, "--out", path]) == 0
    return path


def test_generate_ba(tmp_path, capsys):
    out = tmp_path / "ba.json"
    code = run(["generate", "--model", "ba", "--trajectories", 20, "--m0", 3, "--k", 2, "--m", 27, "--seed", 1, "--out", out])
    assert code == 0
    assert "500 snapshots" in capsys.readouterr().out
    assert load_dataset(out).n_snapshots == 500


def test_generate_gol(tmp_path, capsys):
    out = tmp_path / "gol.json"
    argv = ["generate", "--model", "gol", "--trajectories", 30, "--grid", 20, "--steps", 10,
            "--noise", 0.05, "--drop-initial", "--seed", 1, "--out", out]
    assert run(argv) == 0
    assert "300 snapshots" in capsys.readouterr().out
    d = load_dataset(out)
    assert d.n_snapshots == 300 and d.metadata["noise_mode"] == "observation"


def test_generate_usage_errors(tmp_path, capsys):
    assert run(["generate", "--model", "ba", "--seed", 1, "--out", tmp_path / "x.json"]) == 2
    assert "--m" in capsys.readouterr().err
    assert run(["generate", "--model", "ba", "--m", 10, "--out", tmp_path / "x.json"]) == 2
    assert run(["generate", "--model", "tree", "--seed", 1, "--out", tmp_path / "x.json"]) == 2


def test_generate_invalid_params_exit_1(tmp_path, capsys):
    assert run(["generate", "--model", "ba", "--m", 2, "--seed", 1, "--out", tmp_path / "x.json"]) == 1
    assert "m must exceed" in capsys.readouterr().err


def test_matrix_histogram(ba_file, tmp_path, capsys):
    out = tmp_path / "m"
    assert run(["matrix", "--data", ba_file, "--check-psd", "--out", out]) == 0
    assert "no correction needed" in capsys.readouterr().out
    D = np.loadtxt(out / "distances.csv", delimiter=",")
    assert D.shape == (28, 28) and np.all(np.diag(D) == 0)
    meta = json.loads((out / "meta.json").read_text())
    assert meta["lengths"] == [7, 7, 7, 7] and not meta["corrected"]
    assert meta["d_bar"] == pytest.approx(D.sum() / (28 * 27))
    assert meta["min_eigenvalue"] >= -1e-8 * meta["max_abs_eigenvalue"]
    S = np.loadtxt(out / "similarity.csv", delimiter=",")
    assert np.allclose(S, np.exp(-0.5 * (D / meta["d_bar"] / 0.3) ** 2))
    assert np.array_equal(np.loadtxt(out / "kernel.csv", delimiter=","), S)
    series = load_matrix_dir(out)
    assert series.psd_guaranteed and series.lengths == (7, 7, 7, 7)


def test_matrix_alignment_matches_oracle(tmp_path):
    seqs = [LabeledSequence("a:0", "xyz"), LabeledSequence("a:1", "xz"), LabeledSequence("b:0", "yy")]
    save_sequences(seqs, tmp_path / "s.json")
    out = tmp_path / "m"
    assert run(["matrix", "--sequences", tmp_path / "s.json", "--out", out]) == 0
    D = np.loadtxt(out / "distances.csv", delimiter=",")
    costs = AlignmentCosts()
    for i in range(3):
        for j in range(3):
            assert D[i, j] == pytest.approx(brute_alignment(seqs[i].tokens, seqs[j].tokens, costs))
    assert np.array_equal(D, D.T)


def test_evaluate_identity_only(ba_file, tmp_path, capsys):
    out = tmp_path / "e"
    assert run(["evaluate", "--data", ba_file, "--methods", "identity", "--seed", 7, "--out", out]) == 0
    summary = (out / "summary.csv").read_text().strip().splitlines()
    assert len(summary) == 2
    rows = (out / "results.csv").read_text().strip().splitlines()
    assert rows[0] == "method,fold,rmse,runtime_ms,psi,sigma_noise"
    assert len(rows) == 5 and rows[1].endswith(",,")


def test_evaluate_all_methods(ba_file, tmp_path, capsys):
    out = tmp_path / "e"
    argv = ["evaluate", "--data", ba_file, "--methods", "identity,1nn,kr,gpr,rbcm", "--trials", 2, "--seed", 7, "--out", out]
    assert run(argv) == 0
    text = capsys.readouterr().out
    for m in ("identity", "1nn", "kr", "gpr", "rbcm"):
        assert m in text
    assert len((out / "summary.csv").read_text().strip().splitlines()) == 6
    assert len((out / "wilcoxon.csv").read_text().strip().splitlines()) == 11


def test_evaluate_unknown_method(ba_file, tmp_path, capsys):
    code = run(["evaluate", "--data", ba_file, "--methods", "identity,svm", "--seed", 7, "--out", tmp_path])
    assert code == 2
    err = capsys.readouterr().err
    assert "svm" in err and "identity, 1nn, kr, gpr, rbcm" in err


def test_evaluate_missing_file(tmp_path, capsys):
    code = run(["evaluate", "--data", tmp_path / "nope.json", "--seed", 7, "--out", tmp_path])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_evaluate_invalid_dataset(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format_version": 1, "metadata": {}, "trajectories": [
        {"id": "t", "snapshots": [{"nodes": ["a"], "edges": [["a", "b"]]}, {"nodes": ["a"], "edges": []}]},
        {"id": "u", "snapshots": [{"nodes": ["a"], "edges": []}, {"nodes": ["a"], "edges": []}]},
    ]}))
    assert run(["evaluate", "--data", bad, "--seed", 7, "--out", tmp_path]) == 1
    assert "not in nodes" in capsys.readouterr().err


def test_evaluate_requires_seed(ba_file, tmp_path):
    assert run(["evaluate", "--data", ba_file, "--out", tmp_path]) == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "g.json"
    proc = subprocess.run(
        [sys.executable, "-m", "graphseries", "generate", "--model", "gol", "--trajectories", "2",
         "--seed", "3", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "22 snapshots" in proc.stdout
