"""Command-line front end: ``generate``, ``matrix`` and ``evaluate``.

Exit codes: 0 on success, 1 on runtime or numerical failure, 2 on usage
errors. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .evaluation import (
    METHODS,
    SearchConfig,
    SeriesData,
    loo_cv,
    pairwise_wilcoxon,
    report_table,
    write_results_csv,
)
from .generators import NOISE_MODES, PATTERNS, generate_ba_dataset, generate_gol_dataset
from .graph_model import DatasetFormatError, load_dataset, load_sequences, save_dataset, validate_dataset
from .regressors import NumericalError
from .representations import (
    AlignmentCosts,
    DegenerateInputError,
    eigenvalue_extremes,
    kernel_from_similarity,
    load_matrix,
    normalize_distances,
    rbf_similarity,
    save_matrix,
)

log = logging.getLogger("graphseries")


class UsageError(Exception):
    pass


# -- argument parsing --------------------------------------------------------


def _parse_methods(text: str) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    if not names:
        raise UsageError("--methods needs at least one method")
    unknown = [m for m in names if m not in METHODS]
    if unknown:
        raise UsageError(
            f"unknown method(s) {', '.join(unknown)}; valid methods: {', '.join(METHODS)}"
        )
    return list(dict.fromkeys(names))


def _add_input(p: argparse.ArgumentParser, matrix_dir: bool) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="graph dataset (JSON)")
    src.add_argument("--sequences", type=Path, help="labeled node sequences (JSON)")
    if matrix_dir:
        src.add_argument("--matrix-dir", type=Path, help="output directory of `matrix`")
    p.add_argument("--representation", choices=("histogram", "alignment"), default="histogram")
    p.add_argument("--gap-open", type=float, default=0.5)
    p.add_argument("--gap-extend", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphseries", description="Predict the next graph of a graph time series."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a synthetic dataset")
    g.add_argument("--model", choices=("ba", "gol"), required=True)
    g.add_argument("--trajectories", type=int, help="default 20 (ba) or 30 (gol)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--m0", type=int, default=3)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--m", type=int, help="final node count (ba, required)")
    g.add_argument("--grid", type=int, default=20, help="side length of the square grid")
    g.add_argument("--steps", type=int, default=10)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--noise-mode", choices=NOISE_MODES, default="observation")
    g.add_argument("--patterns", help=f"comma list out of {', '.join(PATTERNS)}")
    g.add_argument("--drop-initial", action="store_true")

    m = sub.add_parser("matrix", help="distance, similarity and kernel matrices")
    _add_input(m, matrix_dir=False)
    m.add_argument("--psi", type=float, default=0.3, help="RBF bandwidth in units of d_bar")
    m.add_argument("--check-psd", action="store_true", help="report the smallest eigenvalue")
    m.add_argument("--out", type=Path, required=True, help="output directory")

    e = sub.add_parser("evaluate", help="leave-one-trajectory-out evaluation")
    _add_input(e, matrix_dir=True)
    e.add_argument("--methods", default=",".join(METHODS))
    e.add_argument("--trials", type=int, default=10)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--out", type=Path, required=True, help="output directory")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--points-per-cluster", type=int, default=100)
    e.add_argument("--rng-epochs", type=int, default=100)
    e.add_argument("--rng-subset", type=int)
    return parser


# -- commands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.model == "ba":
        if args.m is None:
            raise UsageError("--m is required for --model ba")
        n = 20 if args.trajectories is None else args.trajectories
        if n < 1:
            raise UsageError("--trajectories must be >= 1")
        data = generate_ba_dataset(n, args.m0, args.k, args.m, args.seed)
    else:
        n = 30 if args.trajectories is None else args.trajectories
        if n < 1:
            raise UsageError("--trajectories must be >= 1")
        patterns = None
        if args.patterns:
            patterns = tuple(p.strip() for p in args.patterns.split(",") if p.strip())
        data = generate_gol_dataset(
            n,
            args.grid,
            args.grid,
            args.steps,
            args.noise,
            args.seed,
            patterns,
            args.drop_initial,
            args.noise_mode,
        )
    save_dataset(data, args.out)
    print(f"wrote {data.n_snapshots} snapshots in {len(data.trajectories)} trajectories to {args.out}")
    return 0


def _load_series(args) -> SeriesData:
    costs = AlignmentCosts(gap_open=args.gap_open, gap_extend=args.gap_extend)
    if args.sequences is not None:
        return SeriesData.from_sequences(load_sequences(args.sequences), costs)
    if getattr(args, "matrix_dir", None) is not None:
        return load_matrix_dir(args.matrix_dir)
    data = load_dataset(args.data)
    problems = validate_dataset(data)
    if problems:
        raise DatasetFormatError(f"{args.data}: " + "; ".join(problems[:10]))
    return SeriesData.from_dataset(data, args.representation, costs)


def load_matrix_dir(directory) -> SeriesData:
    """Rebuild the evaluation input from the files written by ``matrix``."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    D = load_matrix(directory / "distances.csv")
    return SeriesData(
        D,
        meta["lengths"],
        meta["ids"],
        bool(meta.get("psd_guaranteed", False)),
        None,
        {"representation": meta.get("representation", "")},
    )


def cmd_matrix(args) -> int:
    if not args.psi > 0:
        raise UsageError("--psi must be positive")
    series = _load_series(args)
    scaled, dbar = normalize_distances(series.distances)
    sim = rbf_similarity(scaled, args.psi)
    kern = kernel_from_similarity(sim, assume_psd=series.psd_guaranteed)
    args.out.mkdir(parents=True, exist_ok=True)
    save_matrix(series.distances, args.out / "distances.csv")
    save_matrix(sim, args.out / "similarity.csv")
    save_matrix(kern, args.out / "kernel.csv")
    meta = {
        "representation": series.metadata.get("representation", args.representation),
        "d_bar": dbar,
        "psi": args.psi,
        "ids": list(series.ids),
        "lengths": list(series.lengths),
        "psd_guaranteed": series.psd_guaranteed,
        "corrected": bool(kern is not sim),
    }
    if args.check_psd:
        lo, hi = eigenvalue_extremes(sim)
        meta["min_eigenvalue"] = lo
        meta["max_abs_eigenvalue"] = hi
        ok = lo >= -1e-8 * hi
        print(f"min eigenvalue {lo:.3g} (max |eigenvalue| {hi:.3g}): "
              + ("PSD, no correction needed" if ok else "not PSD, clipped"))
    (args.out / "meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {series.n_points}x{series.n_points} matrices to {args.out} (d_bar={dbar:.6g})")
    return 0


def cmd_evaluate(args) -> int:
    methods = _parse_methods(args.methods)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    series = _load_series(args)
    config = SearchConfig(
        trials=args.trials,
        points_per_cluster=args.points_per_cluster,
        rng_epochs=args.rng_epochs,
        rng_subset=args.rng_subset,
    )
    results = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for method in methods:
            log.info("evaluating %s", method)
            results.append(loo_cv(series, method, config, seed=args.seed, jobs=args.jobs))
    clamped = [w for w in caught if issubclass(w.category, RuntimeWarning)]
    if clamped:
        print(
            f"warning: {len(clamped)} fold(s) had negative squared distances to a "
            "prediction (indefinite geometry); clamped to zero",
            file=sys.stderr,
        )

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        write_results_csv(results, fh)
    text, table_csv = report_table(results)
    (args.out / "summary.txt").write_text(text, encoding="utf-8")
    (args.out / "summary.csv").write_text(table_csv, encoding="utf-8")
    with open(args.out / "wilcoxon.csv", "w", encoding="utf-8") as fh:
        fh.write("method_a,method_b,statistic,p_value,n_nonzero\n")
        for row in pairwise_wilcoxon(results):
            fh.write(
                f"{row['method_a']},{row['method_b']},{row['statistic']!r},"
                f"{row['p_value']!r},{row['n_nonzero']}\n"
            )
    print(text, end="")
    return 0


COMMANDS = {"generate": cmd_generate, "matrix": cmd_matrix, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, DatasetFormatError, DegenerateInputError, NumericalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
