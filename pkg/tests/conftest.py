import numpy as np
import pytest
from hypothesis import settings

from graphseries.graph_model import Dataset, TemporalGraph, Trajectory

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def path_graph(n, prefix=""):
    nodes = [f"{prefix}{i}" for i in range(n)]
    return TemporalGraph(nodes, [(nodes[i], nodes[i + 1]) for i in range(n - 1)])


@pytest.fixture
def small_dataset():
    return Dataset(
        [
            Trajectory("a", [path_graph(2), path_graph(3), path_graph(4)]),
            Trajectory("b", [path_graph(3), path_graph(4)]),
        ],
        {"source": "fixture"},
    )


def random_points(rng, n, dim=3):
    """Explicit points and their squared Euclidean distance matrix."""
    X = rng.normal(size=(n, dim))
    D2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    return X, D2


# -- acceptance reporting --------------------------------------------------------
#
# Tests tagged ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; the
# terminal summary prints one PASS/FAIL line per group.

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if report.when == "call":
        entry["ran"] += 1
    if report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "FAIL" if entry["failed"] or not entry["ran"] else "PASS"
        line = f"criterion {number}: {status}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
