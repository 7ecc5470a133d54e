"""Temporal graphs, trajectories and their JSON file formats.

A trajectory is the sequence of temporal subgraphs of one time-varying graph.
Consecutive snapshots form the (predecessor, successor) pairs used for
regression. Objects are immutable; invariant checking is done by
:func:`validate_dataset`, which reports problems instead of raising so that
partially broken inputs can still be inspected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """A dataset or sequence file could not be parsed."""


class SchemaVersionError(DatasetFormatError):
    """The file declares a ``format_version`` this code does not understand."""

    def __init__(self, found: Any):
        super().__init__(
            f"unsupported format_version {found!r}; expected {FORMAT_VERSION}"
        )
        self.found = found


def _canonical_edge(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class TemporalGraph:
    """One snapshot: the nodes and undirected edges present at a time step.

    Edges are oriented as ``(min, max)`` on construction. Duplicates and
    dangling endpoints are kept so that :func:`validate_dataset` can report
    them.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()
    labels: Mapping[str, str] | None = None

    def __init__(self, nodes, edges=(), labels=None):
        object.__setattr__(self, "nodes", tuple(str(n) for n in nodes))
        object.__setattr__(
            self, "edges", tuple(_canonical_edge(str(u), str(v)) for u, v in edges)
        )
        if labels is not None:
            labels = {str(k): str(v) for k, v in dict(labels).items()}
        object.__setattr__(self, "labels", labels)

    def __hash__(self):
        lab = None if self.labels is None else tuple(sorted(self.labels.items()))
        return hash((self.nodes, self.edges, lab))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for u, v in self.edges:
            if u in adj and v in adj and u != v:
                adj[u].add(v)
                adj[v].add(u)
        return adj

    def violations(self, where: str = "graph") -> list[str]:
        out = []
        seen_nodes = set()
        for n in self.nodes:
            if n in seen_nodes:
                out.append(f"{where}: duplicate node {n!r}")
            seen_nodes.add(n)
        seen_edges = set()
        for u, v in self.edges:
            if u == v:
                out.append(f"{where}: self-loop on node {u!r}")
            for end in (u, v):
                if end not in seen_nodes:
                    out.append(f"{where}: edge ({u!r}, {v!r}) has endpoint {end!r} not in nodes")
            if (u, v) in seen_edges:
                out.append(f"{where}: duplicate edge ({u!r}, {v!r})")
            seen_edges.add((u, v))
        if self.labels:
            for n in self.labels:
                if n not in seen_nodes:
                    out.append(f"{where}: label for unknown node {n!r}")
        return out

    def to_json(self) -> dict:
        doc: dict[str, Any] = {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
        }
        if self.labels is not None:
            doc["labels"] = dict(self.labels)
        return doc


@dataclass(frozen=True)
class Trajectory:
    id: str
    snapshots: tuple[TemporalGraph, ...]

    def __init__(self, id, snapshots):
        object.__setattr__(self, "id", str(id))
        object.__setattr__(self, "snapshots", tuple(snapshots))

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __init__(self, trajectories, metadata=None):
        object.__setattr__(self, "trajectories", tuple(trajectories))
        object.__setattr__(
            self, "metadata", {str(k): str(v) for k, v in (metadata or {}).items()}
        )

    @property
    def n_snapshots(self) -> int:
        return sum(len(t) for t in self.trajectories)

    @property
    def lengths(self) -> list[int]:
        return [len(t) for t in self.trajectories]

    def graphs(self) -> list[TemporalGraph]:
        """All snapshots in global point order (trajectory by trajectory)."""
        return [g for t in self.trajectories for g in t.snapshots]


@dataclass(frozen=True)
class LabeledSequence:
    """A graph serialized as the labels of its nodes in order of appearance."""

    id: str
    tokens: tuple[str, ...] = ()

    def __init__(self, id, tokens=()):
        object.__setattr__(self, "id", str(id))
        object.__setattr__(self, "tokens", tuple(str(t) for t in tokens))

    def __len__(self):
        return len(self.tokens)


def graph_to_sequence(g: TemporalGraph, id: str = "") -> LabeledSequence:
    """Serialize a graph by listing node labels in node order.

    Unlabeled nodes contribute the token ``"node"`` so that the alignment
    distance degrades to a size comparison.
    """
    labels = g.labels or {}
    return LabeledSequence(id, [labels.get(n, "node") for n in g.nodes])


def validate_dataset(d: Dataset) -> list[str]:
    problems = []
    seen_ids = set()
    for ti, traj in enumerate(d.trajectories):
        name = f"trajectory {traj.id!r}"
        if traj.id in seen_ids:
            problems.append(f"{name}: duplicate trajectory id")
        seen_ids.add(traj.id)
        if len(traj) < 2:
            problems.append(
                f"{name}: has {len(traj)} snapshot(s), needs at least 2"
            )
        for si, g in enumerate(traj.snapshots):
            problems.extend(g.violations(f"{name} snapshot {si}"))
    return problems


# -- file IO -----------------------------------------------------------------


def dataset_to_json(d: Dataset) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "metadata": dict(d.metadata),
        "trajectories": [
            {"id": t.id, "snapshots": [g.to_json() for g in t.snapshots]}
            for t in d.trajectories
        ],
    }


def save_dataset(d: Dataset, path) -> None:
    text = json.dumps(dataset_to_json(d), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def _require(obj, key, where, kind):
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise DatasetFormatError(f"{where}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise DatasetFormatError(
            f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def _parse_node_id(x, where):
    if isinstance(x, bool) or not isinstance(x, (str, int)):
        raise DatasetFormatError(f"{where}: node id must be a string or integer")
    return str(x)


def _parse_graph(doc, where) -> TemporalGraph:
    nodes = _require(doc, "nodes", where, list)
    edges = _require(doc, "edges", where, list)
    node_ids = [_parse_node_id(n, f"{where}.nodes[{i}]") for i, n in enumerate(nodes)]
    parsed_edges = []
    for i, e in enumerate(edges):
        if not isinstance(e, list) or len(e) != 2:
            raise DatasetFormatError(f"{where}.edges[{i}]: expected a 2-element array")
        parsed_edges.append(
            tuple(_parse_node_id(x, f"{where}.edges[{i}]") for x in e)
        )
    labels = doc.get("labels")
    if labels is not None:
        if not isinstance(labels, dict) or not all(
            isinstance(v, str) for v in labels.values()
        ):
            raise DatasetFormatError(f"{where}.labels: expected a map of strings")
    return TemporalGraph(node_ids, parsed_edges, labels)


def _loads(text: str, path) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def dataset_from_json(doc: Any, where: str = "dataset") -> Dataset:
    if not isinstance(doc, dict):
        raise DatasetFormatError(f"{where}: top level must be an object")
    if "format_version" not in doc:
        raise DatasetFormatError(f"{where}: missing key 'format_version'")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaVersionError(doc["format_version"])
    trajs = _require(doc, "trajectories", where, list)
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise DatasetFormatError(f"{where}.metadata: expected an object")
    out = []
    for ti, t in enumerate(trajs):
        tw = f"{where}.trajectories[{ti}]"
        tid = _require(t, "id", tw, (str, int))
        snaps = _require(t, "snapshots", tw, list)
        out.append(
            Trajectory(
                tid, [_parse_graph(s, f"{tw}.snapshots[{si}]") for si, s in enumerate(snaps)]
            )
        )
    return Dataset(out, metadata)


def load_dataset(path) -> Dataset:
    return dataset_from_json(_loads(Path(path).read_text(encoding="utf-8"), path), str(path))


def save_sequences(seqs: Sequence[LabeledSequence], path) -> None:
    doc = {"sequences": [{"id": s.id, "tokens": list(s.tokens)} for s in seqs]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_sequences(path) -> list[LabeledSequence]:
    doc = _loads(Path(path).read_text(encoding="utf-8"), path)
    where = str(path)
    items = _require(doc, "sequences", where, list)
    out = []
    for i, s in enumerate(items):
        sw = f"{where}.sequences[{i}]"
        sid = _require(s, "id", sw, (str, int))
        tokens = _require(s, "tokens", sw, list)
        if not all(isinstance(t, str) for t in tokens):
            raise DatasetFormatError(f"{sw}.tokens: expected an array of strings")
        out.append(LabeledSequence(sid, tokens))
    return out


def group_sequences(seqs: Sequence[LabeledSequence], sep: str = ":"):
    """Group sequences into trajectories by the ``<trajectory><sep><step>`` id
    convention.

    Returns ``(trajectory_ids, ordered_sequences, lengths)``; within a
    trajectory sequences keep file order. Ids without the separator form
    their own one-element trajectory.
    """
    groups: dict[str, list[LabeledSequence]] = {}
    for s in seqs:
        key = s.id.rsplit(sep, 1)[0] if sep in s.id else s.id
        groups.setdefault(key, []).append(s)
    ids = list(groups)
    ordered = [s for k in ids for s in groups[k]]
    return ids, ordered, [len(groups[k]) for k in ids]
