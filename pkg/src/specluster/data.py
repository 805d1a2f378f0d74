"""Core data containers and file ingestion.

Dense matrices hold one data point per row.  Graphs are simple, undirected
and weighted; node identifiers from input files are reindexed to 0..n-1 and
the original ids are kept for reporting.  All containers are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInput


@dataclass(frozen=True)
class DataMatrix:
    """Dense real matrix, one data point x_i per row."""

    values: np.ndarray
    row_labels: tuple | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise MalformedInput(f"expected a 2-d matrix, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise MalformedInput("data matrix contains non-finite values")
        if self.row_labels is not None and len(self.row_labels) != vals.shape[0]:
            raise MalformedInput("row label count does not match row count")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass(frozen=True)
class Graph:
    """Simple undirected weighted graph.

    ``edges_u``/``edges_v``/``weights`` store each undirected edge once with
    u < v.  ``node_ids`` maps dense index -> original identifier.
    """

    n_nodes: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    weights: np.ndarray
    node_ids: tuple

    def __post_init__(self):
        u = np.asarray(self.edges_u, dtype=np.int64)
        v = np.asarray(self.edges_v, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if not (u.shape == v.shape == w.shape):
            raise MalformedInput("edge arrays must have identical shapes")
        if u.size and (u.min() < 0 or max(u.max(), v.max()) >= self.n_nodes):
            raise MalformedInput("edge endpoint out of range")
        if np.any(u == v):
            raise MalformedInput("self-loops are not allowed")
        if np.any(w <= 0):
            raise MalformedInput("edge weights must be positive")
        if len(self.node_ids) != self.n_nodes:
            raise MalformedInput("node id count does not match n_nodes")
        for a in (u, v, w):
            a.setflags(write=False)
        object.__setattr__(self, "edges_u", u)
        object.__setattr__(self, "edges_v", v)
        object.__setattr__(self, "weights", w)

    @property
    def n_edges(self) -> int:
        return int(self.edges_u.size)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric adjacency matrix."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self.edges_u, self.edges_v] = self.weights
        a[self.edges_v, self.edges_u] = self.weights
        return a

    def neighbors(self) -> list[np.ndarray]:
        """Neighbor index arrays, one per node, sorted."""
        nbr: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, b in zip(self.edges_u, self.edges_v):
            nbr[a].append(int(b))
            nbr[b].append(int(a))
        return [np.array(sorted(s), dtype=np.int64) for s in nbr]

    def degrees(self) -> np.ndarray:
        """Weighted degree of every node."""
        d = np.zeros(self.n_nodes)
        np.add.at(d, self.edges_u, self.weights)
        np.add.at(d, self.edges_v, self.weights)
        return d

    def index_of(self, original_id) -> int:
        return self.node_ids.index(original_id)


@dataclass(frozen=True)
class Partition:
    """Hard cluster assignment: labels in 0..k-1 for every point."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if self.k < 1:
            raise MalformedInput("k must be at least 1")
        if lab.size and (lab.min() < 0 or lab.max() >= self.k):
            raise MalformedInput("cluster index out of range")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    def indicator(self) -> np.ndarray:
        """0/1 indicator matrix; column p flags the members of cluster p."""
        x = np.zeros((self.n, self.k))
        x[np.arange(self.n), self.labels] = 1.0
        return x

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class Snapshot:
    """One step of an evolving dataset, with optional ground truth."""

    timestamp: float
    data: "Graph | DataMatrix"
    node_ids: tuple
    truth: Partition | None = None


@dataclass(frozen=True)
class SnapshotSequence:
    snapshots: tuple[Snapshot, ...]

    def __post_init__(self):
        ts = [s.timestamp for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise MalformedInput("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i) -> Snapshot:
        return self.snapshots[i]


@dataclass(frozen=True)
class LabeledDataset:
    data: "DataMatrix | Graph"
    ground_truth: Partition

    def __post_init__(self):
        n = self.data.rows if isinstance(self.data, DataMatrix) else self.data.n_nodes
        if self.ground_truth.n != n:
            raise MalformedInput("ground truth does not cover all points")


def load_edge_list(stream, weighted: bool = False) -> Graph:
    """Parse a whitespace-separated edge list into a Graph.

    Lines are ``u v`` (or ``u v w`` when ``weighted``); '#' starts a comment.
    Duplicate edges keep the last weight, self-loops are dropped with a
    warning, and node ids are reindexed densely in first-appearance order.
    """
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream.decode() if isinstance(stream, bytes) else stream)

    id_index: dict = {}
    edge_weight: dict[tuple[int, int], float] = {}
    dropped_loops = 0

    def intern(token: str) -> int:
        key: object = int(token) if token.lstrip("+-").isdigit() else token
        if key not in id_index:
            id_index[key] = len(id_index)
        return id_index[key]

    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode()
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if weighted:
            if len(tokens) not in (2, 3):
                raise MalformedInput(f"line {lineno}: expected 'u v' or 'u v w', got {line!r}")
        elif len(tokens) != 2:
            raise MalformedInput(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            w = float(tokens[2]) if len(tokens) == 3 else 1.0
        except ValueError:
            raise MalformedInput(f"line {lineno}: bad weight {tokens[2]!r}") from None
        if w < 0:
            raise MalformedInput(f"line {lineno}: negative weight {w}")
        u, v = intern(tokens[0]), intern(tokens[1])
        if u == v:
            dropped_loops += 1
            continue
        edge_weight[(min(u, v), max(u, v))] = w

    if dropped_loops:
        warnings.warn(f"dropped {dropped_loops} self-loop(s)", stacklevel=2)

    keys = sorted(edge_weight)
    eu = np.array([a for a, _ in keys], dtype=np.int64)
    ev = np.array([b for _, b in keys], dtype=np.int64)
    ws = np.array([edge_weight[k] for k in keys])
    node_ids = tuple(sorted(id_index, key=id_index.get))
    return Graph(n_nodes=len(node_ids), edges_u=eu, edges_v=ev, weights=ws, node_ids=node_ids)


def dump_edge_list(g: Graph, weighted: bool = False) -> str:
    """Serialize a graph back to edge-list text (round-trips load_edge_list)."""
    lines = []
    for u, v, w in zip(g.edges_u, g.edges_v, g.weights):
        a, b = g.node_ids[u], g.node_ids[v]
        lines.append(f"{a} {b} {w!r}" if weighted else f"{a} {b}")
    return "\n".join(lines) + ("\n" if lines else "")


def graph_from_adjacency(a: np.ndarray, node_ids: Sequence | None = None) -> Graph:
    """Build a Graph from a symmetric nonnegative adjacency matrix."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    iu, iv = np.nonzero(np.triu(a, k=1))
    ids = tuple(node_ids) if node_ids is not None else tuple(range(n))
    return Graph(n_nodes=n, edges_u=iu, edges_v=iv, weights=a[iu, iv], node_ids=ids)


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> Graph:
    """Subgraph on the given dense node indices, reindexed to 0..len-1."""
    nodes = list(nodes)
    pos = {v: i for i, v in enumerate(nodes)}
    keep = [i for i in range(g.n_edges) if g.edges_u[i] in pos and g.edges_v[i] in pos]
    eu = np.array([pos[int(g.edges_u[i])] for i in keep], dtype=np.int64)
    ev = np.array([pos[int(g.edges_v[i])] for i in keep], dtype=np.int64)
    eu2 = np.minimum(eu, ev)
    ev2 = np.maximum(eu, ev)
    return Graph(
        n_nodes=len(nodes),
        edges_u=eu2,
        edges_v=ev2,
        weights=g.weights[keep],
        node_ids=tuple(g.node_ids[v] for v in nodes),
    )


def adjacency_rows(g: Graph, ids: Iterable[int]) -> DataMatrix:
    """Full n-dimensional weighted adjacency rows for the given node indices."""
    ids = list(ids)
    if any(i < 0 or i >= g.n_nodes for i in ids):
        raise MalformedInput("node index out of range")
    a = g.adjacency()
    return DataMatrix(values=a[ids, :].copy(), row_labels=tuple(g.node_ids[i] for i in ids))


def window_concat(series: DataMatrix, window: int) -> DataMatrix:
    """Concatenate ``window`` consecutive rows into one row per output step.

    Output row t covers input rows t-window+1..t, so the result has
    rows-window+1 rows and cols*window columns.
    """
    if window < 1:
        raise MalformedInput("window must be >= 1")
    if window > series.rows:
        raise MalformedInput(f"window {window} exceeds row count {series.rows}")
    n_out = series.rows - window + 1
    out = np.empty((n_out, series.cols * window))
    for t in range(n_out):
        out[t] = series.values[t : t + window].reshape(-1)
    return DataMatrix(values=out)


def read_csv_matrix(stream) -> DataMatrix:
    """Read a DataMatrix from CSV with a header row."""
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream.decode() if isinstance(stream, bytes) else stream)
    reader = csv.reader(stream)
    try:
        next(reader)
    except StopIteration:
        raise MalformedInput("empty CSV") from None
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append([float(x) for x in row])
        except ValueError:
            raise MalformedInput(f"line {lineno}: non-numeric value") from None
    return DataMatrix(values=np.array(rows))


def write_csv_matrix(m: DataMatrix, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(m.cols)])
    for row in m.values:
        writer.writerow([repr(float(x)) for x in row])


def read_labels(stream) -> np.ndarray:
    """Read integer labels, one per line."""
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream.decode() if isinstance(stream, bytes) else stream)
    labels = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            labels.append(int(line))
        except ValueError:
            raise MalformedInput(f"line {lineno}: expected an integer label") from None
    return np.array(labels, dtype=np.int64)


def write_labels(labels: np.ndarray, fh) -> None:
    for x in labels:
        fh.write(f"{int(x)}\n")


def partition_from_labels(labels: np.ndarray) -> Partition:
    """Relabel arbitrary integer labels to 0..k-1 (order of first appearance)."""
    labels = np.asarray(labels, dtype=np.int64)
    seen: dict[int, int] = {}
    dense = np.empty_like(labels)
    for i, x in enumerate(labels):
        if int(x) not in seen:
            seen[int(x)] = len(seen)
        dense[i] = seen[int(x)]
    return Partition(labels=dense, k=max(len(seen), 1))
