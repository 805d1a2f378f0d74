"""Cluster quality and partition agreement measures."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .data import DataMatrix, Graph, Partition
from .errors import MalformedInput


@dataclass(frozen=True)
class ContingencyTable:
    """Joint counts n_ij between two partitions plus marginals."""

    counts: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    n: int


def contingency(u: Partition, v: Partition) -> ContingencyTable:
    if u.n != v.n:
        raise MalformedInput(f"partition lengths differ: {u.n} vs {v.n}")
    counts = np.zeros((u.k, v.k), dtype=np.int64)
    np.add.at(counts, (u.labels, v.labels), 1)
    return ContingencyTable(
        counts=counts,
        row_marginals=counts.sum(axis=1),
        col_marginals=counts.sum(axis=0),
        n=u.n,
    )


def _comb2(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def ari(u: Partition, v: Partition) -> float:
    """Adjusted Rand index (pair counting, chance corrected)."""
    t = contingency(u, v)
    sum_ij = _comb2(t.counts).sum()
    sum_a = _comb2(t.row_marginals).sum()
    sum_b = _comb2(t.col_marginals).sum()
    total = _comb2(np.array([t.n]))[0]
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions are all-singletons or all-one-cluster
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def nmi(u: Partition, v: Partition) -> float:
    """Mutual information normalized by sqrt(H(u) * H(v)); 0/0 defined as 0."""
    t = contingency(u, v)
    n = float(t.n)
    pu = t.row_marginals / n
    pv = t.col_marginals / n
    hu = -np.sum(pu[pu > 0] * np.log(pu[pu > 0]))
    hv = -np.sum(pv[pv > 0] * np.log(pv[pv > 0]))
    if hu == 0.0 or hv == 0.0:
        return 0.0
    nz = t.counts > 0
    pij = t.counts[nz] / n
    outer = np.outer(t.row_marginals, t.col_marginals)[nz] / (n * n)
    mi = np.sum(pij * np.log(pij / outer))
    return float(min(max(mi / np.sqrt(hu * hv), 0.0), 1.0))


def modularity(g: Graph, p: Partition) -> float:
    """Degree-corrected partition quality, trace form over the indicator matrix.

    Weighted graphs use weighted degrees and total weight.
    """
    if p.n != g.n_nodes:
        raise MalformedInput("partition does not cover all nodes")
    if g.n_edges == 0:
        raise MalformedInput("modularity is undefined on an edgeless graph")
    s = g.adjacency()
    d = s.sum(axis=1)
    two_m = d.sum()
    m_mat = s - np.outer(d, d) / two_m
    x = p.indicator()
    return float(np.trace(x.T @ m_mat @ x) / two_m)


def conductance(g: Graph, p: Partition) -> tuple[np.ndarray, float]:
    """Per-cluster boundary-to-volume ratio and their unweighted mean.

    A cluster with min(Vol, complement Vol) == 0 scores 0 with a warning.
    """
    if p.n != g.n_nodes:
        raise MalformedInput("partition does not cover all nodes")
    d = g.degrees()
    total_vol = d.sum()
    vols = np.zeros(p.k)
    np.add.at(vols, p.labels, d)
    cut = np.zeros(p.k)
    lu = p.labels[g.edges_u]
    lv = p.labels[g.edges_v]
    crossing = lu != lv
    np.add.at(cut, lu[crossing], g.weights[crossing])
    np.add.at(cut, lv[crossing], g.weights[crossing])
    values = np.zeros(p.k)
    for c in range(p.k):
        denom = min(vols[c], total_vol - vols[c])
        if denom <= 0:
            warnings.warn(f"cluster {c} has zero boundary volume; conductance set to 0",
                          stacklevel=2)
            values[c] = 0.0
        else:
            values[c] = cut[c] / denom
    return values, float(values.mean())


def silhouette(x: DataMatrix, p: Partition) -> tuple[np.ndarray, float]:
    """Per-point silhouette values and their mean (MSV), Euclidean distances.

    Singleton clusters and zero-distance degeneracies score 0.
    """
    if p.k < 2:
        raise MalformedInput("silhouette requires k >= 2")
    if p.n != x.rows:
        raise MalformedInput("partition does not cover all points")
    dist = squareform(pdist(x.values))
    sizes = p.sizes()
    vals = np.zeros(x.rows)
    members = [np.flatnonzero(p.labels == c) for c in range(p.k)]
    for i in range(x.rows):
        own = p.labels[i]
        if sizes[own] <= 1:
            vals[i] = 0.0
            continue
        a = dist[i, members[own]].sum() / (sizes[own] - 1)
        b = np.inf
        for c in range(p.k):
            if c == own or sizes[c] == 0:
                continue
            b = min(b, dist[i, members[c]].mean())
        denom = max(a, b)
        vals[i] = 0.0 if denom == 0 else (b - a) / denom
    return vals, float(vals.mean())


def dbi(x: DataMatrix, p: Partition) -> float:
    """Davies-Bouldin index: mean over clusters of the worst similarity ratio."""
    if p.k < 2:
        raise MalformedInput("DBI requires k >= 2")
    if p.n != x.rows:
        raise MalformedInput("partition does not cover all points")
    centroids = np.zeros((p.k, x.cols))
    spreads = np.zeros(p.k)
    for c in range(p.k):
        members = np.flatnonzero(p.labels == c)
        if members.size == 0:
            raise MalformedInput(f"cluster {c} is empty")
        centroids[c] = x.values[members].mean(axis=0)
        spreads[c] = np.linalg.norm(x.values[members] - centroids[c], axis=1).mean()
    cd = cdist(centroids, centroids)
    worst = np.zeros(p.k)
    for i in range(p.k):
        ratios = [
            (spreads[i] + spreads[j]) / cd[i, j] if cd[i, j] > 0 else np.inf
            for j in range(p.k)
            if j != i
        ]
        worst[i] = max(ratios)
    return float(worst.mean())
