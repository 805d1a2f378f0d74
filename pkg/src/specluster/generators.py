"""Synthetic data generators for experiments and property tests.

Everything is driven by a single seeded numpy Generator, so outputs are
bitwise reproducible for a fixed (scenario, parameters, seed) triple.
"""

from __future__ import annotations

import numpy as np

from .data import (
    DataMatrix,
    Graph,
    LabeledDataset,
    Partition,
    Snapshot,
    SnapshotSequence,
    graph_from_adjacency,
)
from .errors import MalformedInput

DRIFT_SCENARIOS = ("two_drifting", "multi_merge", "switching_labels", "planted_partition_evolve")


def gen_gaussian_mixture(means, covariances, counts, seed) -> LabeledDataset:
    """Sample a labeled Gaussian mixture; ground truth is the component index."""
    means = [np.asarray(m, dtype=float) for m in means]
    covs = [np.asarray(c, dtype=float) for c in covariances]
    if len({m.shape[0] for m in means}) != 1:
        raise MalformedInput("mixture components must share dimensionality")
    if len(means) != len(covs) or len(means) != len(counts):
        raise MalformedInput("means, covariances and counts must align")
    if any(c < 1 for c in counts):
        raise MalformedInput("component counts must be >= 1")
    for c in covs:
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise MalformedInput("covariance is not positive definite") from None

    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for comp, (mu, cov, cnt) in enumerate(zip(means, covs, counts)):
        blocks.append(rng.multivariate_normal(mu, cov, size=cnt))
        labels.extend([comp] * cnt)
    x = DataMatrix(values=np.vstack(blocks))
    truth = Partition(labels=np.array(labels), k=len(means))
    return LabeledDataset(data=x, ground_truth=truth)


def planted_partition(block_sizes, p_in: float, p_out: float, seed, weighted=False) -> LabeledDataset:
    """Random graph with k planted blocks: edge prob p_in inside, p_out across."""
    sizes = list(block_sizes)
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    a = upper.astype(float)
    if weighted:
        a *= np.triu(rng.uniform(0.5, 1.5, size=(n, n)), k=1)
    a = a + a.T
    g = graph_from_adjacency(a)
    return LabeledDataset(data=g, ground_truth=Partition(labels=labels, k=len(sizes)))


def _regen_planted(labels: np.ndarray, k: int, p_in, p_out, rng) -> Graph:
    n = labels.size
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    a = upper.astype(float)
    return graph_from_adjacency(a + a.T)


def gen_drift_sequence(scenario: str, steps: int, seed, **params) -> SnapshotSequence:
    """Evolving benchmark sequences; every snapshot carries ground truth.

    two_drifting            two Gaussian clouds whose means approach monotonically
    multi_merge             two clouds that fully merge near the end, plus a static
                            bimodal cluster and a small outlier clump
    switching_labels        planted 2-block graph; a few nodes flip block each step
    planted_partition_evolve  planted graph with a scripted block split
    """
    if scenario not in DRIFT_SCENARIOS:
        raise MalformedInput(f"unknown scenario {scenario!r}")
    if steps < 1:
        raise MalformedInput("steps must be >= 1")
    rng = np.random.default_rng(seed)
    make = {
        "two_drifting": _two_drifting,
        "multi_merge": _multi_merge,
        "switching_labels": _switching_labels,
        "planted_partition_evolve": _planted_evolve,
    }[scenario]
    return SnapshotSequence(snapshots=tuple(make(steps, rng, params)))


def _two_drifting(steps, rng, params):
    n = params.get("n_per_cluster", 30)
    sigma = params.get("sigma", 1.0)
    d0 = params.get("start_distance", 12.0)
    d1 = params.get("end_distance", 5.0)
    cov = (sigma**2) * np.eye(2)
    out = []
    for t in range(steps):
        frac = t / (steps - 1) if steps > 1 else 0.0
        d = d0 + (d1 - d0) * frac
        pts = np.vstack(
            [
                rng.multivariate_normal([-d / 2, 0.0], cov, size=n),
                rng.multivariate_normal([+d / 2, 0.0], cov, size=n),
            ]
        )
        truth = Partition(labels=np.repeat([0, 1], n), k=2)
        out.append(Snapshot(timestamp=float(t), data=DataMatrix(values=pts),
                            node_ids=tuple(range(2 * n)), truth=truth))
    return out


def _multi_merge(steps, rng, params):
    n = params.get("n_per_cluster", 30)
    sigma = params.get("sigma", 0.7)
    d0 = params.get("start_distance", 14.0)
    merge_frac = params.get("merge_frac", 0.9)
    n_outliers = params.get("n_outliers", 4)
    outlier_step = params.get("outlier_step", min(2, steps - 1))
    cov = (sigma**2) * np.eye(2)
    static_c = np.array([0.0, 12.0])
    outlier_c = np.array([-16.0, -12.0])
    out = []
    for t in range(steps):
        frac = t / (steps - 1) if steps > 1 else 0.0
        d = d0 * max(0.0, 1.0 - frac / merge_frac)
        a = rng.multivariate_normal([-d / 2, 0.0], cov, size=n)
        b = rng.multivariate_normal([+d / 2, 0.0], cov, size=n)
        # static bimodal cluster: two close lobes, one ground-truth component
        half = n // 2
        c = np.vstack(
            [
                rng.multivariate_normal(static_c + [-1.2, 0], cov * 0.5, size=half),
                rng.multivariate_normal(static_c + [+1.2, 0], cov * 0.5, size=n - half),
            ]
        )
        pts = [a, b, c]
        labels = [0] * n + [1] * n + [2] * n
        if t == outlier_step and n_outliers:
            pts.append(outlier_c + 0.2 * rng.standard_normal((n_outliers, 2)))
            labels += [3] * n_outliers
        truth = Partition(labels=np.array(labels), k=4)
        out.append(Snapshot(timestamp=float(t), data=DataMatrix(values=np.vstack(pts)),
                            node_ids=tuple(range(len(labels))), truth=truth))
    return out


def _switching_labels(steps, rng, params):
    n = params.get("n_nodes", 100)
    p_in = params.get("p_in", 0.18)
    p_out = params.get("p_out", 0.05)
    n_switch = params.get("n_switch", max(1, n // 20))
    labels = np.repeat([0, 1], [n - n // 2, n // 2])
    out = []
    for t in range(steps):
        if t > 0:
            flip = rng.choice(n, size=n_switch, replace=False)
            labels = labels.copy()
            labels[flip] = 1 - labels[flip]
        g = _regen_planted(labels, 2, p_in, p_out, rng)
        out.append(Snapshot(timestamp=float(t), data=g, node_ids=tuple(range(n)),
                            truth=Partition(labels=labels.copy(), k=2)))
    return out


def _planted_evolve(steps, rng, params):
    k0 = params.get("k0", 2)
    block = params.get("block_size", 40)
    p_in = params.get("p_in", 0.3)
    p_out = params.get("p_out", 0.02)
    split_step = params.get("split_step", 2)
    labels = np.repeat(np.arange(k0), block)
    k = k0
    out = []
    for t in range(steps):
        if t == split_step and k >= 1:
            # split the largest block in two
            big = np.argmax(np.bincount(labels, minlength=k))
            members = np.flatnonzero(labels == big)
            labels = labels.copy()
            labels[members[len(members) // 2 :]] = k
            k += 1
        g = _regen_planted(labels, k, p_in, p_out, rng)
        out.append(Snapshot(timestamp=float(t), data=g, node_ids=tuple(range(labels.size)),
                            truth=Partition(labels=labels.copy(), k=k)))
    return out


def gen_switching_series(
    n_per_type=(8, 8),
    length=450,
    base_freqs=(0.02, 0.05),
    switch_freq=0.11,
    t_switch=150,
    t_back=300,
    noise=0.05,
    seed=0,
) -> tuple[DataMatrix, np.ndarray]:
    """Sinusoid bank where the second type changes frequency on [t_switch, t_back).

    Returns the series matrix (one series per row) and the per-series type.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    rows, types = [], []
    for i in range(n_per_type[0]):
        phase = rng.uniform(0, 2 * np.pi)
        rows.append(np.sin(2 * np.pi * base_freqs[0] * t + phase))
        types.append(0)
    for i in range(n_per_type[1]):
        phase = rng.uniform(0, 2 * np.pi)
        f = np.full(length, base_freqs[1])
        f[t_switch:t_back] = switch_freq
        # integrate the instantaneous frequency for a continuous phase
        angle = 2 * np.pi * np.cumsum(f) + phase
        rows.append(np.sin(angle))
        types.append(1)
    x = np.array(rows) + noise * rng.standard_normal((len(rows), length))
    return DataMatrix(values=x), np.array(types)


def stream_from_sequence(seq: SnapshotSequence) -> tuple[DataMatrix, np.ndarray]:
    """Flatten a DataMatrix snapshot sequence into one stream in arrival order."""
    mats, labels = [], []
    for snap in seq:
        if not isinstance(snap.data, DataMatrix):
            raise MalformedInput("stream flattening requires DataMatrix snapshots")
        mats.append(snap.data.values)
        if snap.truth is None:
            raise MalformedInput("snapshots must carry ground truth")
        labels.append(snap.truth.labels)
    return DataMatrix(values=np.vstack(mats)), np.concatenate(labels)
