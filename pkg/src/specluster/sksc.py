"""Soft cluster assignment from score-space prototypes, and the AMS score.

Points that sit on the same line through the origin of the score space
belong to the same cluster, so membership strength is derived from the
cosine distance to per-cluster prototype directions.  For k = 2 the scores
are one-dimensional and Euclidean distances are used instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Partition
from .errors import EmptyCluster, MalformedInput
from .kernels import KernelMatrix
from .ksc import KscModel, ScoreMatrix, project

AMS_SENTINEL = float("-inf")


@dataclass(frozen=True)
class PrototypeSet:
    """Per-cluster mean score vectors and member counts."""

    prototypes: np.ndarray
    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.prototypes.shape[0]


@dataclass(frozen=True)
class SoftPartition:
    """Membership matrix with rows summing to 1; hard labels take the argmax."""

    memberships: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.memberships, dtype=float)
        if np.any(m < -1e-12):
            raise MalformedInput("negative membership")
        sums = m.sum(axis=1)
        if np.max(np.abs(sums - 1.0), initial=0.0) > 1e-10:
            raise MalformedInput("membership rows must sum to 1")
        object.__setattr__(self, "memberships", m)

    @property
    def k(self) -> int:
        return self.memberships.shape[1]

    @property
    def n(self) -> int:
        return self.memberships.shape[0]

    def hard(self) -> Partition:
        # argmax returns the lowest index on ties
        return Partition(labels=self.memberships.argmax(axis=1), k=self.k)


def compute_prototypes(scores: ScoreMatrix, part: Partition) -> PrototypeSet:
    """Per-cluster means of the score vectors."""
    if scores.rows != part.n:
        raise MalformedInput("scores and partition cover different point counts")
    protos = np.zeros((part.k, scores.cols))
    counts = part.sizes()
    if np.any(counts == 0):
        raise EmptyCluster(f"clusters without members: {np.flatnonzero(counts == 0).tolist()}")
    for c in range(part.k):
        protos[c] = scores.values[part.labels == c].mean(axis=0)
    return PrototypeSet(prototypes=protos, counts=counts)


def _distance_rows(scores: np.ndarray, protos: np.ndarray, k: int) -> np.ndarray:
    if k == 2:
        # 1-d scores lie on a line; cosine cannot discriminate there
        return np.linalg.norm(scores[:, None, :] - protos[None, :, :], axis=2)
    norms_e = np.linalg.norm(scores, axis=1)
    norms_s = np.linalg.norm(protos, axis=1)
    denom = np.outer(norms_e, norms_s)
    cos = np.divide(scores @ protos.T, denom, out=np.zeros((scores.shape[0], protos.shape[0])),
                    where=denom != 0)
    dist = 1.0 - cos
    # a zero score vector is equidistant from every prototype
    dist[norms_e == 0] = 1.0
    return dist


def soft_assign(scores: ScoreMatrix, protos: PrototypeSet) -> SoftPartition:
    """Memberships from products of distances to the other prototypes.

    cm_i^(q) = prod_{j != q} d_ij / sum_p prod_{j != p} d_ij.  Rows with one
    zero distance become one-hot; several zero distances (or an all-zero
    product row) share the mass uniformly over the zero-distance clusters.
    """
    k = protos.k
    if scores.cols != protos.prototypes.shape[1]:
        raise MalformedInput("score dimension does not match prototypes")
    dist = _distance_rows(scores.values, protos.prototypes, k)
    n = dist.shape[0]
    members = np.zeros((n, k))
    for i in range(n):
        d = dist[i]
        zero = d <= 0
        if zero.any():
            members[i, zero] = 1.0 / zero.sum()
            continue
        logs = np.log(d)
        total = logs.sum()
        prods = np.exp(total - logs)  # prod over j != q
        denom = prods.sum()
        if denom == 0:
            members[i] = 1.0 / k
        else:
            members[i] = prods / denom
    return SoftPartition(memberships=members)


def ams(soft: SoftPartition) -> float:
    """Average winning membership per cluster, then averaged over clusters.

    Returns -inf when some cluster claims no point, so grid searches reject
    that configuration.
    """
    hard = soft.hard()
    sizes = hard.sizes()
    if np.any(sizes == 0):
        return AMS_SENTINEL
    win = soft.memberships[np.arange(soft.n), hard.labels]
    per_cluster = np.zeros(soft.k)
    np.add.at(per_cluster, hard.labels, win)
    return float(np.mean(per_cluster / sizes))


def sksc_full(model: KscModel, k_train: KernelMatrix, k_test: KernelMatrix,
              train_part: Partition | None = None) -> SoftPartition:
    """KSC initialization, prototype refresh, soft out-of-sample assignment."""
    train_scores = project(model, k_train)
    if train_part is None:
        from .ksc import assign_hamming

        train_part = assign_hamming(train_scores, model.codebook)
    protos = compute_prototypes(train_scores, train_part)
    test_scores = project(model, k_test)
    return soft_assign(test_scores, protos)
