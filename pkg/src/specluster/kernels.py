"""Kernel functions, kernel-matrix assembly, and degree computation.

Supported kernels: RBF, chi-squared (for histograms), cosine, the
parameter-free community kernel for graphs, and an RBF over the
correlation distance for time-series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import DataMatrix, Graph
from .errors import MalformedInput

DEGREE_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selector: kind in {rbf, chi2, cosine, community, rbf_correlation}.

    ``sigma2`` is the squared bandwidth for the kernels that need one.
    """

    kind: str
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "chi2", "cosine", "community", "rbf_correlation"):
            raise MalformedInput(f"unknown kernel kind {self.kind!r}")
        needs_bw = self.kind in ("rbf", "chi2", "rbf_correlation")
        if needs_bw and (self.sigma2 is None or self.sigma2 <= 0):
            raise MalformedInput(f"{self.kind} kernel needs a positive squared bandwidth")
        if not needs_bw and self.sigma2 is not None:
            raise MalformedInput(f"{self.kind} kernel takes no bandwidth")


@dataclass(frozen=True)
class KernelMatrix:
    """Evaluations rows x training points; ``symmetric`` marks square Gram matrices."""

    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise MalformedInput("kernel matrix contains non-finite values")
        if self.symmetric:
            if vals.shape[0] != vals.shape[1]:
                raise MalformedInput("symmetric flag on a non-square matrix")
            if np.max(np.abs(vals - vals.T), initial=0.0) > 1e-12:
                raise MalformedInput("matrix flagged symmetric is not")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class DegreeVector:
    """Row sums of a kernel matrix; ``low`` flags rows at or below the floor."""

    values: np.ndarray
    low: np.ndarray


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.dot(xc, yc) / (nx * ny))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Scalar kernel evaluation between two vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise MalformedInput(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "rbf":
        return float(np.exp(-np.sum((x - y) ** 2) / spec.sigma2))
    if spec.kind == "chi2":
        s = x + y
        d = (x - y) ** 2
        chi2 = np.sum(np.divide(d, s, out=np.zeros_like(d), where=s != 0))
        return float(np.exp(-chi2 / spec.sigma2))
    if spec.kind == "cosine":
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            return 0.0  # isolated rows count as dissimilar
        return float(np.dot(x, y) / (nx * ny))
    if spec.kind == "rbf_correlation":
        dist2 = 0.5 * (1.0 - _pearson(x, y))
        return float(np.exp(-dist2 / spec.sigma2))
    raise MalformedInput("community kernel is graph-based; use community_kernel()")


def kernel_matrix(spec: KernelSpec, x: DataMatrix, y: DataMatrix | None = None) -> KernelMatrix:
    """Pairwise kernel evaluations; symmetric flag set when y is x (or omitted)."""
    same = y is None or y is x
    ydat = x if same else y
    if x.cols != ydat.cols:
        raise MalformedInput(f"dimension mismatch: {x.cols} vs {ydat.cols}")
    a, b = x.values, ydat.values

    if spec.kind == "rbf":
        d2 = cdist(a, b, metric="sqeuclidean")
        vals = np.exp(-d2 / spec.sigma2)
    elif spec.kind == "chi2":
        vals = np.empty((a.shape[0], b.shape[0]))
        for i in range(a.shape[0]):
            s = a[i] + b
            d = (a[i] - b) ** 2
            chi2 = np.sum(np.divide(d, s, out=np.zeros_like(d), where=s != 0), axis=1)
            vals[i] = np.exp(-chi2 / spec.sigma2)
    elif spec.kind == "cosine":
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        denom = np.outer(na, nb)
        vals = np.divide(a @ b.T, denom, out=np.zeros((a.shape[0], b.shape[0])), where=denom != 0)
    elif spec.kind == "rbf_correlation":
        ac = a - a.mean(axis=1, keepdims=True)
        bc = b - b.mean(axis=1, keepdims=True)
        na = np.linalg.norm(ac, axis=1)
        nb = np.linalg.norm(bc, axis=1)
        denom = np.outer(na, nb)
        r = np.divide(ac @ bc.T, denom, out=np.zeros((a.shape[0], b.shape[0])), where=denom != 0)
        vals = np.exp(-0.5 * (1.0 - r) / spec.sigma2)
    else:
        raise MalformedInput("community kernel is graph-based; use community_kernel()")

    if same:
        vals = 0.5 * (vals + vals.T)  # kill rounding asymmetry
    return KernelMatrix(values=vals, symmetric=same)


def community_kernel(g: Graph, rows=None, cols=None) -> KernelMatrix:
    """Similarity = total edge weight among the common neighbors of two nodes.

    Neighborhoods are closed (every node counts as its own neighbor), so an
    edge contributes to the similarity of its endpoints and no connected node
    has an all-zero row.  Each unordered pair {k, l} with an edge counts
    once, weighted.  ``rows``/``cols`` select a rectangular block (defaults:
    all nodes vs all nodes).
    """
    a = g.adjacency()
    nbr = [np.append(np.flatnonzero(a[i] > 0), i) for i in range(g.n_nodes)]
    nbr = [np.sort(x) for x in nbr]
    row_ids = list(range(g.n_nodes)) if rows is None else list(rows)
    col_ids = list(range(g.n_nodes)) if cols is None else list(cols)
    sym = rows is None and cols is None
    vals = np.zeros((len(row_ids), len(col_ids)))
    cache: dict[tuple[int, int], float] = {}
    for i, u in enumerate(row_ids):
        for j, v in enumerate(col_ids):
            key = (u, v) if u <= v else (v, u)
            if key in cache:
                vals[i, j] = cache[key]
                continue
            common = np.intersect1d(nbr[u], nbr[v], assume_unique=True)
            total = 0.5 * a[np.ix_(common, common)].sum() if common.size >= 2 else 0.0
            cache[key] = total
            vals[i, j] = total
    return KernelMatrix(values=vals, symmetric=sym)


def degree_vector(k: KernelMatrix) -> DegreeVector:
    """Exact row sums; rows at or below the degree floor are flagged."""
    d = k.values.sum(axis=1)
    return DegreeVector(values=d, low=d <= DEGREE_FLOOR)
