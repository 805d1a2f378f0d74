"""Hyper-parameter and cluster-count selection over a train/validation protocol.

Three criteria are supported: BLF (balanced line fit of validation scores),
AMS (average membership strength of soft validation assignments) and MOD
(modularity of the predicted validation partition on the validation
subgraph).  Graph selection is two-stage: candidate models predict labels
for validation nodes from their adjacency rows, then the labels are judged
on the validation adjacency matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix, Graph, Partition, adjacency_rows, induced_subgraph
from .errors import AllCandidatesFailed, MalformedInput, SpeclusterError
from .kernels import KernelMatrix, KernelSpec, community_kernel, kernel_matrix
from .ksc import KscModel, ScoreMatrix, assign_hamming, project, train_ksc
from .metrics import modularity
from .sksc import ams, compute_prototypes, soft_assign

SENTINEL = float("-inf")
DEFAULT_ETA = 0.5


@dataclass(frozen=True)
class GridSpec:
    """Search grid: cluster counts, kernel parameters, criterion, split fractions.

    ``params`` are squared bandwidths for kernels that take one; use (None,)
    for parameter-free kernels.  Fractions are (train, validation).
    """

    k_values: tuple
    params: tuple = (None,)
    criterion: str = "ams"
    eta: float = DEFAULT_ETA
    fractions: tuple = (0.15, 0.35)

    def __post_init__(self):
        if not self.k_values or not self.params:
            raise MalformedInput("grids must be nonempty")
        if self.criterion not in ("blf", "ams", "mod"):
            raise MalformedInput(f"unknown criterion {self.criterion!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise MalformedInput("eta must lie in [0, 1]")
        tr, va = self.fractions
        if not (0 < tr < 1 and 0 < va < 1 and tr + va <= 1):
            raise MalformedInput("split fractions must lie in (0,1) and sum to at most 1")


@dataclass(frozen=True)
class SelectionResult:
    """Score surface plus the selected cell."""

    scores: dict
    best_k: int
    best_param: float | None
    best_score: float
    failures: dict = field(default_factory=dict)

    def surface_rows(self):
        """(k, param, score) rows for CSV export."""
        for (k, param), score in sorted(
            self.scores.items(), key=lambda kv: (kv[0][0], _param_key(kv[0][1]))
        ):
            yield k, param, score


def _param_key(p):
    return (0, 0.0) if p is None else (1, float(p))


def _pick_best(scores: dict) -> tuple:
    """Highest score; ties prefer smaller k, then smaller parameter."""
    finite = {cell: s for cell, s in scores.items() if np.isfinite(s)}
    if not finite:
        raise AllCandidatesFailed("no grid cell produced a finite score")
    return min(finite.items(), key=lambda kv: (-kv[1], kv[0][0], _param_key(kv[0][1])))


def linefit(scores: ScoreMatrix, part: Partition) -> float:
    """Collinearity of per-cluster score clouds, 0 (spherical) to 1 (collinear).

    Uses the share of variance on each cluster's leading principal axis,
    rescaled so that 1/(k-1) (isotropy) maps to 0.  One-dimensional score
    spaces (k = 2) are defined as perfectly collinear.  Singleton clusters
    and zero-variance clusters count as collinear.
    """
    k = part.k
    if k == 2 or scores.cols < 2:
        return 1.0
    n = part.n
    total = 0.0
    for c in range(k):
        members = scores.values[part.labels == c]
        if members.shape[0] <= 1:
            rho = 1.0
        else:
            cov = np.cov(members, rowvar=False)
            eigs = np.linalg.eigvalsh(cov)
            trace = eigs.sum()
            rho = 1.0 if trace <= 0 else float(eigs[-1] / trace)
        floor = 1.0 / (k - 1)
        total += (members.shape[0] / n) * (rho - floor) / (1.0 - floor)
    return float(min(max(total, 0.0), 1.0))


def blf(val_scores: ScoreMatrix, val_part: Partition, eta: float = DEFAULT_ETA) -> float:
    """eta * linefit + (1 - eta) * balance; -inf when a cluster is empty."""
    if val_part.k < 2:
        raise MalformedInput("BLF requires k >= 2")
    if not 0.0 <= eta <= 1.0:
        raise MalformedInput("eta must lie in [0, 1]")
    sizes = val_part.sizes()
    if np.any(sizes == 0):
        return SENTINEL
    balance = sizes.min() / sizes.max()
    return float(eta * linefit(val_scores, val_part) + (1.0 - eta) * balance)


def modularity_select(candidates, val_graph: Graph) -> SelectionResult:
    """Score candidate partitions of the validation nodes by modularity.

    ``candidates`` holds ((k, param), model, stage-one kernel rows) triples;
    a candidate of None marks a failed training run.
    """
    scores: dict = {}
    failures: dict = {}
    for cell, model, stage_one in candidates:
        if model is None:
            scores[cell] = SENTINEL
            failures[cell] = stage_one if isinstance(stage_one, str) else "training failed"
            continue
        val_scores = project(model, stage_one)
        part = assign_hamming(val_scores, model.codebook)
        try:
            scores[cell] = modularity(val_graph, part)
        except SpeclusterError as exc:
            scores[cell] = SENTINEL
            failures[cell] = str(exc)
    (best_k, best_param), best = _pick_best(scores)
    return SelectionResult(scores=scores, best_k=best_k, best_param=best_param,
                           best_score=best, failures=failures)


def random_split(n: int, fractions: tuple, rng: np.random.Generator):
    """Disjoint (train, validation) index arrays drawn without replacement."""
    n_tr = max(2, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    if n_tr + n_val > n:
        raise MalformedInput("data too small for the requested split")
    order = rng.permutation(n)
    return np.sort(order[:n_tr]), np.sort(order[n_tr : n_tr + n_val])


def _cell_score_matrix(x: DataMatrix, grid: GridSpec, cell, train_idx, val_idx):
    k, param = cell
    spec = KernelSpec(kind="rbf", sigma2=param) if param is not None else KernelSpec(kind="cosine")
    x_tr = DataMatrix(values=x.values[train_idx])
    x_val = DataMatrix(values=x.values[val_idx])
    k_tr = kernel_matrix(spec, x_tr)
    model, train_part = train_ksc(k_tr, k, kernel=spec)
    k_val = kernel_matrix(spec, x_val, x_tr)
    val_scores = project(model, k_val)
    if grid.criterion == "blf":
        return blf(val_scores, assign_hamming(val_scores, model.codebook), grid.eta)
    train_scores = project(model, k_tr)
    protos = compute_prototypes(train_scores, train_part)
    return ams(soft_assign(val_scores, protos))


def _cell_score_graph(g: Graph, grid: GridSpec, cell, train_idx, val_idx, kernel_kind):
    k, param = cell
    if kernel_kind == "community":
        k_tr = KernelMatrix(values=community_kernel(g, rows=train_idx, cols=train_idx).values,
                            symmetric=True)
        k_val = community_kernel(g, rows=val_idx, cols=train_idx)
    else:
        spec = (KernelSpec(kind=kernel_kind, sigma2=param)
                if kernel_kind == "rbf" else KernelSpec(kind=kernel_kind))
        rows_tr = adjacency_rows(g, train_idx)
        rows_val = adjacency_rows(g, val_idx)
        k_tr = kernel_matrix(spec, rows_tr)
        k_val = kernel_matrix(spec, rows_val, rows_tr)
    model, train_part = train_ksc(k_tr, k)
    val_scores = project(model, k_val)
    if grid.criterion == "mod":
        part = assign_hamming(val_scores, model.codebook)
        val_graph = induced_subgraph(g, val_idx)
        return modularity(val_graph, part)
    if grid.criterion == "blf":
        return blf(val_scores, assign_hamming(val_scores, model.codebook), grid.eta)
    train_scores = project(model, k_tr)
    protos = compute_prototypes(train_scores, train_part)
    return ams(soft_assign(val_scores, protos))


def select(grid: GridSpec, data, splitter=None, seed: int = 0,
           kernel_kind: str | None = None) -> SelectionResult:
    """Evaluate every grid cell on a seeded split and keep the best score.

    ``data`` is a DataMatrix (criteria blf/ams, RBF or cosine kernel) or a
    Graph (any criterion; community kernel by default).  A custom
    ``splitter(n, fractions, rng)`` may replace the random split.
    """
    rng = np.random.default_rng(seed)
    is_graph = isinstance(data, Graph)
    n = data.n_nodes if is_graph else data.rows
    splitter = splitter or random_split
    train_idx, val_idx = splitter(n, grid.fractions, rng)
    if is_graph and kernel_kind is None:
        kernel_kind = "community"

    scores: dict = {}
    failures: dict = {}
    for k in grid.k_values:
        for param in grid.params:
            cell = (int(k), param)
            try:
                if is_graph:
                    scores[cell] = _cell_score_graph(data, grid, cell, train_idx, val_idx,
                                                     kernel_kind)
                else:
                    scores[cell] = _cell_score_matrix(data, grid, cell, train_idx, val_idx)
            except SpeclusterError as exc:
                scores[cell] = SENTINEL
                failures[cell] = str(exc)
    (best_k, best_param), best = _pick_best(scores)
    return SelectionResult(scores=scores, best_k=best_k, best_param=best_param,
                           best_score=best, failures=failures)
