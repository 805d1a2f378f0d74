"""End-to-end community detection.

A training subgraph is extracted by greedy maximization of the expansion
factor |N(A)|/|A|, a model per grid cell is trained on it, candidates are
judged on a validation node set (two-stage: predict labels from adjacency
structure, then score them on the validation subgraph), and the winning
model labels the whole network blockwise through the out-of-sample map.

Training is restricted to the largest connected component of the training
kernel: rows with no similarity mass to the rest of the subset would make
the degree weighting singular or hand the leading eigenvectors to spurious
single-node components.  Pruned and informationless nodes are reported in
the result.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .data import DataMatrix, Graph, Partition, adjacency_rows, induced_subgraph
from .errors import MalformedInput, SpeclusterError
from .kernels import DEGREE_FLOOR, KernelMatrix, KernelSpec, community_kernel, kernel_matrix
from .ksc import KscModel, ScoreMatrix, assign_hamming, project, train_ksc
from .metrics import ari, conductance, modularity
from .model_selection import SENTINEL, GridSpec, SelectionResult, _pick_best, blf
from .sksc import ams, compute_prototypes, soft_assign

COSINE_NODE_CUTOFF = 2000  # larger graphs default to the sparse-friendly cosine kernel
SMALL_GRAPH_NODES = 200
SMALL_GRAPH_FRACTIONS = (0.70, 0.30)
LARGE_GRAPH_FRACTIONS = (0.15, 0.35)


@dataclass(frozen=True)
class EfConfig:
    """Subset size, stall budget for the swap search, and seed."""

    subset_size: int
    stall_budget: int = 2000
    seed: int = 0

    def validate(self, n_nodes: int):
        if not 1 <= self.subset_size < n_nodes:
            raise MalformedInput(f"subset size must be in [1, {n_nodes - 1}]")
        if self.stall_budget < 1:
            raise MalformedInput("stall budget must be >= 1")


@dataclass(frozen=True)
class CommunityResult:
    partition: Partition
    memberships: np.ndarray
    k: int
    param: float | None
    kernel_kind: str
    metrics: dict
    selection: SelectionResult
    train_nodes: tuple
    pruned_nodes: tuple
    uninformative_nodes: tuple
    seconds: float


def expansion_factor(g: Graph, subset) -> float:
    """|outside neighborhood| / |subset| for a nonempty proper node subset."""
    members = set(int(v) for v in subset)
    if not members or len(members) >= g.n_nodes:
        raise MalformedInput("subset must be nonempty and proper")
    boundary = set()
    for u, v in zip(g.edges_u, g.edges_v):
        if u in members and v not in members:
            boundary.add(int(v))
        elif v in members and u not in members:
            boundary.add(int(u))
    return len(boundary) / len(members)


def ef_subset(g: Graph, cfg: EfConfig) -> np.ndarray:
    """Greedy random-swap maximization of the expansion factor.

    A random member and non-member are proposed for exchange; the swap is
    kept only if it strictly improves the expansion factor, and the search
    stops after ``stall_budget`` consecutive rejections.
    """
    cfg.validate(g.n_nodes)
    rng = np.random.default_rng(cfg.seed)
    nbrs = g.neighbors()
    in_set = np.zeros(g.n_nodes, dtype=bool)
    chosen = rng.choice(g.n_nodes, size=cfg.subset_size, replace=False)
    in_set[chosen] = True

    # count of subset neighbors per node; EF numerator = outside nodes with count > 0
    inside_links = np.zeros(g.n_nodes, dtype=np.int64)
    for v in np.flatnonzero(in_set):
        for w in nbrs[v]:
            inside_links[w] += 1
    size = cfg.subset_size

    def current_ef():
        return np.count_nonzero(~in_set & (inside_links > 0)) / size

    def shift(node, sign):
        for w in nbrs[node]:
            inside_links[w] += sign

    ef_now = current_ef()
    stall = 0
    members = np.flatnonzero(in_set)
    outsiders = np.flatnonzero(~in_set)
    while stall < cfg.stall_budget:
        drop = int(members[rng.integers(members.size)])
        add = int(outsiders[rng.integers(outsiders.size)])
        in_set[drop] = False
        in_set[add] = True
        shift(add, +1)
        shift(drop, -1)
        ef_new = current_ef()
        if ef_new > ef_now:
            ef_now = ef_new
            members = np.flatnonzero(in_set)
            outsiders = np.flatnonzero(~in_set)
            stall = 0
        else:
            in_set[drop] = True
            in_set[add] = False
            shift(drop, +1)
            shift(add, -1)
            stall += 1
    return np.sort(np.flatnonzero(in_set))


def default_kernel_kind(g: Graph) -> str:
    """Community kernel for unweighted graphs, RBF on adjacency rows for
    weighted ones, cosine beyond the large-graph cutoff."""
    if g.n_nodes > COSINE_NODE_CUTOFF:
        return "cosine"
    if np.allclose(g.weights, 1.0):
        return "community"
    return "rbf"


def _train_kernel(g: Graph, kind: str, param, train_idx):
    if kind == "community":
        vals = community_kernel(g, rows=train_idx, cols=train_idx).values
        return KernelMatrix(values=0.5 * (vals + vals.T), symmetric=True), None
    spec = KernelSpec(kind=kind, sigma2=param) if kind in ("rbf", "chi2") else KernelSpec(kind=kind)
    rows = adjacency_rows(g, train_idx)
    return kernel_matrix(spec, rows), (spec, rows)


def _test_kernel_block(g: Graph, kind: str, cached, train_idx, block) -> KernelMatrix:
    if kind == "community":
        return community_kernel(g, rows=block, cols=train_idx)
    spec, train_rows = cached
    return kernel_matrix(spec, adjacency_rows(g, block), train_rows)


def _largest_kernel_component(values: np.ndarray) -> np.ndarray:
    """Indices of the biggest connected component of the kernel support graph."""
    mask = values > DEGREE_FLOOR
    np.fill_diagonal(mask, False)
    n_comp, labels = connected_components(csr_matrix(mask), directed=False)
    if n_comp == 1:
        return np.arange(values.shape[0])
    sizes = np.bincount(labels)
    return np.flatnonzero(labels == sizes.argmax())


def _degree_normalized(scores: ScoreMatrix, kmat: KernelMatrix) -> ScoreMatrix:
    """Scores divided by the kernel degree of each evaluated point.

    This is the model-based eigenvector coordinate up to per-direction
    scale; it removes hub-magnitude spread before prototype distances.
    """
    d = kmat.values.sum(axis=1)
    d = np.where(d > 0, d, 1.0)
    return ScoreMatrix(values=scores.values / d[:, None])


def blockwise_scores(g: Graph, model: KscModel, kind: str, cached, train_idx,
                     block_size: int):
    """Kernel rows and scores for every node, computed block by block."""
    if block_size < 1:
        raise MalformedInput("block size must be >= 1")
    blocks = [list(range(s, min(s + block_size, g.n_nodes)))
              for s in range(0, g.n_nodes, block_size)]

    def one(block):
        km = _test_kernel_block(g, kind, cached, train_idx, block)
        return km.values, project(model, km).values

    threads = int(os.environ.get("SPECLUSTER_THREADS", "1") or "1")
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pieces = list(pool.map(one, blocks))
    else:
        pieces = [one(b) for b in blocks]
    kvals = np.vstack([p[0] for p in pieces])
    svals = np.vstack([p[1] for p in pieces])
    return KernelMatrix(values=kvals), ScoreMatrix(values=svals)


def _neighbor_vote(g: Graph, memberships: np.ndarray, nodes) -> np.ndarray:
    """Soft-membership vote over graph neighbors for kernel-blind nodes."""
    out = memberships.copy()
    adj = g.adjacency()
    for v in nodes:
        w = adj[v]
        mass = w @ memberships
        total = mass.sum()
        if total > 0:
            out[v] = mass / total
    return out


def detect_communities(g: Graph, grid: GridSpec, cfg: EfConfig | None = None,
                       block_size: int = 1024, kernel_kind: str | None = None,
                       truth: Partition | None = None) -> CommunityResult:
    """Subset extraction, model selection, and full-graph membership assignment."""
    t0 = time.perf_counter()
    kind = kernel_kind or default_kernel_kind(g)
    fractions = SMALL_GRAPH_FRACTIONS if g.n_nodes < SMALL_GRAPH_NODES else LARGE_GRAPH_FRACTIONS
    if cfg is None:
        cfg = EfConfig(subset_size=max(2, int(round(fractions[0] * g.n_nodes))))
    subset = ef_subset(g, cfg)

    k_probe, _ = _train_kernel(g, kind, grid.params[0], subset)
    comp = _largest_kernel_component(k_probe.values)
    train_idx = subset[comp]
    pruned = tuple(int(i) for i in np.setdiff1d(subset, train_idx))

    rng = np.random.default_rng(cfg.seed)
    rest = np.setdiff1d(np.arange(g.n_nodes), train_idx)
    n_val = max(1, min(rest.size, int(round(fractions[1] * g.n_nodes))))
    val_idx = np.sort(rng.choice(rest, size=n_val, replace=False))
    val_graph = induced_subgraph(g, val_idx)

    scores: dict = {}
    failures: dict = {}
    trained: dict = {}
    for k in grid.k_values:
        for param in grid.params:
            cell = (int(k), param)
            try:
                k_tr, cached = _train_kernel(g, kind, param, train_idx)
                model, train_part = train_ksc(k_tr, int(k))
                k_val = _test_kernel_block(g, kind, cached, train_idx, val_idx)
                val_scores = project(model, k_val)
                if grid.criterion == "mod":
                    part = assign_hamming(val_scores, model.codebook)
                    scores[cell] = modularity(val_graph, part)
                elif grid.criterion == "blf":
                    scores[cell] = blf(val_scores, assign_hamming(val_scores, model.codebook),
                                       grid.eta)
                else:
                    protos = compute_prototypes(
                        _degree_normalized(project(model, k_tr), k_tr), train_part)
                    scores[cell] = ams(soft_assign(_degree_normalized(val_scores, k_val), protos))
                trained[cell] = (model, train_part, cached)
            except SpeclusterError as exc:
                scores[cell] = SENTINEL
                failures[cell] = str(exc)
    (best_k, best_param), best_score = _pick_best(scores)
    selection = SelectionResult(scores=scores, best_k=best_k, best_param=best_param,
                                best_score=best_score, failures=failures)

    model, train_part, cached = trained[(best_k, best_param)]
    k_tr, _ = _train_kernel(g, kind, best_param, train_idx)
    k_all, score_all = blockwise_scores(g, model, kind, cached, train_idx, block_size)
    protos = compute_prototypes(_degree_normalized(project(model, k_tr), k_tr), train_part)
    soft = soft_assign(_degree_normalized(score_all, k_all), protos)

    blind = np.flatnonzero(k_all.values.sum(axis=1) <= DEGREE_FLOOR)
    memberships = soft.memberships
    if blind.size:
        memberships = _neighbor_vote(g, memberships, blind)
    labels = memberships.argmax(axis=1)
    partition = Partition(labels=labels, k=best_k)

    mets = {"modularity": modularity(g, partition),
            "conductance_mean": conductance(g, partition)[1]}
    if truth is not None:
        mets["ari"] = ari(partition, truth)
    return CommunityResult(
        partition=partition,
        memberships=memberships,
        k=best_k,
        param=best_param,
        kernel_kind=kind,
        metrics=mets,
        selection=selection,
        train_nodes=tuple(int(i) for i in train_idx),
        pruned_nodes=pruned,
        uninformative_nodes=tuple(int(i) for i in blind),
        seconds=time.perf_counter() - t0,
    )
