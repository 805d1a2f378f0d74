"""Incremental kernel spectral clustering for non-stationary streams.

The model is reduced to k centroids in input space plus k centroids in the
eigenspace.  New points are scored against the input centroids through the
out-of-sample map, converted to model-based eigenspace coordinates via
alpha = e / (lambda * degree), assigned to the nearest eigenspace centroid,
and both centroid sets are updated online.  Low kernel degree births a new
cluster, cosine-similar eigenspace centroids merge, and clusters that stop
receiving points are retired.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataMatrix, Partition
from .errors import EmptyCluster, MalformedInput
from .kernels import KernelSpec, kernel_eval
from .ksc import KscModel
from ._kmeans import kmeans as _batch_kmeans
from .metrics import ari as _ari, silhouette as _silhouette

CALIBRATION_POINTS = 100
EPS_PERCENTILE = 5.0
MERGE_THRESHOLD = 0.5
DEATH_HORIZON = 500
OUTLIER_MIN_SIZE = 5


@dataclass
class ClusterCentroid:
    uid: int
    input_center: np.ndarray
    eigen_center: np.ndarray
    count: int
    stale: int = 0


@dataclass
class IkscModel:
    """Centroid-based streaming model; mutated only by iksc_update."""

    kernel: KernelSpec
    eigenvalues: np.ndarray
    biases: np.ndarray
    clusters: list
    eps_deg: float | None = None
    merge_threshold: float = MERGE_THRESHOLD
    death_horizon: int = DEATH_HORIZON
    next_uid: int = 0

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def score_dim(self) -> int:
        return self.eigenvalues.size

    def copy(self) -> "IkscModel":
        return IkscModel(
            kernel=self.kernel,
            eigenvalues=self.eigenvalues.copy(),
            biases=self.biases.copy(),
            clusters=[ClusterCentroid(c.uid, c.input_center.copy(), c.eigen_center.copy(),
                                      c.count, c.stale) for c in self.clusters],
            eps_deg=self.eps_deg,
            merge_threshold=self.merge_threshold,
            death_horizon=self.death_horizon,
            next_uid=self.next_uid,
        )


@dataclass(frozen=True)
class StreamEvent:
    index: int
    kind: str          # birth | merge | death | outlier
    clusters: tuple
    detail: str = ""

    def to_json(self) -> dict:
        return {"index": self.index, "kind": self.kind,
                "clusters": list(self.clusters), "detail": self.detail}


@dataclass(frozen=True)
class StreamReport:
    assignments: np.ndarray          # persistent cluster uid per streamed point
    events: tuple
    running_ari: np.ndarray | None   # per-point cumulative agreement with truth
    msv_trace: tuple                 # (index, msv) samples on a trailing window
    final_ari: float | None


def init_iksc(model: KscModel, train_data: DataMatrix, train_part: Partition,
              merge_threshold: float = MERGE_THRESHOLD,
              death_horizon: int = DEATH_HORIZON,
              eps_deg: float | None = None) -> IkscModel:
    """Reduce a trained model to per-cluster centroids in both spaces."""
    if model.kernel is None:
        raise MalformedInput("the trained model must carry its kernel spec")
    if train_part.n != train_data.rows or train_part.n != model.n_train:
        raise MalformedInput("training data, partition and model disagree")
    sizes = train_part.sizes()
    if np.any(sizes == 0):
        raise EmptyCluster(f"clusters without members: {np.flatnonzero(sizes == 0).tolist()}")
    clusters = []
    for c in range(train_part.k):
        members = np.flatnonzero(train_part.labels == c)
        clusters.append(ClusterCentroid(
            uid=c,
            input_center=train_data.values[members].mean(axis=0),
            eigen_center=model.alphas[members].mean(axis=0),
            count=int(members.size),
        ))
    return IkscModel(kernel=model.kernel, eigenvalues=model.eigenvalues.copy(),
                     biases=model.biases.copy(), clusters=clusters,
                     merge_threshold=merge_threshold, death_horizon=death_horizon,
                     eps_deg=eps_deg, next_uid=train_part.k)


def _running_update(center: np.ndarray, x: np.ndarray, n_old: int) -> np.ndarray:
    # n_old = 1 jumps straight to x; larger counts move 1/n_old of the gap
    return center + (x - center) / n_old


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def iksc_update(model: IkscModel, x_new, index: int = 0, allow_birth: bool = True):
    """Process one stream point; returns (assigned uid, events, kernel degree)."""
    x = np.asarray(x_new, dtype=float)
    events: list[StreamEvent] = []
    omega_row = np.array([kernel_eval(model.kernel, x, c.input_center) for c in model.clusters])
    degree = float(omega_row.sum())

    born = allow_birth and model.eps_deg is not None and degree < model.eps_deg
    e_test = omega_row @ np.array([c.eigen_center for c in model.clusters]) + model.biases
    if degree > 0:
        alpha_test = e_test / (model.eigenvalues * degree)
    else:
        alpha_test = np.zeros(model.score_dim)

    if born:
        uid = model.next_uid
        model.next_uid += 1
        model.clusters.append(ClusterCentroid(uid=uid, input_center=x.copy(),
                                              eigen_center=alpha_test.copy(), count=1))
        events.append(StreamEvent(index=index, kind="birth", clusters=(uid,),
                                  detail=f"degree {degree:.3e} below {model.eps_deg:.3e}"))
        for c in model.clusters[:-1]:
            c.stale += 1
        assigned = uid
    else:
        dists = [np.linalg.norm(alpha_test - c.eigen_center) for c in model.clusters]
        hit = int(np.argmin(dists))
        target = model.clusters[hit]
        target.eigen_center = _running_update(target.eigen_center, alpha_test, target.count)
        target.input_center = _running_update(target.input_center, x, target.count)
        target.count += 1
        target.stale = 0
        for i, c in enumerate(model.clusters):
            if i != hit:
                c.stale += 1
        assigned = target.uid

    events.extend(_merge_pass(model, index))
    events.extend(_death_pass(model, index))
    return assigned, events, degree


def _merge_pass(model: IkscModel, index: int):
    events = []
    merged = True
    while merged and model.k > 1:
        merged = False
        best = None
        for i in range(model.k):
            for j in range(i + 1, model.k):
                sim = _cosine(model.clusters[i].eigen_center, model.clusters[j].eigen_center)
                if sim > model.merge_threshold and (best is None or sim > best[0]):
                    best = (sim, i, j)
        if best is not None:
            _, i, j = best
            a, b = model.clusters[i], model.clusters[j]
            keep, drop = (a, b) if (a.count, -a.uid) >= (b.count, -b.uid) else (b, a)
            total = a.count + b.count
            keep.input_center = (a.count * a.input_center + b.count * b.input_center) / total
            keep.eigen_center = (a.count * a.eigen_center + b.count * b.eigen_center) / total
            keep.count = total
            keep.stale = min(a.stale, b.stale)
            model.clusters.remove(drop)
            events.append(StreamEvent(index=index, kind="merge",
                                      clusters=(keep.uid, drop.uid),
                                      detail=f"cosine {best[0]:.3f}"))
            merged = True
    return events


def _death_pass(model: IkscModel, index: int):
    events = []
    if model.k <= 1:
        return events
    survivors = []
    for c in model.clusters:
        if c.stale >= model.death_horizon and len(model.clusters) - len(events) > 1:
            events.append(StreamEvent(index=index, kind="death", clusters=(c.uid,),
                                      detail=f"stale for {c.stale} points"))
        else:
            survivors.append(c)
    if events:
        model.clusters = survivors
    return events


def run_stream(model: IkscModel, batch: DataMatrix, truth=None,
               eps_percentile: float = EPS_PERCENTILE,
               min_size: int = OUTLIER_MIN_SIZE,
               msv_every: int = 0, msv_window: int = 200) -> StreamReport:
    """Feed points sequentially; calibrate the birth threshold on the prefix.

    When ``model.eps_deg`` is unset, the first CALIBRATION_POINTS degrees fix
    it at the given percentile and no births can happen during calibration.
    Clusters smaller than ``min_size`` are retired as outliers at the end.
    """
    n = batch.rows
    assignments = np.empty(n, dtype=np.int64)
    events: list[StreamEvent] = []
    degrees: list[float] = []
    calibrating = model.eps_deg is None
    truth_arr = None if truth is None else np.asarray(truth, dtype=np.int64)
    running = None if truth_arr is None else np.empty(n)
    msv_trace = []

    # incremental contingency between assigned uids and truth labels
    cont: dict[tuple[int, int], int] = {}

    for i in range(n):
        allow_birth = not (calibrating and i < CALIBRATION_POINTS)
        uid, evs, degree = iksc_update(model, batch.values[i], index=i, allow_birth=allow_birth)
        assignments[i] = uid
        events.extend(evs)
        if calibrating:
            degrees.append(degree)
            if i + 1 == CALIBRATION_POINTS:
                model.eps_deg = float(np.percentile(degrees, eps_percentile))
                calibrating = False
        if truth_arr is not None:
            cont[(int(truth_arr[i]), int(uid))] = cont.get((int(truth_arr[i]), int(uid)), 0) + 1
            running[i] = _ari_from_cells(cont, i + 1)
        if msv_every and (i + 1) % msv_every == 0 and i + 1 >= msv_window:
            window = slice(i + 1 - msv_window, i + 1)
            part = _dense_partition(assignments[window])
            if part.k >= 2:
                msv_trace.append((i, _silhouette(DataMatrix(values=batch.values[window]), part)[1]))

    for c in list(model.clusters):
        if c.count < min_size and model.k > 1:
            model.clusters.remove(c)
            events.append(StreamEvent(index=n - 1, kind="outlier", clusters=(c.uid,),
                                      detail=f"size {c.count} below {min_size}"))

    final = None
    if truth_arr is not None:
        final = _ari(_dense_partition(assignments), _dense_partition(truth_arr))
    return StreamReport(assignments=assignments, events=tuple(events),
                        running_ari=running, msv_trace=tuple(msv_trace), final_ari=final)


def _dense_partition(labels: np.ndarray) -> Partition:
    uniq, dense = np.unique(labels, return_inverse=True)
    return Partition(labels=dense, k=uniq.size)


def _ari_from_cells(cont: dict, n: int) -> float:
    rows: dict[int, int] = {}
    cols: dict[int, int] = {}
    sum_ij = 0.0
    for (r, c), v in cont.items():
        rows[r] = rows.get(r, 0) + v
        cols[c] = cols.get(c, 0) + v
        sum_ij += v * (v - 1) / 2
    sum_a = sum(v * (v - 1) / 2 for v in rows.values())
    sum_b = sum(v * (v - 1) / 2 for v in cols.values())
    total = n * (n - 1) / 2
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


@dataclass(frozen=True)
class KmeansStreamReport:
    assignments: np.ndarray
    centroids: np.ndarray
    movement: np.ndarray       # centroid displacement per batch
    final_ari: float | None


def incremental_kmeans(stream: DataMatrix, k: int, seed: int = 0, batch_size: int = 50,
                       truth=None) -> KmeansStreamReport:
    """Warm-started per-batch k-means: each batch refines the previous centers.

    Centroid mass accumulates across batches, so with k = 1 the centroid is
    the running mean of everything seen.
    """
    if k < 1:
        raise MalformedInput("k must be >= 1")
    rng = np.random.default_rng(seed)
    x = stream.values
    n = x.shape[0]
    first = x[: max(k, min(n, batch_size))]
    _, centers, _ = _batch_kmeans(first, k, rng, restarts=5)
    counts = np.zeros(k)
    assignments = np.empty(n, dtype=np.int64)
    movement = []
    start = 0
    while start < n:
        chunk = x[start : start + batch_size]
        old = centers.copy()
        for _ in range(3):  # a few weighted Lloyd sweeps per batch
            d2 = ((chunk[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            lab = d2.argmin(axis=1)
            for c in range(k):
                members = chunk[lab == c]
                if members.size == 0:
                    continue
                total = counts[c] + members.shape[0]
                centers[c] = (counts[c] * old[c] + members.sum(axis=0)) / total
        assignments[start : start + chunk.shape[0]] = lab
        for c in range(k):
            counts[c] += np.count_nonzero(lab == c)
        movement.append(float(np.linalg.norm(centers - old)))
        start += batch_size
    final = None
    if truth is not None:
        final = _ari(_dense_partition(assignments), _dense_partition(np.asarray(truth)))
    return KmeansStreamReport(assignments=assignments, centroids=centers,
                              movement=np.array(movement), final_ari=final)
