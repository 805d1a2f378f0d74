"""Kernel spectral clustering: training, ECOC decoding, out-of-sample extension.

Training solves the dual eigenproblem of a weighted kernel PCA formulation,

    D^-1 M_D Omega alpha = lambda alpha,

where D is the kernel degree matrix and M_D a degree-weighted centering
matrix.  The k-1 leading eigenvectors carry the cluster structure in their
signs; unseen points are scored by the affine map e = Omega_test alpha + b.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._kmeans import kmeans
from .data import Partition
from .errors import (
    DegenerateCodebook,
    MalformedInput,
    NonRealSpectrum,
    ZeroDegreeRow,
)
from .kernels import DEGREE_FLOOR, KernelMatrix, KernelSpec

IMAG_TOL = 1e-8


@dataclass(frozen=True)
class KscModel:
    """Trained clustering model.

    alphas       N_tr x (k-1), unit-norm columns, sign-normalized
    biases       k-1 affine offsets of the score map
    eigenvalues  k-1 leading eigenvalues, descending
    codebook     k sign patterns in {-1,+1}^(k-1), one per cluster
    """

    alphas: np.ndarray
    biases: np.ndarray
    eigenvalues: np.ndarray
    codebook: np.ndarray
    k: int
    kernel: KernelSpec | None = None
    train_source: str = ""

    @property
    def n_train(self) -> int:
        return self.alphas.shape[0]


@dataclass(frozen=True)
class ScoreMatrix:
    """Latent score variables: rows = evaluated points, cols = k-1 directions."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise MalformedInput("score matrix contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _sign(x: np.ndarray) -> np.ndarray:
    """Sign with sign(0) := +1."""
    return np.where(x >= 0, 1, -1).astype(np.int64)


def normalize_directions(vecs: np.ndarray) -> np.ndarray:
    """Unit-norm columns with the largest-|entry| component made positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        norm = np.linalg.norm(col)
        if norm > 0:
            col = col / norm
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            col = -col
        out[:, j] = col
    return out


def degree_weighting(omega: np.ndarray):
    """Inverse degrees and the centering matrix for the dual problem."""
    d = omega.sum(axis=1)
    bad = np.flatnonzero(d <= DEGREE_FLOOR)
    if bad.size:
        raise ZeroDegreeRow(bad)
    d_inv = 1.0 / d
    c = d_inv.sum()
    m_d = np.eye(omega.shape[0]) - np.outer(np.ones_like(d), d_inv) / c
    return d_inv, m_d


def build_codebook(sign_rows: np.ndarray, k: int) -> np.ndarray:
    """The k most frequent sign patterns (count desc, first occurrence breaks ties)."""
    seen = Counter(map(tuple, sign_rows))
    if len(seen) < k:
        raise DegenerateCodebook(
            f"only {len(seen)} distinct sign patterns among training points, need {k}"
        )
    first_idx = {}
    for i, row in enumerate(map(tuple, sign_rows)):
        first_idx.setdefault(row, i)
    ranked = sorted(seen, key=lambda w: (-seen[w], first_idx[w]))
    return np.array(ranked[:k], dtype=np.int64)


def train_ksc(k_matrix: KernelMatrix, k: int, kernel: KernelSpec | None = None,
              train_source: str = "") -> tuple[KscModel, Partition]:
    """Solve the dual eigenproblem and build the model plus training partition."""
    omega = k_matrix.values
    n = omega.shape[0]
    if omega.shape[0] != omega.shape[1]:
        raise MalformedInput("training kernel matrix must be square")
    if not 2 <= k <= n:
        raise MalformedInput(f"need 2 <= k <= {n}, got k={k}")

    d_inv, m_d = degree_weighting(omega)
    system = (d_inv[:, None] * m_d) @ omega
    eigvals, eigvecs = scipy.linalg.eig(system)

    order = np.argsort(-eigvals.real)
    top = order[: k - 1]
    lam = eigvals[top]
    vecs = eigvecs[:, top]
    if np.max(np.abs(lam.imag)) > IMAG_TOL or np.max(np.abs(vecs.imag)) > IMAG_TOL:
        raise NonRealSpectrum(
            f"imaginary part {max(np.max(np.abs(lam.imag)), np.max(np.abs(vecs.imag))):.3e} "
            f"exceeds {IMAG_TOL}"
        )
    lam = lam.real
    alphas = normalize_directions(vecs.real)

    # b_l recenters scores so the weighted mean of e is zero
    c = d_inv.sum()
    biases = -(d_inv @ (omega @ alphas)) / c

    signs = _sign(alphas)
    codebook = build_codebook(signs, k)
    labels = _decode(signs, codebook)
    model = KscModel(
        alphas=alphas,
        biases=biases,
        eigenvalues=lam,
        codebook=codebook,
        k=k,
        kernel=kernel,
        train_source=train_source,
    )
    return model, Partition(labels=labels, k=k)


def project(model: KscModel, k_test: KernelMatrix) -> ScoreMatrix:
    """Score unseen points: e = Omega_test alpha + b."""
    if k_test.values.shape[1] != model.n_train:
        raise MalformedInput(
            f"kernel has {k_test.values.shape[1]} columns, model expects {model.n_train}"
        )
    return ScoreMatrix(values=k_test.values @ model.alphas + model.biases)


def _decode(signs: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    # Hamming distance to each codeword; lowest index wins ties
    dists = (signs[:, None, :] != codebook[None, :, :]).sum(axis=2)
    return dists.argmin(axis=1)


def assign_hamming(scores: ScoreMatrix, codebook: np.ndarray) -> Partition:
    """ECOC decoding of binarized scores against the codebook."""
    if scores.cols != codebook.shape[1]:
        raise MalformedInput("score dimension does not match codeword length")
    labels = _decode(_sign(scores.values), codebook)
    return Partition(labels=labels, k=codebook.shape[0])


def classical_sc(similarity: KernelMatrix, k: int, laplacian: str = "sym",
                 seed: int = 0) -> Partition:
    """Spectral clustering baseline: Laplacian eigenvectors plus seeded k-means."""
    if laplacian not in ("unnorm", "sym", "rw"):
        raise MalformedInput(f"unknown laplacian {laplacian!r}")
    s = similarity.values
    if s.shape[0] != s.shape[1]:
        raise MalformedInput("similarity matrix must be square")
    if np.any(s < 0):
        raise MalformedInput("similarities must be nonnegative")
    if k < 1:
        raise MalformedInput("k must be >= 1")
    n = s.shape[0]
    d = s.sum(axis=1)
    if laplacian == "unnorm":
        lap = np.diag(d) - s
        eigvals, eigvecs = scipy.linalg.eigh(lap)
        u = eigvecs[:, :k]
    else:
        with np.errstate(divide="ignore"):
            d_isqrt = np.where(d > 0, 1.0 / np.sqrt(d), 0.0)
        lap = np.eye(n) - d_isqrt[:, None] * s * d_isqrt[None, :]
        lap = 0.5 * (lap + lap.T)
        eigvals, eigvecs = scipy.linalg.eigh(lap)
        u = eigvecs[:, :k]
        if laplacian == "rw":
            # random-walk eigenvectors via the symmetric similarity transform
            u = d_isqrt[:, None] * u
    rng = np.random.default_rng(seed)
    labels, _, _ = kmeans(u, k, rng, restarts=10)
    return Partition(labels=labels, k=k)


def model_to_json(model: KscModel) -> str:
    """Serialize a model; floats keep shortest round-trip precision."""
    doc = {
        "k": model.k,
        "kernel": None
        if model.kernel is None
        else {"kind": model.kernel.kind, "sigma2": model.kernel.sigma2},
        "eigenvalues": [float(x) for x in model.eigenvalues],
        "biases": [float(x) for x in model.biases],
        "alphas": [[float(x) for x in row] for row in model.alphas],
        "codebook": [[int(x) for x in row] for row in model.codebook],
        "train_source": model.train_source,
    }
    return json.dumps(doc)


def model_from_json(text: str) -> KscModel:
    doc = json.loads(text)
    kernel = None
    if doc["kernel"] is not None:
        kernel = KernelSpec(kind=doc["kernel"]["kind"], sigma2=doc["kernel"]["sigma2"])
    return KscModel(
        alphas=np.array(doc["alphas"], dtype=float),
        biases=np.array(doc["biases"], dtype=float),
        eigenvalues=np.array(doc["eigenvalues"], dtype=float),
        codebook=np.array(doc["codebook"], dtype=np.int64),
        k=int(doc["k"]),
        kernel=kernel,
        train_source=doc.get("train_source", ""),
    )
