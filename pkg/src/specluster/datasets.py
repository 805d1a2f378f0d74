"""Bundled benchmark graphs (public domain) with their reference partitions."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .data import Graph, Partition, load_edge_list, read_labels


def _load(name: str) -> tuple[Graph, Partition]:
    pkg = resources.files(__package__) / "datasets"
    g = load_edge_list((pkg / f"{name}.edges").read_text())
    by_original = read_labels((pkg / f"{name}.labels").read_text())
    # label files are ordered by original id; graph indices follow appearance order
    labels = np.array([by_original[orig] for orig in g.node_ids], dtype=np.int64)
    return g, Partition(labels=labels, k=int(by_original.max()) + 1)


def load_karate() -> tuple[Graph, Partition]:
    """Zachary karate club: 34 nodes, 78 edges, two-faction ground truth."""
    return _load("karate")


def load_dolphins() -> tuple[Graph, Partition]:
    """Lusseau dolphin social network: 62 nodes, 159 edges, two-group division."""
    return _load("dolphins")
