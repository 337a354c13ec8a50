"""Euclidean distances and the k-nearest-neighbour connectivity constraint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist, pdist, squareform

from ..errors import ConfigError, DegenerateInput, KOutOfRange

MODES = ("feature_space", "same_label_only")


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray
    metric: str = "euclidean"

    @property
    def n(self) -> int:
        return self.d.shape[0]


def _as_samples(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DegenerateInput(f"expected an N x M matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DegenerateInput("matrix contains non-finite values")
    return X


def pairwise_distances(X) -> DistanceMatrix:
    """Exact Euclidean distances, one evaluation per unordered pair."""
    X = _as_samples(X)
    if X.shape[0] < 2:
        raise DegenerateInput("need at least 2 samples")
    d = squareform(pdist(X, "euclidean"))
    d.setflags(write=False)
    return DistanceMatrix(d)


@dataclass(frozen=True)
class ConnectivityGraph:
    """k-NN constraint; ``directed`` has k entries per row, ``adjacency`` is its union-symmetrization."""

    n: int
    k: int
    directed: sparse.csr_matrix
    adjacency: sparse.csr_matrix
    mode: str = "feature_space"
    symmetrized: bool = True

    @property
    def directed_sparsity(self) -> float:
        return 1.0 - self.directed.nnz / float(self.n * self.n)

    def neighbours(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def n_components(self) -> int:
        return int(connected_components(self.adjacency, directed=False)[0])


def complete_graph(n: int) -> ConnectivityGraph:
    full = sparse.csr_matrix(np.ones((n, n), dtype=bool))
    return ConnectivityGraph(n, n, full, full.copy())


def _row_neighbours(drow: np.ndarray, i: int, k: int) -> np.ndarray:
    """Self plus the k-1 closest other samples, ties by smaller index."""
    if k == 1:
        return np.array([i])
    others = np.delete(np.arange(len(drow)), i)
    dv = np.delete(drow, i)
    m = k - 1
    if m < len(dv):
        kth = np.partition(dv, m - 1)[m - 1]
        cand = np.flatnonzero(dv <= kth)
    else:
        cand = np.arange(len(dv))
    order = np.lexsort((others[cand], dv[cand]))[:m]
    return np.concatenate(([i], others[cand[order]]))


def build_knn_graph(X, k: int = 5, mode: str = "feature_space", labels=None, block: int = 512) -> ConnectivityGraph:
    """k-NN graph with self-links, symmetrized by union.

    With ``mode='same_label_only'`` directed edges between samples of
    different labels are dropped before symmetrization, so those rows keep
    fewer than k entries.
    """
    X = _as_samples(X)
    n = X.shape[0]
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if not 1 <= k <= n:
        raise KOutOfRange(f"k must be in [1, {n}], got {k}")
    if mode == "same_label_only":
        if labels is None:
            raise ConfigError("same_label_only needs labels")
        labels = np.asarray(labels).ravel()
        if len(labels) != n:
            raise DegenerateInput(f"{len(labels)} labels for {n} samples")

    rows, cols = [], []
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = cdist(X[start:stop], X, "euclidean")
        for r in range(stop - start):
            i = start + r
            nb = _row_neighbours(d[r], i, k)
            rows.append(np.full(len(nb), i))
            cols.append(nb)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    directed = sparse.csr_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n))
    kept = directed
    if mode == "same_label_only":
        same = labels[rows] == labels[cols]
        kept = sparse.csr_matrix((np.ones(same.sum(), dtype=bool), (rows[same], cols[same])), shape=(n, n))
    adjacency = (kept + kept.T).astype(bool).tocsr()
    adjacency.sort_indices()
    return ConnectivityGraph(n, k, directed, adjacency, mode, True)

