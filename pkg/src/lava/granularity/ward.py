"""Adjacency-constrained Ward agglomerative clustering and dendrogram I/O.

Dissimilarities start as squared Euclidean distances between singletons
and are updated with the Lance-Williams recurrence

    D(k, i+j) = ((n_i + n_k) D(k, i) + (n_j + n_k) D(k, j) - n_k D(i, j)) / (n_i + n_j + n_k)

so D between two clusters equals twice the increase in (un-normalized)
error sum of squares caused by merging them.  Only clusters joined by an
edge of the contracted constraint graph may merge.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ..errors import DataError, DegenerateInput, ROutOfRange
from .graph import ConnectivityGraph, complete_graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    cost: float
    size: int


@dataclass(frozen=True)
class WardTree:
    """Merge history; leaves are 0..N-1 and merge m creates node N+m.

    ``forced`` lists the merge indices that joined clusters not connected
    in the constraint graph (only happens when the graph is disconnected).
    """

    n_leaves: int
    merges: tuple[Merge, ...]
    forced: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(self.merges))
        object.__setattr__(self, "forced", tuple(self.forced))
        n = self.n_leaves
        if len(self.merges) != n - 1:
            raise DataError(f"a tree over {n} leaves needs {n - 1} merges, got {len(self.merges)}")
        sizes = [1] * n
        seen = set()
        for m, mg in enumerate(self.merges):
            for c in (mg.left, mg.right):
                if not 0 <= c < n + m or c in seen:
                    raise DataError(f"merge {m} uses invalid or reused node {c}")
                seen.add(c)
            if mg.size != sizes[mg.left] + sizes[mg.right]:
                raise DataError(f"merge {m} size {mg.size} != child sizes")
            sizes.append(mg.size)

    @property
    def costs(self) -> np.ndarray:
        return np.array([m.cost for m in self.merges])

    def to_linkage(self) -> np.ndarray:
        """scipy-style linkage; the height column is sqrt(cost)."""
        return np.array([[m.left, m.right, np.sqrt(max(m.cost, 0.0)), m.size] for m in self.merges]).reshape(-1, 4)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def to_csv(self, sample_ids: Sequence[str] | None = None) -> str:
        ids = sample_ids if sample_ids is not None else [f"s{i}" for i in range(len(self.labels))]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "cluster"])
        for sid, lab in zip(ids, self.labels):
            w.writerow([sid, int(lab)])
        return buf.getvalue()


def canonical_labels(raw) -> np.ndarray:
    """Relabel so clusters are numbered by increasing smallest member index."""
    raw = np.asarray(raw)
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = {raw[first[o]]: new for new, o in enumerate(order)}
    return np.array([remap[v] for v in raw], dtype=np.int64)


def cut_tree(tree: WardTree, R: int) -> ClusterAssignment:
    """Apply the first N-R merges and label the resulting clusters."""
    n = tree.n_leaves
    if not 1 <= R <= n:
        raise ROutOfRange(f"R must be in [1, {n}], got {R}")
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m, mg in enumerate(tree.merges[: n - R]):
        parent[find(mg.left)] = n + m
        parent[find(mg.right)] = n + m
    raw = np.array([find(i) for i in range(n)])
    return ClusterAssignment(canonical_labels(raw), R)


def _pick(masked: np.ndarray, rmin: np.ndarray, ids: np.ndarray):
    """Minimal entry of ``masked`` using cached row minima; ties by node ids."""
    best = rmin.min()
    if not np.isfinite(best):
        return None
    rows = np.flatnonzero(rmin == best)
    ii, jj = np.nonzero(masked[rows] == best)
    ii = rows[ii]
    lo = np.minimum(ids[ii], ids[jj])
    hi = np.maximum(ids[ii], ids[jj])
    t = np.lexsort((hi, lo))[0]
    return int(ii[t]), int(jj[t]), float(best)


def ward_tree(X, graph: ConnectivityGraph | None = None) -> WardTree:
    """Full constrained Ward merge history over the rows of ``X``.

    Among connected pairs the one with minimal D merges, ties broken by
    (smaller node id, larger node id).  When no connected pair is left but
    several clusters remain, the cheapest pair overall is merged and
    recorded in ``WardTree.forced``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DegenerateInput(f"expected an N x M matrix, got shape {X.shape}")
    n = X.shape[0]
    if graph is None:
        graph = complete_graph(n)
    if graph.n != n:
        raise DegenerateInput(f"graph has {graph.n} nodes for {n} samples")
    if n == 1:
        return WardTree(1, ())

    D = squareform(pdist(X, "sqeuclidean"))
    A = graph.adjacency.toarray().astype(bool)
    np.fill_diagonal(A, False)
    inf = np.inf
    np.fill_diagonal(D, inf)
    # Dc holds D on mergeable pairs and inf elsewhere
    Dc = np.where(A, D, inf)
    rmin = Dc.min(axis=1)
    rmin_all = D.min(axis=1)
    ids = np.arange(n)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges, forced = [], []

    for m in range(n - 1):
        pick = _pick(Dc, rmin, ids)
        if pick is None:
            pick = _pick(D, rmin_all, ids)
            forced.append(m)
            log.debug("merge %d joins unconnected clusters %d and %d", m, ids[pick[0]], ids[pick[1]])
        a, b, cost = pick
        if a > b:
            a, b = b, a
        na, nb = size[a], size[b]
        merges.append(Merge(int(min(ids[a], ids[b])), int(max(ids[a], ids[b])), cost, int(na + nb)))

        others = active.copy()
        others[[a, b]] = False
        nk = size[others]
        new = ((na + nk) * D[a, others] + (nb + nk) * D[b, others] - nk * D[a, b]) / (na + nb + nk)
        # rows whose cached minimum sat in column a or b must be rescanned
        stale = others & ((Dc[:, a] == rmin) | (Dc[:, b] == rmin))
        stale_all = others & ((D[:, a] == rmin_all) | (D[:, b] == rmin_all))
        D[a, others] = D[others, a] = new
        D[b, :] = D[:, b] = inf
        A[a] |= A[b]
        A[:, a] |= A[:, b]
        A[a, a] = False
        A[b, :] = A[:, b] = False
        Dc[a, :] = np.where(A[a], D[a], inf)
        Dc[:, a] = Dc[a, :]
        Dc[b, :] = Dc[:, b] = inf
        rmin[b] = rmin_all[b] = inf
        rmin[a] = Dc[a].min()
        rmin_all[a] = D[a].min()
        np.minimum(rmin, Dc[:, a], out=rmin, where=others)
        np.minimum(rmin_all, D[:, a], out=rmin_all, where=others)
        if stale.any():
            rmin[stale] = Dc[stale].min(axis=1)
        if stale_all.any():
            rmin_all[stale_all] = D[stale_all].min(axis=1)
        active[b] = False
        size[a] = na + nb
        ids[a] = n + m
    if forced:
        log.warning("constraint graph disconnected: %d merges joined unconnected clusters", len(forced))
    return WardTree(n, tuple(merges), tuple(forced))


def constrained_ward_hac(X, graph: ConnectivityGraph | None, R: int) -> tuple[WardTree, ClusterAssignment]:
    n = np.asarray(X).shape[0]
    if not 1 <= R <= n:
        raise ROutOfRange(f"R must be in [1, {n}], got {R}")
    tree = ward_tree(X, graph)
    return tree, cut_tree(tree, R)


# -- export ---------------------------------------------------------------

def tree_to_dict(tree: WardTree, sample_ids: Sequence[str] | None = None) -> dict:
    out = {
        "n_leaves": tree.n_leaves,
        "merges": [{"left": m.left, "right": m.right, "cost": m.cost, "size": m.size} for m in tree.merges],
        "forced_merges": list(tree.forced),
    }
    if sample_ids is not None:
        out["sample_ids"] = list(sample_ids)
    return out


def tree_from_dict(d: dict) -> WardTree:
    merges = tuple(Merge(int(m["left"]), int(m["right"]), float(m["cost"]), int(m["size"])) for m in d["merges"])
    return WardTree(int(d["n_leaves"]), merges, tuple(d.get("forced_merges", ())))


def _newick_name(name: str) -> str:
    if any(c in name for c in " ():;,[]'\t\n"):
        return "'" + name.replace("'", "''") + "'"
    return name


def _to_newick(tree: WardTree, sample_ids: Sequence[str] | None) -> str:
    n = tree.n_leaves
    names = list(sample_ids) if sample_ids is not None else [f"s{i}" for i in range(n)]
    if len(names) != n:
        raise DataError(f"{len(names)} sample ids for {n} leaves")
    if n == 1:
        return _newick_name(names[0]) + ";"
    height = [0.0] * n + [m.cost for m in tree.merges]
    parts: list[str] = []
    # iterative post-order: (node, branch length, expanded?)
    stack = [(2 * n - 2, None, False)]
    while stack:
        node, length, done = stack.pop()
        suffix = "" if length is None else f":{length!r}"
        if node < n:
            parts.append(_newick_name(names[node]) + suffix)
        elif not done:
            mg = tree.merges[node - n]
            stack.append((node, length, True))
            stack.append((mg.right, height[node] - height[mg.right], False))
            stack.append((mg.left, height[node] - height[mg.left], False))
        else:
            right, left = parts.pop(), parts.pop()
            parts.append(f"({left},{right}){suffix}")
    return parts[0] + ";"


def export_dendrogram(tree: WardTree, format: str = "json", sample_ids: Sequence[str] | None = None) -> str:
    """Serialize as a JSON merge list or a Newick string (branch = cost difference)."""
    if format == "json":
        return json.dumps(tree_to_dict(tree, sample_ids), indent=2, sort_keys=True)
    if format == "newick":
        return _to_newick(tree, sample_ids)
    raise ValueError(f"unknown dendrogram format {format!r}")


def parse_dendrogram_json(text: str) -> WardTree:
    return tree_from_dict(json.loads(text))
