"""Cluster-quality scores, thin wrappers over scikit-learn."""

from __future__ import annotations

import numpy as np
from sklearn import metrics

from ..errors import DegenerateInput, MissingReference, SingleCluster
from .ward import ClusterAssignment

REFERENCE_METRICS = ("ami", "rand", "homogeneity", "completeness", "v_measure")


def cluster_quality(X, labels, reference=None, need_reference: bool = False) -> dict:
    """CH index on ``X`` plus agreement scores against ``reference`` if given."""
    lab = labels.labels if isinstance(labels, ClusterAssignment) else np.asarray(labels).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != len(lab):
        raise DegenerateInput(f"{len(lab)} labels for {X.shape[0]} samples")
    n_clusters = len(np.unique(lab))
    if n_clusters < 2:
        raise SingleCluster("Calinski-Harabasz needs at least 2 clusters")
    out = {"n_clusters": n_clusters, "calinski_harabasz": float(metrics.calinski_harabasz_score(X, lab))}
    if reference is None:
        if need_reference:
            raise MissingReference("reference labels are required for agreement metrics")
        return out
    ref = np.asarray(reference).ravel()
    if len(ref) != len(lab):
        raise DegenerateInput(f"{len(ref)} reference labels for {len(lab)} samples")
    h, c, v = metrics.homogeneity_completeness_v_measure(ref, lab)
    out.update(
        ami=float(metrics.adjusted_mutual_info_score(ref, lab)),
        rand=float(metrics.rand_score(ref, lab)),
        homogeneity=float(h),
        completeness=float(c),
        v_measure=float(v),
    )
    return out
