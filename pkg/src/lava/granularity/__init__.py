from .graph import ConnectivityGraph, DistanceMatrix, build_knn_graph, complete_graph, pairwise_distances
from .quality import cluster_quality
from .ward import (
    ClusterAssignment,
    Merge,
    WardTree,
    constrained_ward_hac,
    cut_tree,
    export_dendrogram,
    parse_dendrogram_json,
    ward_tree,
)
