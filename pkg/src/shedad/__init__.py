"""Topology approximation and anomaly detection for district heating substations."""

__version__ = "0.1.0"

from .anomaly import AnomalyScorecard, cluster_mst, detect, modified_z_scores, score_cluster
from .config import RunConfig
from .dtw import DistanceMatrix, daily_distance_matrices, dtw_distance, euclidean_matrix, pairwise_dtw
from .estimator import SHEDAD
from .exceptions import ConfigError, DataError, ParseError, SchemaError, ShedadError
from .graph import AdaptiveKnnParams, NeighborGraph, adaptive_knn, merge_graphs, snn_similarity
from .hierarchy import ClusterAssignment, Dendrogram, cut, ward_agglomerative
from .ingest import SubstationSeries, load_csv, sample_days, segment_days, validate_and_align
from .metrics import ConfusionCounts, intra_cluster_variance, mean_mst_distance, quality_report, sensitivity_specificity
from .simulator import FaultSpec, GroundTruth, NetworkSpec, Window, generate_network, simulate

__all__ = [
    "AdaptiveKnnParams", "AnomalyScorecard", "ClusterAssignment", "ConfigError", "ConfusionCounts", "DataError",
    "Dendrogram", "DistanceMatrix", "FaultSpec", "GroundTruth", "NeighborGraph", "NetworkSpec", "ParseError",
    "RunConfig", "SHEDAD", "SchemaError", "ShedadError", "SubstationSeries", "Window", "adaptive_knn",
    "cluster_mst", "cut", "daily_distance_matrices", "detect", "dtw_distance", "euclidean_matrix",
    "generate_network", "intra_cluster_variance", "load_csv", "mean_mst_distance", "merge_graphs",
    "modified_z_scores", "pairwise_dtw", "quality_report", "sample_days", "score_cluster", "segment_days",
    "sensitivity_specificity", "simulate", "snn_similarity", "validate_and_align", "ward_agglomerative",
]
