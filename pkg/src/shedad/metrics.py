"""Cluster-quality and detection-quality metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .anomaly import cluster_mst
from .dtw import DistanceMatrix
from .exceptions import DataError
from .hierarchy import ClusterAssignment


def mean_mst_distance(ids, dist: DistanceMatrix) -> float:
    """Mean edge weight of the cluster's MST (``n - 1`` edges); 0 for a singleton."""
    ids = list(ids)
    if not ids:
        raise DataError("cluster is empty")
    if len(ids) == 1:
        return 0.0
    tree = cluster_mst(ids, dist)
    return float(np.mean(list(tree.edges.values())))


def intra_cluster_variance(ids, dist: DistanceMatrix) -> float:
    """Population variance of all within-cluster pairwise distances; 0 below three members."""
    ids = list(ids)
    if not ids:
        raise DataError("cluster is empty")
    if len(ids) < 3:
        return 0.0
    v = dist.submatrix(ids).values
    pairs = v[np.triu_indices(len(ids), k=1)]
    return float(np.mean((pairs - pairs.mean()) ** 2))


@dataclass(frozen=True)
class ConfusionCounts:
    true_positives: int
    false_negatives: int
    true_negatives: int
    false_positives: int

    @property
    def total(self) -> int:
        return self.true_positives + self.false_negatives + self.true_negatives + self.false_positives

    @property
    def sensitivity(self) -> float | None:
        pos = self.true_positives + self.false_negatives
        return self.true_positives / pos if pos else None

    @property
    def specificity(self) -> float | None:
        neg = self.true_negatives + self.false_positives
        return self.true_negatives / neg if neg else None

    def to_dict(self) -> dict:
        return {**asdict(self), "sensitivity": self.sensitivity, "specificity": self.specificity}


def sensitivity_specificity(predicted: Iterable[str], truth: Iterable[str],
                            population: Iterable[str]) -> ConfusionCounts:
    """Confusion counts of ``predicted`` against the ``truth`` anomaly set.

    Rates are ``None`` when their denominator is empty.
    """
    pop = set(population)
    pred, true = set(predicted), set(truth)
    outside = sorted(pred - pop)
    if outside:
        raise DataError(f"predicted ids outside population: {outside[:10]}")
    outside = sorted(true - pop)
    if outside:
        raise DataError(f"ground-truth ids outside population: {outside[:10]}")
    tp = len(pred & true)
    fp = len(pred - true)
    fn = len(true - pred)
    return ConfusionCounts(tp, fn, len(pop) - tp - fp - fn, fp)


def detection_confusion(supply_pred, performance_pred, supply_truth, performance_truth,
                        population) -> dict[str, ConfusionCounts]:
    """Separate confusion matrices per anomaly class plus the pooled one."""
    return {
        "supply": sensitivity_specificity(supply_pred, supply_truth, population),
        "performance": sensitivity_specificity(performance_pred, performance_truth, population),
        "pooled": sensitivity_specificity(set(supply_pred) | set(performance_pred),
                                          set(supply_truth) | set(performance_truth), population),
    }


@dataclass(frozen=True)
class ClusterQuality:
    per_cluster: Mapping[int, tuple[int, float, float]]  # cluster -> (size, MI, MV)
    distance: str = "euclidean"

    @property
    def mean_mi(self) -> float:
        return float(np.mean([mi for _, mi, _ in self.per_cluster.values()]))

    @property
    def mean_mv(self) -> float:
        return float(np.mean([mv for _, _, mv in self.per_cluster.values()]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(c, n, mi, mv) for c, (n, mi, mv) in sorted(self.per_cluster.items())],
                            columns=["cluster", "size", "mi", "mv"])


def cluster_quality(assignment: ClusterAssignment, dist: DistanceMatrix, distance: str = "euclidean") -> ClusterQuality:
    missing = set(dist.ids) - set(assignment.labels)
    if missing:
        raise DataError(f"labeling does not cover {len(missing)} substations, e.g. {sorted(missing)[:5]}")
    per = {}
    for c, members in assignment.clusters().items():
        per[c] = (len(members), mean_mst_distance(members, dist), intra_cluster_variance(members, dist))
    return ClusterQuality(per, distance)


def quality_report(assignment: ClusterAssignment, dist: DistanceMatrix, truth=None, predictions=None,
                   distance: str = "euclidean") -> dict:
    """Per-cluster and aggregate MI/MV, plus confusion matrices when both
    ``truth`` and ``predictions`` are given.

    ``truth`` and ``predictions`` are mappings with ``supply`` and
    ``performance`` id collections.
    """
    q = cluster_quality(assignment, dist, distance)
    out = {
        "distance": distance,
        "n_clusters": assignment.n_clusters,
        "mean_mi": q.mean_mi,
        "mean_mv": q.mean_mv,
        "clusters": [{"cluster": c, "size": n, "mi": mi, "mv": mv} for c, (n, mi, mv) in sorted(q.per_cluster.items())],
    }
    if truth is not None and predictions is not None:
        conf = detection_confusion(predictions["supply"], predictions["performance"],
                                   truth["supply"], truth["performance"], dist.ids)
        out["detection"] = {k: v.to_dict() for k, v in conf.items()}
    return out


def long_format(rows: Iterable[tuple[str, int, str, float]]) -> pd.DataFrame:
    """Plot-ready ``method, k, metric, value`` table."""
    return pd.DataFrame(list(rows), columns=["method", "k", "metric", "value"])


def metrics_to_json(metrics: Mapping) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"
