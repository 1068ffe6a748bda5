"""Performance-anomaly scoring on per-cluster minimum spanning trees."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .dtw import DistanceMatrix
from .exceptions import DataError
from .graph import NeighborGraph
from .hierarchy import ClusterAssignment

MAD_SCALE = 0.6745
MEANAD_SCALE = 1.253314
Z_THRESHOLD = -2.0


def cluster_mst(ids: Sequence[str], euclid: DistanceMatrix) -> NeighborGraph:
    """Kruskal MST over ``ids``; ties resolve on ``(weight, id_a, id_b)``.

    The returned graph is indexed by ``ids`` sorted.
    """
    ids = tuple(sorted(ids))
    n = len(ids)
    if n < 2:
        raise DataError("cluster_mst needs at least two substations")
    d = euclid.submatrix(ids).values
    candidates = sorted((d[i, j], ids[i], ids[j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = {}
    for w, _, _, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri
            edges[(i, j)] = float(w)
            if len(edges) == n - 1:
                break
    return NeighborGraph(ids, edges)


def delta_t_statistic(series) -> float:
    """Mean of supply minus return over the window."""
    return float(np.mean(np.asarray(series.supply) - np.asarray(series.return_temp)))


def modified_z_scores(values) -> np.ndarray:
    """Robust z-scores ``0.6745 (x - median) / MAD``.

    When MAD is 0 the mean absolute deviation about the median is used
    instead, ``(x - median) / (1.253314 * MeanAD)``; when that is 0 as well
    every score is 0.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise DataError("modified_z_scores needs at least two values")
    med = np.median(x)
    dev = np.abs(x - med)
    mad = np.median(dev)
    if mad > 0:
        return MAD_SCALE * (x - med) / mad
    mean_ad = dev.mean()
    if mean_ad > 0:
        return (x - med) / (MEANAD_SCALE * mean_ad)
    return np.zeros_like(x)


@dataclass(frozen=True)
class ComparisonGroup:
    center: str
    members: tuple
    values: tuple


def tree_neighbors(tree: NeighborGraph, center: int, k: int, _adj=None) -> list[int]:
    """The ``k`` tree nodes closest to ``center`` by (hops, path weight, id)."""
    adj = _adj if _adj is not None else _weighted_adjacency(tree)
    hops = {center: 0}
    dist = {center: 0.0}
    frontier = [center]
    while frontier:
        nxt = []
        for u in frontier:
            for v, w in adj[u]:
                if v not in hops:
                    hops[v] = hops[u] + 1
                    dist[v] = dist[u] + w
                    nxt.append(v)
        frontier = nxt
    others = [v for v in hops if v != center]
    others.sort(key=lambda v: (hops[v], dist[v], tree.ids[v]))
    return others[:k]


def _weighted_adjacency(tree: NeighborGraph) -> list[list[tuple[int, float]]]:
    adj = [[] for _ in tree.ids]
    for (i, j), w in tree.edges.items():
        adj[i].append((j, w))
        adj[j].append((i, w))
    return adj


def comparison_groups(tree: NeighborGraph, k: int, stats: Mapping[str, float]) -> list[ComparisonGroup]:
    if k < 1:
        raise DataError("k must be >= 1")
    adj = _weighted_adjacency(tree)
    groups = []
    for c in range(len(tree)):
        members = [c] + tree_neighbors(tree, c, k, adj)
        ids = tuple(tree.ids[m] for m in members)
        groups.append(ComparisonGroup(tree.ids[c], ids, tuple(float(stats[s]) for s in ids)))
    return groups


def score_cluster(tree: NeighborGraph, k: int, stats: Mapping[str, float],
                  z_threshold: float = Z_THRESHOLD) -> dict[str, tuple[int, int]]:
    """Vote counts ``id -> (comparisons, flags)`` for one cluster.

    Every node centers one group made of itself and its ``k`` nearest tree
    neighbors. Members whose modified z-score of mean delta-T falls below
    ``z_threshold`` in a group receive one flag from it.
    """
    if len(tree) < 2:
        return {}
    counts = {s: [0, 0] for s in tree.ids}
    for g in comparison_groups(tree, k, stats):
        z = modified_z_scores(g.values)
        for s, zs in zip(g.members, z):
            counts[s][0] += 1
            if zs < z_threshold:
                counts[s][1] += 1
    return {s: (c, f) for s, (c, f) in counts.items()}


@dataclass(frozen=True)
class ScoreEntry:
    cluster: int
    comparisons: int = 0
    flags: int = 0
    mean_delta_t: float = float("nan")
    supply_anomaly: bool = False

    @property
    def score(self) -> float:
        return self.flags / self.comparisons if self.comparisons else 0.0


@dataclass(frozen=True)
class AnomalyScorecard:
    entries: Mapping[str, ScoreEntry]
    flag_threshold: float = 0.0
    trees: Mapping[int, NeighborGraph] = field(default_factory=dict, repr=False)

    @property
    def supply_anomalies(self) -> list[str]:
        return sorted(s for s, e in self.entries.items() if e.supply_anomaly)

    @property
    def performance_anomalies(self) -> list[str]:
        return sorted(s for s, e in self.entries.items()
                      if not e.supply_anomaly and e.score > 0 and e.score >= self.flag_threshold)

    @property
    def predicted(self) -> list[str]:
        return sorted(set(self.supply_anomalies) | set(self.performance_anomalies))

    def scores(self) -> dict[str, float]:
        return {s: e.score for s, e in self.entries.items()}

    def to_report(self, config_echo: Mapping | None = None, seed: int | None = None) -> dict:
        return {
            "supply_anomalies": [{"id": s, "cluster": self.entries[s].cluster} for s in self.supply_anomalies],
            "performance": [
                {"id": s, "cluster": e.cluster, "score": e.score, "comparisons": e.comparisons,
                 "mean_delta_t": e.mean_delta_t}
                for s in self.performance_anomalies for e in [self.entries[s]]
            ],
            "config_echo": dict(config_echo or {}),
            "seed": seed,
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [(s, e.cluster, e.supply_anomaly, e.comparisons, e.flags, e.score, e.mean_delta_t)
                for s, e in sorted(self.entries.items())]
        return pd.DataFrame(rows, columns=["substation_id", "cluster", "supply_anomaly", "comparisons",
                                           "flags", "score", "mean_delta_t"])


def detect(assignment: ClusterAssignment, delta_t: Mapping[str, float], euclid: DistanceMatrix, k: int,
           flag_threshold: float = 0.0, z_threshold: float = Z_THRESHOLD) -> AnomalyScorecard:
    """Flag singleton clusters and score every other cluster on delta-T.

    ``delta_t`` maps substation id to its mean delta-T (see
    :func:`delta_t_statistic`).
    """
    entries = {}
    trees = {}
    for c, members in assignment.clusters().items():
        if assignment.singleton_flags[c]:
            for s in members:
                entries[s] = ScoreEntry(c, mean_delta_t=float(delta_t[s]), supply_anomaly=True)
            continue
        if len(members) < 2:
            entries[members[0]] = ScoreEntry(c, mean_delta_t=float(delta_t[members[0]]))
            continue
        tree = cluster_mst(members, euclid)
        trees[c] = tree
        for s, (comp, flags) in score_cluster(tree, k, delta_t, z_threshold).items():
            entries[s] = ScoreEntry(c, comp, flags, float(delta_t[s]))
    return AnomalyScorecard(entries, flag_threshold, trees)


def report_to_json(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
