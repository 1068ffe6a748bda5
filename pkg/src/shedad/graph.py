"""Adaptive k-NN graphs, agreement-based graph merging and weighted SNN similarity."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .dtw import DistanceMatrix
from .exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

SIMILARITY_EPS = 1e-9


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected weighted graph over ``ids``.

    ``edges`` maps index pairs ``(i, j)`` with ``i < j`` to their weight.
    ``fallback`` holds edges kept only to avoid isolating a node, and
    ``kappa`` the agreement score of edges that survived a merge.
    """

    ids: tuple
    edges: dict
    fallback: frozenset = frozenset()
    kappa: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        n = len(self.ids)
        for (i, j), w in self.edges.items():
            if not (0 <= i < j < n):
                raise DataError(f"edge {(i, j)} must satisfy 0 <= i < j < {n}")
            if not np.isfinite(w) or w < 0:
                raise DataError(f"edge {(i, j)} has invalid weight {w}")

    def __len__(self):
        return len(self.ids)

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in self.ids]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return [sorted(a) for a in adj]

    def degree(self) -> np.ndarray:
        deg = np.zeros(len(self.ids), dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def weight_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (adjacency, weights) pair; weights are 0 where there is no edge."""
        n = len(self.ids)
        adj = np.zeros((n, n), dtype=bool)
        w = np.zeros((n, n))
        for (i, j), v in self.edges.items():
            adj[i, j] = adj[j, i] = True
            w[i, j] = w[j, i] = v
        return adj, w

    def to_frame(self) -> pd.DataFrame:
        rows = [(self.ids[i], self.ids[j], w, self.kappa.get((i, j), np.nan), (i, j) in self.fallback)
                for (i, j), w in sorted(self.edges.items())]
        return pd.DataFrame(rows, columns=["id_a", "id_b", "weight", "retained_kappa", "fallback"])

    def to_csv(self, path=None):
        """Edge list ``id_a, id_b, weight, retained_kappa, fallback``."""
        return self.to_frame().to_csv(path, index=False, lineterminator="\n")


@dataclass(frozen=True)
class AdaptiveKnnParams:
    k_b: int = 10
    theta_min: float = 0.1
    theta_max: float = 0.9
    thresholds_as_quantiles: bool = True

    def __post_init__(self):
        if self.k_b < 1:
            raise ConfigError("k_b must be >= 1")
        if not self.theta_min < self.theta_max:
            raise ConfigError("theta_min must be below theta_max")
        if self.thresholds_as_quantiles and not (0 <= self.theta_min and self.theta_max <= 1):
            raise ConfigError("quantile thresholds must lie in [0, 1]")

    def thresholds(self, matrix: DistanceMatrix) -> tuple[float, float]:
        if not self.thresholds_as_quantiles:
            return float(self.theta_min), float(self.theta_max)
        off = matrix.values[np.triu_indices(len(matrix), k=1)]
        lo, hi = np.quantile(off, [self.theta_min, self.theta_max])
        return float(lo), float(hi)


def delta_k(low: int, high: int, k_b: int) -> float:
    """Neighbor-budget adjustment for one node.

    Many close neighbors widen the budget, many distant ones shrink it; the
    close branch wins when both counts reach ``k_b``.
    """
    # (low / k_b - 1) * k_b / 2 reduces to (low - k_b) / 2, which is exact in floats
    if low >= k_b:
        return (low - k_b) / 2
    if high >= k_b:
        return -(high - k_b) / 2
    return 0.0


def neighbor_budget(low: int, high: int, k_b: int, n: int) -> int:
    k = int(round(k_b + delta_k(low, high, k_b)))  # round() is half-to-even
    return min(max(k, 1), n - 1)


def adaptive_knn(matrix: DistanceMatrix, params: AdaptiveKnnParams = AdaptiveKnnParams()) -> NeighborGraph:
    """Build a k-NN graph whose per-node k follows its edge-weight profile.

    Candidate neighbors farther than ``theta_max`` are dropped first, then the
    ``k_i`` nearest survivors (ties broken by id) are linked. A node with no
    survivor keeps its single nearest neighbor; such edges are recorded in
    ``NeighborGraph.fallback``.
    """
    n = len(matrix)
    if params.k_b >= n:
        raise ConfigError(f"k_b={params.k_b} needs at least {params.k_b + 1} substations, got {n}")
    theta_min, theta_max = params.thresholds(matrix)
    d = matrix.values
    id_rank = np.argsort(np.argsort(np.array(matrix.ids, dtype=object)))

    edges: dict = {}
    regular = set()
    fallback = set()
    for i in range(n):
        others = np.delete(np.arange(n), i)
        di = d[i, others]
        low = int(np.sum(di < theta_min))
        high = int(np.sum(di > theta_max))
        k_i = neighbor_budget(low, high, params.k_b, n)
        order = others[np.lexsort((id_rank[others], di))]
        within = order[d[i, order] <= theta_max]
        chosen = within[:k_i]
        if len(chosen) == 0:
            j = int(order[0])
            key = (min(i, j), max(i, j))
            edges[key] = float(d[i, j])
            fallback.add(key)
            continue
        for j in chosen:
            key = (min(i, int(j)), max(i, int(j)))
            edges[key] = float(d[i, j])
            regular.add(key)
    return NeighborGraph(matrix.ids, edges, frozenset(fallback - regular))


def merge_graphs(graphs: Sequence[NeighborGraph], kappa_min: float = 0.6) -> NeighborGraph:
    """Keep the edges the per-day graphs agree on beyond chance.

    For an edge present in ``m_e`` of ``d`` graphs, ``p_e = m_e / d`` is
    compared with the mean inclusion rate over all candidate edges,
    ``kappa_e = (p_e - p_bar) / (1 - p_bar)``; edges with
    ``kappa_e >= kappa_min`` are retained with their mean weight.
    """
    if len(graphs) < 2:
        raise DataError("merge_graphs needs at least two graphs")
    ids = graphs[0].ids
    if any(g.ids != ids for g in graphs):
        raise DataError("all graphs must share the same id order")
    d = len(graphs)
    counts: dict = {}
    sums: dict = {}
    for g in graphs:
        for e, w in g.edges.items():
            counts[e] = counts.get(e, 0) + 1
            sums[e] = sums.get(e, 0.0) + w
    if not counts:
        return NeighborGraph(ids, {})
    total, n_edges = sum(counts.values()), len(counts)
    if total == d * n_edges:
        logger.warning("all %d graphs are identical; agreement is undefined, keeping every edge", d)
        return NeighborGraph(ids, {e: sums[e] / d for e in counts}, kappa={e: 1.0 for e in counts})

    edges, kappa = {}, {}
    for e in sorted(counts):
        # edge_agreement with p_bar = total / (d * n_edges), kept in integers until the final division
        k_e = (counts[e] * n_edges - total) / (d * n_edges - total)
        if k_e >= kappa_min:
            edges[e] = sums[e] / counts[e]
            kappa[e] = k_e
    fb = frozenset(e for e in edges if all(e in g.fallback for g in graphs if e in g.edges))
    return NeighborGraph(ids, edges, fallback=fb, kappa=kappa)


def edge_agreement(m_e: int, d: int, p_bar: float) -> float:
    """Chance-corrected inclusion agreement of one edge."""
    return (m_e / d - p_bar) / (1 - p_bar)


@dataclass(frozen=True)
class SimilarityMatrix:
    ids: tuple
    values: np.ndarray
    floored_pairs: tuple = ()

    def __len__(self):
        return len(self.ids)


def snn_similarity(g: NeighborGraph) -> SimilarityMatrix:
    """Weighted shared-nearest-neighbor similarity.

    ``S(i, j) = |N(i) & N(j)|**2 / sum_{k in N(i) & N(j)} (w_ik + w_jk)``,
    0 when no neighbor is shared. A zero denominator is floored at 1e-9 and
    the pair is logged.
    """
    n = len(g)
    adj, w = g.weight_matrix()
    nbrs = [np.flatnonzero(adj[i]) for i in range(n)]
    out = np.zeros((n, n))
    floored = []
    for i in range(n):
        if len(nbrs[i]) == 0:
            continue
        wi = w[i]
        for j in range(i + 1, n):
            shared = nbrs[i][adj[j, nbrs[i]]]
            if len(shared) == 0:
                continue
            denom = 0.0
            for k in shared:
                denom += wi[k] + w[j, k]
            if denom <= 0.0:
                denom = SIMILARITY_EPS
                floored.append((g.ids[i], g.ids[j]))
            out[i, j] = out[j, i] = len(shared) ** 2 / denom
    if floored:
        logger.warning("similarity denominator floored at %g for %d pairs", SIMILARITY_EPS, len(floored))
    return SimilarityMatrix(g.ids, out, tuple(floored))
