"""Ward agglomerative clustering over SNN dissimilarities and the flat cut."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import shortest_path

from .dtw import DistanceMatrix
from .exceptions import ConfigError
from .graph import SimilarityMatrix

# relative slack under which two merge costs count as tied
TIE_RTOL = 1e-12


def similarity_to_dissimilarity(s: SimilarityMatrix) -> DistanceMatrix:
    """``d = 1 / (1 + S)`` off the diagonal; unrelated pairs get the maximum 1."""
    v = np.asarray(s.values, dtype=float)
    if np.any(v < 0):
        raise ConfigError("similarities must be nonnegative")
    d = 1.0 / (1.0 + v)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(s.ids, d)


def similarity_to_geodesic(s: SimilarityMatrix, cap_factor: float | None = None) -> DistanceMatrix:
    """Shortest-path dissimilarity over the SNN graph with edge length ``1 / S``.

    Pairs with no connecting path get ``cap_factor`` times the largest finite
    path length (``n`` by default), which keeps nodes without shared
    neighbors apart until the last Ward merges.
    """
    v = np.asarray(s.values, dtype=float)
    if np.any(v < 0):
        raise ConfigError("similarities must be nonnegative")
    n = len(s.ids)
    if n == 0:
        return DistanceMatrix((), np.zeros((0, 0)))
    length = np.zeros_like(v)
    pos = v > 0
    length[pos] = 1.0 / v[pos]
    geo = shortest_path(length, method="D", directed=False)
    geo = np.minimum(geo, geo.T)
    finite = np.isfinite(geo)
    top = geo[finite].max() if finite.any() else 0.0
    cap = (cap_factor if cap_factor is not None else max(n, 2)) * (top if top > 0 else 1.0)
    geo[~finite] = cap
    np.fill_diagonal(geo, 0.0)
    return DistanceMatrix(s.ids, geo)


DISSIMILARITIES = {"geodesic": similarity_to_geodesic, "inverse": similarity_to_dissimilarity}


@dataclass(frozen=True)
class Merge:
    left: tuple
    right: tuple
    height: float


@dataclass(frozen=True)
class Dendrogram:
    ids: tuple
    merges: tuple

    def to_dict(self) -> dict:
        return {"leaves": list(self.ids),
                "merges": [{"left": list(m.left), "right": list(m.right), "height": m.height} for m in self.merges]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def ward_agglomerative(d: DistanceMatrix) -> Dendrogram:
    """Agglomerative clustering with Ward's minimum-variance criterion.

    Works on squared dissimilarities with the Lance-Williams update

        D(k, i+j) = ((n_k+n_i) D(k,i) + (n_k+n_j) D(k,j) - n_k D(i,j)) / (n_k+n_i+n_j)

    and reports ``sqrt(D)`` as merge height, so two leaves at distance ``x``
    merge at height ``x``. Ties go to the pair whose cluster representatives
    (smallest member id) sort first.
    """
    ids = d.ids
    n = len(ids)
    if n < 2:
        return Dendrogram(ids, ())
    D = np.array(d.values, dtype=float) ** 2
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    members = {i: [ids[i]] for i in range(n)}
    rep = list(ids)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        idx = np.flatnonzero(active)
        sub = D[np.ix_(idx, idx)]
        iu = np.triu_indices(len(idx), k=1)
        costs = sub[iu]
        best = costs.min()
        tied = np.flatnonzero(costs <= best + TIE_RTOL * max(abs(best), 1.0))
        pairs = [(idx[iu[0][t]], idx[iu[1][t]]) for t in tied]
        a, b = min(pairs, key=lambda p: tuple(sorted((rep[p[0]], rep[p[1]]))))
        if rep[b] < rep[a]:
            a, b = b, a
        height = float(np.sqrt(max(D[a, b], 0.0)))
        merges.append(Merge(tuple(sorted(members[a])), tuple(sorted(members[b])), height))

        na, nb_, nk = size[a], size[b], size
        others = active.copy()
        others[[a, b]] = False
        k = np.flatnonzero(others)
        new = ((nk[k] + na) * D[a, k] + (nk[k] + nb_) * D[b, k] - nk[k] * D[a, b]) / (nk[k] + na + nb_)
        D[a, k] = D[k, a] = new
        D[b, :] = D[:, b] = np.inf
        active[b] = False
        size[a] = na + nb_
        members[a] = members[a] + members.pop(b)
        rep[a] = min(rep[a], rep[b])
    return Dendrogram(ids, tuple(merges))


@dataclass(frozen=True)
class ClusterAssignment:
    """Flat clustering; cluster ids are ordered by each cluster's smallest member id."""

    labels: Mapping
    n_clusters: int
    singleton_flags: Mapping

    def members(self, cluster: int) -> list:
        return sorted(s for s, c in self.labels.items() if c == cluster)

    def clusters(self) -> dict:
        out = {c: [] for c in range(self.n_clusters)}
        for s in sorted(self.labels):
            out[self.labels[s]].append(s)
        return out

    def flagged_ids(self) -> list:
        return sorted(s for s, c in self.labels.items() if self.singleton_flags[c])

    def to_frame(self) -> pd.DataFrame:
        rows = [(s, self.labels[s], bool(self.singleton_flags[self.labels[s]])) for s in sorted(self.labels)]
        return pd.DataFrame(rows, columns=["substation_id", "cluster_id", "singleton_flag"])

    def to_csv(self, path=None):
        return self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_labels(cls, labels: Mapping, singleton_threshold: int = 1) -> "ClusterAssignment":
        """Normalize arbitrary labels (e.g. from an external clusterer)."""
        groups: dict = {}
        for s, c in labels.items():
            groups.setdefault(c, []).append(s)
        ordered = sorted(groups.values(), key=min)
        new = {s: k for k, grp in enumerate(ordered) for s in grp}
        flags = {k: len(grp) <= singleton_threshold for k, grp in enumerate(ordered)}
        return cls(new, len(ordered), flags)

    @classmethod
    def from_csv(cls, path, singleton_threshold: int = 1) -> "ClusterAssignment":
        frame = pd.read_csv(path, dtype={"substation_id": str})
        return cls.from_labels(dict(zip(frame["substation_id"], frame["cluster_id"])), singleton_threshold)


def cut(dendrogram: Dendrogram, n_clusters: int, singleton_threshold: int = 1) -> ClusterAssignment:
    """Flat partition with exactly ``n_clusters`` clusters.

    Clusters of at most ``singleton_threshold`` members are flagged.
    """
    n = len(dendrogram.ids)
    if not 1 <= n_clusters <= max(n, 1):
        raise ConfigError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    if singleton_threshold < 0:
        raise ConfigError("singleton_threshold must be >= 0")
    parent = {s: s for s in dendrogram.ids}

    def find(s):
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for m in dendrogram.merges[: n - n_clusters]:
        ra, rb = find(m.left[0]), find(m.right[0])
        parent[rb] = ra
    return ClusterAssignment.from_labels({s: find(s) for s in dendrogram.ids}, singleton_threshold)
