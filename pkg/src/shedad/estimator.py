"""scikit-learn style front end for the full topology + anomaly pipeline."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import anomaly, dtw, graph, hierarchy
from ._rng import sample_without_replacement
from .exceptions import ConfigError, DataError, ShedadError
from .ingest import SAMPLES_PER_DAY
from .validation import check_channel_matrix, check_float, check_ids, check_int, check_same_shape

logger = logging.getLogger(__name__)


@contextmanager
def _stage(name, timings):
    """Time a pipeline stage and tag library errors raised inside it."""
    t = time.perf_counter()
    try:
        yield
    except ShedadError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise
    timings[name] = time.perf_counter() - t
    logger.info("stage %s took %.2fs", name, timings[name])


class SHEDAD(ClusterMixin, BaseEstimator):
    """Approximate network topology from supply temperatures and flag anomalies.

    Parameters
    ----------
    n_days : int
        Number of random complete days used to build the per-day graphs.
    band_radius : int
        Sakoe-Chiba radius for DTW, in samples.
    k_base : int
        Base neighbor count of the adaptive k-NN graphs.
    theta_min, theta_max : float
        Low/high edge-weight thresholds; quantiles of each day's off-diagonal
        distances when ``thresholds_as_quantiles`` is true, else absolute
        degC-sum values.
    kappa_min : float
        Minimum edge agreement for the merged graph.
    dissimilarity : {"geodesic", "inverse"}
        How SNN similarities become Ward input: shortest paths with edge
        length ``1/S`` (default), or the pointwise ``1/(1+S)``.
    n_clusters : int
        Clusters cut from the Ward dendrogram.
    singleton_threshold : int
        Clusters of at most this size are reported as supply-temperature anomalies.
    n_neighbors : int or None
        Tree neighbors per comparison group; defaults to ``k_base``.
    z_threshold : float
        Modified z-score below which a member receives a flag.
    flag_threshold : float
        Minimum normalized score reported as a performance anomaly (any
        positive score when 0).
    random_state : int
        Seed for the day selection.
    n_jobs : int or None
        Thread bound for the DTW kernel.

    Attributes
    ----------
    ids_ : tuple of str
    labels_ : ndarray of shape (n_substations,)
    selected_days_ : list
    graph_ : NeighborGraph
        Merged graph.
    similarity_ : SimilarityMatrix
    dendrogram_ : Dendrogram
    assignment_ : ClusterAssignment
    supply_anomaly_mask_ : ndarray of bool
    scorecard_ : AnomalyScorecard or None
        Only when return temperatures were passed to ``fit``.
    anomaly_scores_ : ndarray of float
    performance_anomaly_mask_ : ndarray of bool
    timings_ : dict
        Seconds spent per stage.
    """

    def __init__(self, n_days=7, band_radius=12, k_base=10, theta_min=0.1, theta_max=0.9,
                 thresholds_as_quantiles=True, kappa_min=0.6, dissimilarity="geodesic", n_clusters=30,
                 singleton_threshold=1, n_neighbors=None, z_threshold=-2.0, flag_threshold=0.0,
                 random_state=0, n_jobs=None):
        self.n_days = n_days
        self.band_radius = band_radius
        self.k_base = k_base
        self.theta_min = theta_min
        self.theta_max = theta_max
        self.thresholds_as_quantiles = thresholds_as_quantiles
        self.kappa_min = kappa_min
        self.dissimilarity = dissimilarity
        self.n_clusters = n_clusters
        self.singleton_threshold = singleton_threshold
        self.n_neighbors = n_neighbors
        self.z_threshold = z_threshold
        self.flag_threshold = flag_threshold
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _check_params(self, n):
        check_int(self.n_days, "n_days", 1)
        check_int(self.band_radius, "band_radius", 0)
        check_int(self.k_base, "k_base", 1, n - 1)
        check_float(self.kappa_min, "kappa_min", -1.0, 1.0)
        if self.dissimilarity not in hierarchy.DISSIMILARITIES:
            raise ConfigError(f"dissimilarity must be one of {sorted(hierarchy.DISSIMILARITIES)}")
        check_int(self.n_clusters, "n_clusters", 1, n)
        check_int(self.singleton_threshold, "singleton_threshold", 0)
        if self.n_neighbors is not None:
            check_int(self.n_neighbors, "n_neighbors", 1)
        check_float(self.z_threshold, "z_threshold")
        check_float(self.flag_threshold, "flag_threshold", 0.0, 1.0)
        check_int(self.random_state, "random_state")
        return graph.AdaptiveKnnParams(self.k_base, self.theta_min, self.theta_max, self.thresholds_as_quantiles)

    def fit(self, X, y=None, *, return_temp=None, ids=None, day_starts=None, dates=None):
        """Run the pipeline.

        Parameters
        ----------
        X : array-like of shape (n_substations, n_samples)
            Gap-free supply temperatures on a common 5-minute grid.
        y : ignored
        return_temp : array-like of shape (n_substations, n_samples), optional
            Return temperatures; enables delta-T performance scoring.
        ids : sequence of str, optional
            Substation ids; ``S000, S001, ...`` when omitted.
        day_starts : array-like of int, optional
            First sample index of each complete day (288 samples long).
            Defaults to consecutive blocks from sample 0.
        dates : sequence, optional
            One label per entry of ``day_starts`` (defaults to 0, 1, ...).
        """
        X = check_channel_matrix(X, "X", min_samples=2)
        n, m = X.shape
        params = self._check_params(n)
        self.ids_ = check_ids(ids, n)
        self.n_features_in_ = m
        dtw.set_workers(self.n_jobs)
        timings = {}

        with _stage("sample_days", timings):
            if day_starts is None:
                day_starts = np.arange(m // SAMPLES_PER_DAY) * SAMPLES_PER_DAY
            day_starts = np.asarray(day_starts, dtype=int)
            if np.any(day_starts < 0) or np.any(day_starts + SAMPLES_PER_DAY > m):
                raise DataError("day_starts point outside the sample window")
            dates = list(range(len(day_starts))) if dates is None else list(dates)
            if len(dates) != len(day_starts):
                raise DataError(f"{len(dates)} date labels for {len(day_starts)} days")
            if self.n_days > len(dates):
                raise DataError(f"n_days={self.n_days} exceeds the {len(dates)} complete days available")
            start_of = dict(zip(dates, day_starts))
            self.selected_days_ = sorted(sample_without_replacement(dates, self.n_days, self.random_state))
            logger.info("selected %d of %d complete days", len(self.selected_days_), len(dates))

        with _stage("dtw", timings):
            self.daily_matrices_ = [
                dtw.pairwise_dtw(self.ids_, X[:, start_of[d]:start_of[d] + SAMPLES_PER_DAY], self.band_radius)
                for d in self.selected_days_
            ]
            logger.info("computed %d distance matrices of size %d", len(self.daily_matrices_), n)

        with _stage("knn", timings):
            self.daily_graphs_ = [graph.adaptive_knn(mat, params) for mat in self.daily_matrices_]
            logger.info("daily graphs hold %s edges", [len(g.edges) for g in self.daily_graphs_])

        with _stage("merge", timings):
            if len(self.daily_graphs_) >= 2:
                self.graph_ = graph.merge_graphs(self.daily_graphs_, self.kappa_min)
            else:
                self.graph_ = self.daily_graphs_[0]
            logger.info("merged graph keeps %d edges", len(self.graph_.edges))

        with _stage("similarity", timings):
            self.similarity_ = graph.snn_similarity(self.graph_)
            logger.info("%d pairs share neighbors", int(np.count_nonzero(np.triu(self.similarity_.values, 1))))

        with _stage("ward", timings):
            self.dissimilarity_ = hierarchy.DISSIMILARITIES[self.dissimilarity](self.similarity_)
            self.dendrogram_ = hierarchy.ward_agglomerative(self.dissimilarity_)

        with _stage("cut", timings):
            self.assignment_ = hierarchy.cut(self.dendrogram_, self.n_clusters, self.singleton_threshold)
            self.labels_ = np.array([self.assignment_.labels[s] for s in self.ids_])
            flagged = set(self.assignment_.flagged_ids())
            self.supply_anomaly_mask_ = np.array([s in flagged for s in self.ids_])
            logger.info("%d clusters, %d flagged as supply anomalies", self.assignment_.n_clusters, len(flagged))

        self.scorecard_ = None
        self.anomaly_scores_ = np.zeros(n)
        self.performance_anomaly_mask_ = np.zeros(n, dtype=bool)
        if return_temp is not None:
            with _stage("scoring", timings):
                R = check_same_shape(X, return_temp, "return_temp")
                self.euclidean_ = dtw.euclidean_from_array(self.ids_, X)
                self.delta_t_ = dict(zip(self.ids_, (X - R).mean(axis=1)))
                k = self.n_neighbors if self.n_neighbors is not None else self.k_base
                self.scorecard_ = anomaly.detect(self.assignment_, self.delta_t_, self.euclidean_, k,
                                                 self.flag_threshold, self.z_threshold)
                scores = self.scorecard_.scores()
                perf = set(self.scorecard_.performance_anomalies)
                self.anomaly_scores_ = np.array([scores[s] for s in self.ids_])
                self.performance_anomaly_mask_ = np.array([s in perf for s in self.ids_])
                logger.info("%d performance anomalies", len(perf))
        self.timings_ = timings
        return self

    def fit_predict(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).labels_

    @property
    def anomaly_mask_(self):
        """Supply-temperature or performance anomaly, per substation."""
        check_is_fitted(self, "labels_")
        return self.supply_anomaly_mask_ | self.performance_anomaly_mask_
