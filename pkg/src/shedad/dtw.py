"""Banded DTW between daily supply profiles and Euclidean distance matrices.

Local cost is ``|a_i - b_j|`` with the symmetric step set {(1,0), (0,1), (1,1)}
and no slope weights; the Sakoe-Chiba band keeps ``|i - j| <= band_radius``.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numba as nb
import numpy as np
import pandas as pd

from .exceptions import DataError

DEFAULT_BAND_RADIUS = 12

nb.config.THREADING_LAYER = "omp"


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric, zero-diagonal, finite matrix indexed by substation id."""

    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        object.__setattr__(self, "ids", tuple(self.ids))
        if v.shape != (len(self.ids), len(self.ids)):
            raise DataError(f"matrix shape {v.shape} does not match {len(self.ids)} ids")
        if not np.all(np.isfinite(v)):
            raise DataError("distance matrix has non-finite entries")
        if not np.array_equal(v, v.T):
            raise DataError("distance matrix is not symmetric")
        if np.any(np.diag(v) != 0) or np.any(v < 0):
            raise DataError("distance matrix needs a zero diagonal and nonnegative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.ids)

    def index(self, ids) -> np.ndarray:
        pos = {s: i for i, s in enumerate(self.ids)}
        return np.array([pos[s] for s in ids], dtype=int)

    def submatrix(self, ids) -> "DistanceMatrix":
        idx = self.index(ids)
        return DistanceMatrix(tuple(ids), self.values[np.ix_(idx, idx)])

    def to_csv(self, path=None) -> str | None:
        frame = pd.DataFrame(self.values, index=list(self.ids), columns=list(self.ids))
        frame.index.name = "substation_id"
        return frame.to_csv(path, lineterminator="\n")

    @classmethod
    def from_csv(cls, path) -> "DistanceMatrix":
        frame = pd.read_csv(path, index_col=0, dtype=str, keep_default_na=False)
        try:
            # numpy's str -> float is correctly rounded, pandas' parser is not
            values = frame.to_numpy().astype(float)
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric distance: {exc}") from exc
        if list(frame.columns) != list(frame.index):
            raise DataError(f"{path}: row and column ids differ")
        return cls(tuple(str(i) for i in frame.index), values)


@nb.njit(cache=True, nogil=True)
def _dtw_banded(a, b, radius):
    n = a.shape[0]
    m = b.shape[0]
    inf = np.inf
    prev = np.full(m + 1, inf)
    curr = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        lo = max(1, i - radius)
        hi = min(m, i + radius)
        curr[0] = inf
        # cells left of the band must read as unreachable in the next row
        if lo - 1 >= 1:
            curr[lo - 1] = inf
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if curr[j - 1] < best:
                best = curr[j - 1]
            curr[j] = abs(a[i - 1] - b[j - 1]) + best
        if hi + 1 <= m:
            curr[hi + 1] = inf
        prev, curr = curr, prev
    return prev[m]


@nb.njit(cache=True, parallel=True)
def _pairwise_dtw(profiles, radius):
    n = profiles.shape[0]
    out = np.zeros((n, n))
    for i in nb.prange(n):
        for j in range(i + 1, n):
            d = _dtw_banded(profiles[i], profiles[j], radius)
            out[i, j] = d
            out[j, i] = d
    return out


def dtw_distance(a, b, band_radius: int = DEFAULT_BAND_RADIUS) -> float:
    """Minimal cumulative absolute-difference cost over banded warping paths.

    >>> dtw_distance([0, 0, 0], [1, 1, 1], band_radius=0)
    3.0
    >>> dtw_distance([0, 1, 0], [0, 0, 1], band_radius=1)
    1.0
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or len(a) != len(b):
        raise DataError(f"dtw_distance needs equal-length vectors, got {a.shape} and {b.shape}")
    if band_radius < 0:
        raise DataError("band_radius must be >= 0")
    if len(a) == 0:
        return 0.0
    return float(_dtw_banded(a, b, int(band_radius)))


def set_workers(workers: int | None):
    """Bound the thread count used by the pairwise kernels."""
    if workers:
        nb.set_num_threads(max(1, min(int(workers), nb.config.NUMBA_NUM_THREADS)))


def pairwise_dtw(ids: Sequence[str], profiles: np.ndarray, band_radius: int = DEFAULT_BAND_RADIUS) -> DistanceMatrix:
    """DTW matrix over the rows of ``profiles`` (one row per id)."""
    profiles = np.ascontiguousarray(profiles, dtype=float)
    if profiles.ndim != 2 or profiles.shape[0] != len(ids):
        raise DataError("profiles must be a 2-D array with one row per id")
    if band_radius < 0:
        raise DataError("band_radius must be >= 0")
    return DistanceMatrix(tuple(ids), _pairwise_dtw(profiles, int(band_radius)))


def profile_digest(profiles: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(profiles, dtype=float).tobytes()).hexdigest()[:16]


def daily_distance_matrices(profiles_by_date: Mapping, dates: Sequence, band_radius: int = DEFAULT_BAND_RADIUS,
                            cache_dir=None) -> list[DistanceMatrix]:
    """One DTW matrix per selected date.

    Parameters
    ----------
    profiles_by_date : mapping
        ``date -> {substation_id: supply vector}``.
    dates : sequence
        Dates to use; every substation must have a profile on each.
    cache_dir : path-like, optional
        If given, matrices are stored as ``.npz`` keyed by date, band radius
        and a digest of the input profiles, and reused on later calls.
    """
    if not dates:
        return []
    ids = tuple(sorted(profiles_by_date[dates[0]]))
    out = []
    for date in dates:
        day = profiles_by_date.get(date, {})
        if set(day) != set(ids):
            extra = sorted(set(ids) - set(day)) or sorted(set(day) - set(ids))
            raise DataError(f"substations {extra[:5]} lack a profile on {date}")
        stacked = np.vstack([day[s] for s in ids])
        cache_file = None
        if cache_dir is not None:
            cache_file = Path(cache_dir) / f"dtw_{date}_{band_radius}_{profile_digest(stacked)}.npz"
            if cache_file.exists():
                with np.load(cache_file, allow_pickle=False) as z:
                    out.append(DistanceMatrix(tuple(z["ids"]), z["values"]))
                continue
        mat = pairwise_dtw(ids, stacked, band_radius)
        if cache_file is not None:
            cache_file.parent.mkdir(parents=True, exist_ok=True)
            buf = io.BytesIO()
            np.savez_compressed(buf, ids=np.array(ids), values=mat.values)
            cache_file.write_bytes(buf.getvalue())
        out.append(mat)
    return out


def euclidean_matrix(series, channel: str = "supply") -> DistanceMatrix:
    """L2 distance between full-window channel vectors.

    ``series`` is a sequence of :class:`~shedad.ingest.SubstationSeries`.
    """
    ids = tuple(s.substation_id for s in series)
    vectors = [np.asarray(getattr(s, channel), dtype=float) for s in series]
    if len({len(v) for v in vectors}) > 1:
        raise DataError("euclidean_matrix needs equal-length vectors")
    return euclidean_from_array(ids, np.vstack(vectors) if vectors else np.zeros((0, 0)))


def euclidean_from_array(ids: Sequence[str], X: np.ndarray) -> DistanceMatrix:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        diff = X[i + 1:] - X[i]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[i, i + 1:] = d
        out[i + 1:, i] = d
    return DistanceMatrix(tuple(ids), out)
