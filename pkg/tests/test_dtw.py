import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dtw_full
from shedad.dtw import (DistanceMatrix, daily_distance_matrices, dtw_distance, euclidean_from_array,
                        euclidean_matrix, pairwise_dtw)
from shedad.exceptions import DataError
from shedad.simulator import NetworkSpec, Topology, Window, simulate

vectors = arrays(np.float64, st.integers(1, 24), elements=st.floats(-100, 100, allow_nan=False))


def test_identity_is_zero():
    a = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    for r in (0, 1, 12):
        assert dtw_distance(a, a, r) == 0.0


def test_hand_examples():
    assert dtw_distance([0, 0, 0], [1, 1, 1], 0) == 3.0
    assert dtw_full([0, 0, 0], [1, 1, 1], 0) == 3.0
    assert dtw_distance([0, 1, 0], [0, 0, 1], 1) == 1.0
    assert dtw_full([0, 1, 0], [0, 0, 1]) == 1.0


def test_band_zero_is_manhattan():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    assert dtw_distance(a, b, 0) == pytest.approx(np.abs(a - b).sum(), abs=1e-12)


def test_matches_full_dp_integer_inputs():
    rng = np.random.default_rng(1)
    for _ in range(300):
        m = int(rng.integers(1, 33))
        a, b = rng.integers(-20, 20, size=m), rng.integers(-20, 20, size=m)
        assert dtw_distance(a, b, m) == dtw_full(a, b)


@given(st.data())
@settings(max_examples=150, deadline=None)
def test_matches_banded_oracle(data):
    a = data.draw(vectors)
    b = data.draw(arrays(np.float64, len(a), elements=st.floats(-100, 100, allow_nan=False)))
    r = data.draw(st.integers(0, len(a)))
    assert dtw_distance(a, b, r) == pytest.approx(dtw_full(a, b, r), rel=1e-12, abs=1e-9)


@given(st.data())
@settings(max_examples=150, deadline=None)
def test_wider_band_never_increases(data):
    a = data.draw(vectors)
    b = data.draw(arrays(np.float64, len(a), elements=st.floats(-100, 100, allow_nan=False)))
    r1 = data.draw(st.integers(0, 10))
    r2 = data.draw(st.integers(r1, 12))
    assert dtw_distance(a, b, r1) >= dtw_distance(a, b, r2)


@given(vectors)
@settings(max_examples=60, deadline=None)
def test_symmetric(a):
    b = a[::-1].copy()
    assert dtw_distance(a, b, 3) == dtw_distance(b, a, 3)


def test_errors():
    with pytest.raises(DataError):
        dtw_distance([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        dtw_distance([1, 2], [1, 2], -1)


def test_pairwise_matches_scalar_calls():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(7, 40))
    ids = [f"S{i}" for i in range(7)]
    D = pairwise_dtw(ids, X, 4)
    for i in range(7):
        for j in range(7):
            assert D.values[i, j] == dtw_distance(X[i], X[j], 4)


def test_three_substations_shape_and_duplicates():
    X = np.array([[1.0, 2, 3, 4], [1.0, 2, 3, 4], [0.0, 0, 0, 0]])
    D = pairwise_dtw(["a", "b", "c"], X, 1)
    assert D.values.shape == (3, 3)
    np.testing.assert_array_equal(D.values, D.values.T)
    assert D.values[0, 1] == 0.0 and np.all(np.diag(D.values) == 0)


def test_daily_matrices_and_cache(tmp_path):
    rng = np.random.default_rng(3)
    days = {d: {s: rng.normal(size=288) for s in ("B", "A", "C")} for d in ("d1", "d2")}
    first = daily_distance_matrices(days, ["d1", "d2"], 12, cache_dir=tmp_path)
    assert first[0].ids == ("A", "B", "C") and len(list(tmp_path.iterdir())) == 2
    again = daily_distance_matrices(days, ["d1", "d2"], 12, cache_dir=tmp_path)
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a.values, b.values)
    del days["d2"]["C"]
    with pytest.raises(DataError, match="C"):
        daily_distance_matrices(days, ["d1", "d2"])


def test_constant_offset_is_c_sqrt_m():
    m, c = 250, 1.7
    a = np.linspace(0, 5, m)
    D = euclidean_from_array(["a", "b"], np.vstack([a, a + c]))
    direct = np.sqrt(sum((x - (x + c)) ** 2 for x in a))
    assert D.values[0, 1] == pytest.approx(c * np.sqrt(m), rel=1e-12)
    assert D.values[0, 1] == pytest.approx(direct, rel=1e-12)


@given(arrays(np.float64, (5, 6), elements=st.floats(-50, 50, allow_nan=False)))
@settings(max_examples=80, deadline=None)
def test_euclidean_is_a_metric(X):
    D = euclidean_from_array([str(i) for i in range(5)], X).values
    assert np.all(np.diag(D) == 0) and np.array_equal(D, D.T)
    for i in range(5):
        for j in range(5):
            for k in range(5):
                assert D[i, k] <= D[i, j] + D[j, k] + 1e-9


def test_distance_matrix_validation():
    with pytest.raises(DataError):
        DistanceMatrix(("a", "b"), np.array([[0, 1], [2, 0]]))
    with pytest.raises(DataError):
        DistanceMatrix(("a", "b"), np.array([[1, 1], [1, 0]]))
    v = np.array([[0.0, 1.0], [1.0, 0.0]])
    D = DistanceMatrix(("a", "b"), v)
    assert v.flags.writeable and not D.values.flags.writeable


def test_csv_round_trip(tmp_path):
    D = pairwise_dtw(["x", "y", "z"], np.random.default_rng(0).normal(size=(3, 30)), 3)
    D.to_csv(tmp_path / "d.csv")
    back = DistanceMatrix.from_csv(tmp_path / "d.csv")
    assert back.ids == D.ids
    np.testing.assert_array_equal(back.values, D.values)


def _two_branch_topology():
    # plant -> 1 -> 2 on a short main, plant -> 3 -> 4 behind a long pipe
    parent = np.array([-1, 0, 1, 0, 3])
    length = np.array([0.0, 100.0, 100.0, 1500.0, 100.0])
    flow = np.full(5, 3.0)
    q = np.array([15.0, 6.0, 3.0, 6.0, 3.0]) / 3600.0
    diameter = np.sqrt(4 * q / np.pi)
    diameter[0] = 0.0
    return Topology(("S000", "S001", "S002", "S003", "S004"), parent, length, diameter, flow,
                    np.array([-1, 0, 0, 1, 1]), np.zeros(5), np.zeros(5))


def test_same_branch_closer_than_cross_branch():
    topo = _two_branch_topology()
    spec = NetworkSpec(n_substations=5, noise_sigma=0.0, spike_noise_rate=0.0)
    series, _ = simulate(topo, spec, (), Window(days=1))
    D = pairwise_dtw(topo.ids, np.vstack([s.supply for s in series]), 12).values
    assert D[1, 2] < D[1, 3] and D[1, 2] < D[1, 4]
    assert D[3, 4] < D[3, 1] and D[3, 4] < D[3, 2]


def test_euclidean_matrix_from_series(small_sim):
    _, series, _, _ = small_sim
    D = euclidean_matrix(series[:4])
    a, b = series[0].supply, series[1].supply
    assert D.values[0, 1] == pytest.approx(np.linalg.norm(a - b), rel=1e-12)
