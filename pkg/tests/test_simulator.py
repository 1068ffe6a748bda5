import json

import numpy as np
import pandas as pd
import pytest

from shedad.exceptions import ConfigError
from shedad.ingest import load_csv, validate_and_align
from shedad.simulator import (DEFAULT_MAGNITUDES, PERFORMANCE_FAULTS, SUPPLY_FAULTS, FaultSpec, GroundTruth,
                              NetworkSpec, Window, default_faults, emit_csv, generate_network, pipe_delay_samples,
                              simulate)

JAN = pd.Timestamp("2024-01-01", tz="UTC")
SHORT = Window(start=JAN, days=2)


def test_minimal_network():
    topo = generate_network(NetworkSpec(n_substations=2))
    assert topo.edges() == [(0, 1)]
    assert topo.parent[0] == -1 and topo.pipe_length[1] > 0


def test_n_below_two_rejected():
    with pytest.raises(ConfigError):
        NetworkSpec(n_substations=1)


def test_default_scale_is_deterministic():
    a, b = generate_network(NetworkSpec()), generate_network(NetworkSpec())
    assert len(a) == 248
    np.testing.assert_array_equal(a.parent, b.parent)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.parent, generate_network(NetworkSpec(seed=1)).parent)


def test_branch_factor_one_is_a_path():
    topo = generate_network(NetworkSpec(n_substations=12, branch_factor=1))
    assert topo.edges() == [(i, i + 1) for i in range(11)]
    np.testing.assert_array_equal(topo.depth(), np.arange(12))


def test_tree_distance_tracks_map_distance():
    topo = generate_network(NetworkSpec(n_substations=100))
    r = np.hypot(topo.x, topo.y)
    assert np.corrcoef(r, topo.path_length())[0, 1] > 0.7


def test_lossless_propagation_is_a_pure_shift():
    spec0 = NetworkSpec(n_substations=15, seed=4)
    topo = generate_network(spec0)
    n = SHORT.n_samples + 400
    profile = 70 + 5 * np.sin(np.arange(n) / 37.0)
    spec = NetworkSpec(n_substations=15, seed=4, noise_sigma=0.0, loss_coefficient=0.0, spike_noise_rate=0.0,
                       source_profile=profile)
    series, truth = simulate(topo, spec, (), SHORT)
    delays = pipe_delay_samples(topo, spec)
    lead = int(delays.max()) + 1
    src = profile[-(SHORT.n_samples + lead):]
    for i, s in enumerate(series):
        np.testing.assert_array_equal(s.supply, src[lead - delays[i]: lead - delays[i] + SHORT.n_samples])
    assert not truth.supply_anomaly_ids and not truth.performance_anomaly_ids


def test_supply_cools_along_every_path():
    spec = NetworkSpec(n_substations=60, noise_sigma=0.0, spike_noise_rate=0.0, delay_coefficient=0.0)
    topo = generate_network(spec)
    series, _ = simulate(topo, spec, (), SHORT)
    mean = np.array([s.supply.mean() for s in series])
    for p, c in topo.edges():
        assert mean[c] <= mean[p] + 1e-9


def _one_fault(kind, magnitude=None, sid="S003"):
    spec = NetworkSpec(n_substations=10, seed=2)
    topo = generate_network(spec)
    f = FaultSpec(sid, kind, JAN + pd.Timedelta(hours=18), 600, magnitude or DEFAULT_MAGNITUDES[kind])
    series, truth = simulate(topo, spec, [f], SHORT)
    clean, _ = simulate(topo, spec, [], SHORT)
    i = topo.ids.index(sid)
    return series[i], clean[i], truth, slice(216, 216 + 120)


def test_spike_reaches_150():
    s, _, truth, sl = _one_fault("spike")
    assert s.supply[sl].max() == 150.0
    assert truth.supply_anomaly_ids == {"S003"}


def test_delta_t_zero_makes_return_equal_supply():
    s, clean, _, sl = _one_fault("delta_t_zero")
    np.testing.assert_array_equal(s.return_temp[sl], s.supply[sl])
    np.testing.assert_array_equal(s.supply[:216], clean.supply[:216])


def test_low_delta_t_scales_the_statistic():
    s, clean, truth, sl = _one_fault("low_delta_t", 0.4)
    ratio = (s.supply[sl] - s.return_temp[sl]).mean() / (clean.supply[sl] - clean.return_temp[sl]).mean()
    assert ratio == pytest.approx(0.6, abs=1e-9)
    assert truth.performance_anomaly_ids == {"S003"} and not truth.supply_anomaly_ids


@pytest.mark.parametrize("kind", sorted(SUPPLY_FAULTS))
def test_every_supply_fault_changes_supply_or_return(kind):
    s, clean, _, sl = _one_fault(kind)
    changed = not np.array_equal(s.supply[sl], clean.supply[sl]) or not np.array_equal(
        s.return_temp[sl], clean.return_temp[sl])
    assert changed
    np.testing.assert_array_equal(s.supply[:100], clean.supply[:100])


@pytest.mark.parametrize("fault", [
    FaultSpec("S999", "flatline", JAN, 60, 60.0),
    FaultSpec("S001", "meltdown", JAN, 60, 60.0),
    FaultSpec("S001", "flatline", JAN - pd.Timedelta(hours=1), 120, 60.0),
    FaultSpec("S001", "low_delta_t", JAN, 60, 1.5),
    FaultSpec("S001", "flatline", JAN, 0, 60.0),
])
def test_invalid_faults_are_rejected(fault):
    spec = NetworkSpec(n_substations=5)
    with pytest.raises(ConfigError):
        simulate(generate_network(spec), spec, [fault], SHORT)


def test_default_faults_counts_and_kinds():
    topo = generate_network(NetworkSpec())
    faults = default_faults(topo, Window())
    kinds = [f.fault_kind for f in faults]
    assert sum(k in SUPPLY_FAULTS for k in kinds) == 16
    assert sum(k in PERFORMANCE_FAULTS for k in kinds) == 14
    assert len({f.substation_id for f in faults}) == 30 and "S000" not in {f.substation_id for f in faults}
    assert set(kinds) >= SUPPLY_FAULTS


def test_emit_and_reload(small_sim, tmp_path):
    _, series, truth, window = small_sim
    data, gt = emit_csv(series, truth, tmp_path)
    n_rows = sum(1 for _ in open(data)) - 1
    assert n_rows == len(series) * window.n_samples
    back, excluded = validate_and_align(load_csv(data))
    assert not excluded
    for a, b in zip(series, back):
        np.testing.assert_array_equal(a.supply, b.supply)
        np.testing.assert_array_equal(a.return_temp, b.return_temp)
        np.testing.assert_array_equal(a.flow, b.flow)
    doc = json.loads(gt.read_text())
    assert set(doc) == {"substations", "supply_anomalies", "performance_anomalies", "faults"}
    assert set(doc["supply_anomalies"]) | set(doc["performance_anomalies"]) == {
        f.substation_id for f in truth.faults}
    again = GroundTruth.from_json(gt)
    assert again.supply_anomaly_ids == truth.supply_anomaly_ids and again.faults == truth.faults


def test_emit_is_byte_identical_per_seed(tmp_path):
    spec = NetworkSpec(n_substations=8, seed=9)
    topo = generate_network(spec)
    out = []
    for k in range(2):
        series, truth = simulate(topo, spec, default_faults(topo, SHORT, 2, 1, seed=9), SHORT)
        data, _ = emit_csv(series, truth, tmp_path / str(k))
        out.append(data.read_bytes())
    assert out[0] == out[1]


@pytest.mark.slow
def test_full_scale_row_count():
    spec = NetworkSpec()
    series, _ = simulate(generate_network(spec), spec, (), Window())
    assert len(series) == 248 and all(len(s) == 8928 for s in series)
