import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from shedad._rng import SplitMix64, sample_without_replacement
from shedad.exceptions import DataError, ParseError, SchemaError
from shedad.ingest import (SAMPLES_PER_DAY, SubstationSeries, day_starts, exclusions_to_json, load_csv,
                           read_locations, sample_days, segment_days, validate_and_align, write_csv)

HEADER = "timestamp,substation_id,supply_temp,return_temp,flow,outdoor_temp\n"
JAN = pd.Timestamp("2024-01-01", tz="UTC")


def _series(sid, n, start=JAN, seed=0):
    rng = np.random.default_rng(seed)
    sup = 70 + rng.normal(size=n)
    return SubstationSeries(sid, start, sup, sup - 30, np.full(n, 2.0), np.zeros(n))


def _write(tmp_path, series, name="data.csv"):
    path = tmp_path / name
    write_csv(series, path)
    return path


# -- RNG ---------------------------------------------------------------------

def test_splitmix64_reference_vectors():
    # published reference outputs for seeds 0 and 1234567
    r = SplitMix64(0)
    assert [r.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    r = SplitMix64(1234567)
    assert [r.next_u64() for _ in range(2)] == [6457827717110365317, 3203168211198807973]


@given(st.integers(1, 40), st.integers(0, 2**63))
@settings(max_examples=60, deadline=None)
def test_sample_without_replacement_is_a_subset(n, seed):
    items = list(range(100, 100 + n))
    r = n // 2 + 1
    got = sample_without_replacement(items, r, seed)
    assert len(set(got)) == r and set(got) <= set(items)
    assert got == sample_without_replacement(reversed(items), r, seed)


# -- load_csv ----------------------------------------------------------------

def test_empty_body_yields_no_substations(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text(HEADER)
    assert load_csv(p) == {}


def test_fully_empty_file_is_a_data_error(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DataError):
        load_csv(p)


def test_non_numeric_supply_names_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + "2024-01-01T00:00:00Z,S1,70,40,1,0\n2024-01-01T00:05:00Z,S1,hot,40,1,0\n")
    with pytest.raises(ParseError, match="line 3") as info:
        load_csv(p)
    assert info.value.line == 3


def test_bad_timestamp_and_duplicates(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + "yesterday,S1,70,40,1,0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_csv(p)
    p.write_text(HEADER + "2024-01-01T00:00:00Z,S1,70,40,1,0\n2024-01-01T00:00:00Z,S1,71,40,1,0\n")
    with pytest.raises(ParseError, match="duplicate"):
        load_csv(p)


def test_schema_mapping_and_unknown_columns(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ts,id,sup,ret,flow,outdoor_temp\n2024-01-01T00:00:00Z,S1,70,40,1,0\n")
    got = load_csv(p, schema={"timestamp": "ts", "substation_id": "id", "supply_temp": "sup", "return_temp": "ret"})
    assert list(got) == ["S1"] and got["S1"].supply_temp[0] == 70.0
    with pytest.raises(SchemaError):
        load_csv(p)
    p.write_text(HEADER.strip() + ",mystery\n")
    with pytest.raises(SchemaError, match="mystery"):
        load_csv(p)


def test_month_of_data_is_8928_samples(tmp_path):
    n = 31 * SAMPLES_PER_DAY
    assert n == 8928
    path = _write(tmp_path, [_series("S001", n)])
    series, excluded = validate_and_align(load_csv(path))
    assert len(series) == 1 and len(series[0]) == 8928 and excluded == []
    assert len(segment_days(series[0])) == 31


def test_round_trip_is_exact(tmp_path):
    orig = [_series("A", 600, seed=1), _series("B", 600, seed=2)]
    series, _ = validate_and_align(load_csv(_write(tmp_path, orig)))
    for a, b in zip(orig, series):
        assert a.substation_id == b.substation_id and a.start == b.start
        np.testing.assert_array_equal(a.supply, b.supply)
        np.testing.assert_array_equal(a.return_temp, b.return_temp)


def test_locations(tmp_path):
    p = tmp_path / "loc.csv"
    write_csv([_series("A", 3)], p, locations={"A": (1.5, -2.0)})
    assert read_locations(p) == {"A": (1.5, -2.0)}


# -- validate_and_align ------------------------------------------------------

def test_complete_substation_is_retained_unchanged(tmp_path):
    s = _series("S1", 500)
    got, excluded = validate_and_align(load_csv(_write(tmp_path, [s])))
    np.testing.assert_array_equal(got[0].supply, s.supply)
    assert excluded == []


def test_single_dropped_sample_excludes(small_sim, tmp_path):
    _, series, _, _ = small_sim
    path = _write(tmp_path, series[:5])
    frame = pd.read_csv(path, dtype=str)
    victim = frame.index[(frame.substation_id == series[2].substation_id)][100]
    frame.drop(index=victim).to_csv(path, index=False)
    kept, excluded = validate_and_align(load_csv(path))
    assert [e.substation_id for e in excluded] == [series[2].substation_id]
    assert "missing" in excluded[0].reason
    assert len(kept) == 4


@pytest.mark.parametrize("column,value,reason", [
    ("supply_temp", "", "missing"), ("flow", "-1", "negative"), ("return_temp", "500", "outside"),
])
def test_bad_values_exclude(tmp_path, column, value, reason):
    path = _write(tmp_path, [_series("A", 50), _series("B", 50)])
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.loc[10, column] = value
    frame.to_csv(path, index=False)
    kept, excluded = validate_and_align(load_csv(path))
    assert [s.substation_id for s in kept] == ["B"]
    assert reason in excluded[0].reason
    assert "A" in exclusions_to_json(excluded)


def test_all_excluded_is_an_error(tmp_path):
    path = _write(tmp_path, [_series("A", 50)])
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    frame.loc[3, "flow"] = "-5"
    frame.to_csv(path, index=False)
    with pytest.raises(DataError):
        validate_and_align(load_csv(path))


def test_28_of_248_gapped_leaves_220(tmp_path):
    rng = np.random.default_rng(0)
    n = 2 * SAMPLES_PER_DAY
    series = [_series(f"S{i:03d}", n, seed=i) for i in range(248)]
    path = _write(tmp_path, series)
    frame = pd.read_csv(path, dtype=str)
    gapped = rng.choice(248, size=28, replace=False)
    drop = []
    for g in gapped:
        rows = np.flatnonzero(frame.substation_id.to_numpy() == f"S{g:03d}")
        drop.extend(rng.choice(rows[1:-1], size=int(rng.integers(1, 20)), replace=False))
    frame.drop(index=drop).to_csv(path, index=False)
    kept, excluded = validate_and_align(load_csv(path))
    assert len(kept) == 220 and len(excluded) == 28
    assert {e.substation_id for e in excluded} == {f"S{g:03d}" for g in gapped}


# -- days --------------------------------------------------------------------

def test_exact_day_gives_one_profile():
    assert len(segment_days(_series("A", 288))) == 1


def test_300_samples_drop_12_trailing():
    profiles = segment_days(_series("A", 300))
    assert len(profiles) == 1 and len(profiles[0].supply) == 288


def test_partial_leading_day_is_dropped():
    s = _series("A", 3 * 288, start=JAN + pd.Timedelta(hours=6))
    dates = [p.date for p in segment_days(s)]
    assert dates == [dt.date(2024, 1, 2), dt.date(2024, 1, 3)]


def test_timezone_shifts_day_boundaries():
    dates, starts = day_starts(3 * 288, JAN, tz="Europe/Stockholm")
    # local midnight is 23:00 UTC in winter
    assert list(starts) == [23 * 12, 23 * 12 + 288]
    assert dates[0] == dt.date(2024, 1, 2)


def test_sample_days_contract():
    dates = [dt.date(2024, 1, d) for d in range(1, 32)]
    assert sample_days(dates, 31, seed=5) == dates
    a = sample_days(dates, 7, seed=1)
    assert a == sample_days(dates, 7, seed=1) and a == sorted(a) and len(set(a)) == 7
    b = sample_days(dates, 7, seed=2)
    assert a != b
    with pytest.raises(DataError):
        sample_days(dates, 32, seed=0)
    with pytest.raises(DataError):
        sample_days(dates, 0, seed=0)
