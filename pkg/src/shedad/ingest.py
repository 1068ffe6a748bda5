"""Meter CSV ingest: parsing, gap validation, daily segmentation and day sampling."""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from ._rng import sample_without_replacement
from .exceptions import DataError, ParseError, SchemaError

STEP_SECONDS = 300
SAMPLES_PER_DAY = 86400 // STEP_SECONDS
TEMP_RANGE = (-50.0, 200.0)

REQUIRED_COLUMNS = ("timestamp", "substation_id", "supply_temp", "return_temp", "flow", "outdoor_temp")
OPTIONAL_COLUMNS = ("x", "y")
NUMERIC_COLUMNS = ("supply_temp", "return_temp", "flow", "outdoor_temp", "x", "y")
_MISSING_TOKENS = {"", "nan", "na", "null"}


class RawReading(NamedTuple):
    timestamp: pd.Timestamp
    substation_id: str
    supply_temp: float
    return_temp: float
    flow: float
    outdoor_temp: float


@dataclass(frozen=True)
class SubstationReadings:
    """All rows of one substation, columnar and sorted by timestamp."""

    substation_id: str
    timestamp: pd.DatetimeIndex
    supply_temp: np.ndarray
    return_temp: np.ndarray
    flow: np.ndarray
    outdoor_temp: np.ndarray

    def __len__(self):
        return len(self.timestamp)

    def rows(self) -> Iterator[RawReading]:
        for i in range(len(self)):
            yield RawReading(self.timestamp[i], self.substation_id, float(self.supply_temp[i]),
                             float(self.return_temp[i]), float(self.flow[i]), float(self.outdoor_temp[i]))


@dataclass(frozen=True)
class SubstationSeries:
    """Gap-free, grid-aligned measurements of one substation."""

    substation_id: str
    start: pd.Timestamp
    supply: np.ndarray
    return_temp: np.ndarray
    flow: np.ndarray
    outdoor_temp: np.ndarray | None = None
    step: int = STEP_SECONDS

    def __post_init__(self):
        n = len(self.supply)
        channels = [self.return_temp, self.flow] + ([self.outdoor_temp] if self.outdoor_temp is not None else [])
        if any(len(c) != n for c in channels):
            raise DataError(f"{self.substation_id}: channel lengths differ")
        for c in [self.supply, *channels]:
            c.setflags(write=False)

    def __len__(self):
        return len(self.supply)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self), freq=pd.Timedelta(seconds=self.step))


@dataclass(frozen=True)
class DailyProfile:
    substation_id: str
    date: dt.date
    supply: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Exclusion:
    substation_id: str
    reason: str


def load_csv(path, schema: Mapping[str, str] | None = None) -> dict[str, SubstationReadings]:
    """Read a meter CSV into per-substation readings.

    Parameters
    ----------
    path : path-like
        UTF-8, comma-separated file with a header row.
    schema : mapping, optional
        Canonical column name -> header name in the file. Unmapped canonical
        names are expected verbatim.

    Returns
    -------
    dict
        ``substation_id -> SubstationReadings`` ordered by id. An empty body
        yields an empty dict.

    Raises
    ------
    SchemaError
        Mapped column absent from the header, or header column not in the schema.
    ParseError
        Malformed timestamp or number (message carries the file line), or a
        duplicated ``(substation_id, timestamp)`` pair.
    DataError
        File is unreadable or completely empty.
    """
    schema = dict(schema or {})
    unknown_keys = set(schema) - set(REQUIRED_COLUMNS) - set(OPTIONAL_COLUMNS)
    if unknown_keys:
        raise SchemaError(f"schema maps unknown canonical columns: {sorted(unknown_keys)}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    to_canonical = {schema.get(c, c): c for c in (*REQUIRED_COLUMNS, *OPTIONAL_COLUMNS)}
    header = list(frame.columns)
    missing = [schema.get(c, c) for c in REQUIRED_COLUMNS if schema.get(c, c) not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    extra = [c for c in header if c not in to_canonical]
    if extra:
        raise SchemaError(f"{path}: unknown columns {extra}")
    frame = frame.rename(columns=to_canonical)
    if frame.empty:
        return {}

    lines = np.arange(len(frame)) + 2
    stamps = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601", errors="coerce")
    bad = stamps.isna().to_numpy()
    if bad.any():
        stamps = pd.to_datetime(frame["timestamp"].str.strip(), utc=True, format="ISO8601", errors="coerce")
        bad = stamps.isna().to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(f"bad timestamp {frame['timestamp'].iat[i]!r}", lines[i])
    ids = frame["substation_id"].str.strip()
    if (ids == "").any():
        i = int(np.flatnonzero((ids == "").to_numpy())[0])
        raise ParseError("empty substation_id", lines[i])

    values = {}
    for col in NUMERIC_COLUMNS:
        if col not in frame:
            continue
        # pd.to_numeric is not correctly rounded; str -> float via numpy is,
        # and it already skips surrounding blanks and reads "nan" as missing
        try:
            values[col] = frame[col].to_numpy().astype(float)
            continue
        except ValueError:
            pass
        raw = frame[col].str.strip()
        present = ~raw.str.lower().isin(_MISSING_TOKENS).to_numpy()
        parsed = np.full(len(raw), np.nan)
        try:
            parsed[present] = raw.to_numpy()[present].astype(float)
        except ValueError:
            for i in np.flatnonzero(present):
                try:
                    float(raw.iat[i])
                except ValueError:
                    raise ParseError(f"non-numeric {col} {frame[col].iat[i]!r}", lines[i]) from None
        values[col] = parsed

    data = pd.DataFrame({"substation_id": ids.to_numpy(), "timestamp": stamps, "line": lines, **values})
    dup = data.duplicated(["substation_id", "timestamp"], keep="first").to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise ParseError(f"duplicate reading for {data['substation_id'].iat[i]} at {data['timestamp'].iat[i]}",
                         lines[i])

    out = {}
    for sid, group in data.sort_values(["substation_id", "timestamp"], kind="stable").groupby(
            "substation_id", sort=True):
        out[sid] = SubstationReadings(
            substation_id=sid,
            timestamp=pd.DatetimeIndex(group["timestamp"]),
            supply_temp=group["supply_temp"].to_numpy(),
            return_temp=group["return_temp"].to_numpy(),
            flow=group["flow"].to_numpy(),
            outdoor_temp=group["outdoor_temp"].to_numpy(),
        )
    return out


def read_locations(path, schema: Mapping[str, str] | None = None) -> dict[str, tuple[float, float]]:
    """Per-substation (x, y) from the optional location columns; empty when absent."""
    schema = dict(schema or {})
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    xcol, ycol, idcol = schema.get("x", "x"), schema.get("y", "y"), schema.get("substation_id", "substation_id")
    if xcol not in frame or ycol not in frame:
        return {}
    first = frame.drop_duplicates(idcol)
    return {r[idcol]: (float(r[xcol]), float(r[ycol])) for _, r in first.iterrows()
            if r[xcol].strip() and r[ycol].strip()}


def _exclusion_reason(rd: SubstationReadings, grid: pd.DatetimeIndex) -> str | None:
    step = grid.freq.nanos if grid.freq is not None else STEP_SECONDS * 10**9
    offsets = (rd.timestamp.asi8 - grid.asi8[0]) % step
    if np.any(offsets != 0):
        return "timestamps off the 5-minute grid"
    if len(rd) < len(grid):
        return f"missing {len(grid) - len(rd)} of {len(grid)} samples"
    channels = {"supply_temp": rd.supply_temp, "return_temp": rd.return_temp,
                "flow": rd.flow, "outdoor_temp": rd.outdoor_temp}
    nan_cols = [name for name, v in channels.items() if np.isnan(v).any()]
    if nan_cols:
        return "missing values in " + ", ".join(nan_cols)
    lo, hi = TEMP_RANGE
    for name in ("supply_temp", "return_temp"):
        v = channels[name]
        if v.min() < lo or v.max() > hi:
            return f"{name} outside [{lo:g}, {hi:g}] degC"
    if rd.flow.min() < 0:
        return "negative flow"
    return None


def validate_and_align(readings: Mapping[str, SubstationReadings],
                       step: int = STEP_SECONDS) -> tuple[list[SubstationSeries], list[Exclusion]]:
    """Keep substations with a complete record over the common window.

    The window spans the earliest to the latest timestamp over all
    substations; any missing sample, missing value or out-of-range value in
    any channel excludes the substation for the whole window.
    """
    if not readings:
        return [], []
    t0 = min(rd.timestamp[0] for rd in readings.values() if len(rd))
    t1 = max(rd.timestamp[-1] for rd in readings.values() if len(rd))
    grid = pd.date_range(t0, t1, freq=pd.Timedelta(seconds=step))

    retained, excluded = [], []
    for sid in sorted(readings):
        rd = readings[sid]
        reason = "no readings" if len(rd) == 0 else _exclusion_reason(rd, grid)
        if reason is not None:
            excluded.append(Exclusion(sid, reason))
            continue
        retained.append(SubstationSeries(
            substation_id=sid, start=grid[0], step=step,
            supply=np.array(rd.supply_temp, dtype=float),
            return_temp=np.array(rd.return_temp, dtype=float),
            flow=np.array(rd.flow, dtype=float),
            outdoor_temp=np.array(rd.outdoor_temp, dtype=float),
        ))
    if not retained:
        raise DataError(f"all {len(excluded)} substations excluded; nothing left to analyse")
    return retained, excluded


def exclusions_to_json(exclusions: Sequence[Exclusion]) -> str:
    return json.dumps([{"substation_id": e.substation_id, "reason": e.reason} for e in exclusions], indent=2)


def day_starts(n_samples: int, start: pd.Timestamp, step: int = STEP_SECONDS,
               tz: str = "UTC") -> tuple[list[dt.date], np.ndarray]:
    """Dates and start indices of the complete local calendar days in a window."""
    per_day = 86400 // step
    if n_samples < per_day:
        return [], np.zeros(0, dtype=int)
    stamps = pd.date_range(start, periods=n_samples, freq=pd.Timedelta(seconds=step)).tz_convert(tz)
    midnight = np.flatnonzero((stamps.hour == 0) & (stamps.minute == 0) & (stamps.second == 0))
    dates, starts = [], []
    for m in midnight:
        last = m + per_day - 1
        if last >= n_samples or stamps[last].date() != stamps[m].date():
            continue
        if last + 1 < n_samples and stamps[last + 1].date() == stamps[m].date():
            continue
        dates.append(stamps[m].date())
        starts.append(m)
    return dates, np.asarray(starts, dtype=int)


def segment_days(series: SubstationSeries, tz: str = "UTC") -> list[DailyProfile]:
    """Split a series into complete local days; partial boundary days are dropped."""
    per_day = 86400 // series.step
    dates, starts = day_starts(len(series), series.start, series.step, tz)
    return [DailyProfile(series.substation_id, d, series.supply[s:s + per_day]) for d, s in zip(dates, starts)]


def sample_days(profiles, r: int, seed: int) -> list:
    """Select ``r`` distinct dates uniformly without replacement.

    ``profiles`` may hold :class:`DailyProfile` objects or bare dates. The
    draw is a partial Fisher-Yates shuffle driven by SplitMix64 (see
    ``shedad._rng``), so the result depends only on the available dates, ``r``
    and ``seed``. Returned dates are sorted.
    """
    dates = {p.date if isinstance(p, DailyProfile) else p for p in profiles}
    if r > len(dates):
        raise DataError(f"cannot sample {r} days from {len(dates)} available")
    if r < 1:
        raise DataError("r must be at least 1")
    return sorted(sample_without_replacement(dates, r, seed))


def _float_text(values) -> list[str]:
    # repr is the shortest string that reads back to the same double
    return ["" if v != v else repr(v) for v in np.asarray(values, dtype=float).tolist()]


def write_csv(series: Sequence[SubstationSeries], path, locations: Mapping[str, tuple[float, float]] | None = None):
    """Write series in the ingest schema, rows grouped by substation."""
    header = ["timestamp", "substation_id", "supply_temp", "return_temp", "flow", "outdoor_temp"]
    if locations is not None:
        header += ["x", "y"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    stamp_cache: dict[tuple, list[str]] = {}  # simulated substations share one clock
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for s in series:
            key = (s.start, s.step, len(s))
            if key not in stamp_cache:
                stamp_cache[key] = list(s.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"))
            stamps = stamp_cache[key]
            outdoor = s.outdoor_temp if s.outdoor_temp is not None else np.full(len(s), np.nan)
            cols = [stamps, [s.substation_id] * len(s), _float_text(s.supply), _float_text(s.return_temp),
                    _float_text(s.flow), _float_text(outdoor)]
            if locations is not None:
                x, y = locations[s.substation_id]
                cols += [_float_text(np.full(len(s), x)), _float_text(np.full(len(s), y))]
            writer.writerows(zip(*cols))
