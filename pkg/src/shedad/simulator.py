"""Synthetic district-heating networks with injected, labelled faults.

The network is a tree rooted at the heat source; substation ``S000`` sits at
the plant. Water travelling down a pipe arrives later and cooler, so each
substation sees the plant's supply profile shifted by its cumulative delay
and lowered by its cumulative loss. Default magnitudes below are modelling
assumptions chosen to look like a mid-size winter network, not measured
values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError
from .ingest import STEP_SECONDS, SubstationSeries, write_csv

FAULT_KINDS = ("spike", "flatline", "return_exceeds_supply", "delta_t_zero", "oscillation",
               "daytime_only_demand", "low_delta_t")
SUPPLY_FAULTS = frozenset(FAULT_KINDS[:6])
PERFORMANCE_FAULTS = frozenset({"low_delta_t"})

# kind -> magnitude used by default_faults
DEFAULT_MAGNITUDES = {
    "spike": 150.0,                # peak supply, degC
    "flatline": 62.0,              # stuck supply reading, degC
    "return_exceeds_supply": 2.0,  # extra return offset after a sensor swap, degC
    "delta_t_zero": 12.0,          # supply drop while no heat is drawn, degC
    "oscillation": 8.0,            # amplitude, degC
    "daytime_only_demand": 18.0,   # overnight supply cool-down, degC
    "low_delta_t": 0.4,            # fraction of delta-T lost
}
SPIKE_MINUTES = 180
OSCILLATION_PERIOD_MINUTES = 90
NIGHT_HOURS = (22, 6)


@dataclass(frozen=True)
class Window:
    start: pd.Timestamp = pd.Timestamp("2024-01-01", tz="UTC")
    days: int = 31
    step: int = STEP_SECONDS

    @property
    def n_samples(self) -> int:
        return self.days * 86400 // self.step

    @property
    def end(self) -> pd.Timestamp:
        return self.start + pd.Timedelta(seconds=self.n_samples * self.step)

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.n_samples, freq=pd.Timedelta(seconds=self.step))


@dataclass(frozen=True)
class NetworkSpec:
    """Generator settings.

    ``branch_factor`` bounds the children per node (an int, or a ``(lo, hi)``
    range drawn per node). Pipe lengths are in metres, ``flow_range`` in
    m3/h per substation, ``loss_coefficient`` in degC per km and
    ``delay_coefficient`` in samples per km at ``reference_velocity`` (m/s).
    """

    n_substations: int = 248
    seed: int = 0
    branch_factor: int | tuple = (1, 4)
    pipe_length_range: tuple = (80.0, 450.0)
    flow_range: tuple = (0.8, 6.0)
    loss_coefficient: float = 1.5
    delay_coefficient: float = 3.3
    reference_velocity: float = 1.0
    noise_sigma: float = 0.3
    spike_noise_rate: float = 2e-4
    spike_noise_magnitude: float = 8.0
    delta_t_range: tuple = (26.0, 34.0)
    source_base: float = 82.0
    source_profile: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n_substations < 2:
            raise ConfigError("a network needs at least 2 substations")
        lo, hi = self.branch_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid branch_factor {self.branch_factor}")
        for name in ("pipe_length_range", "flow_range", "delta_t_range"):
            a, b = getattr(self, name)
            if not 0 < a <= b:
                raise ConfigError(f"{name} must be positive and ordered")
        if self.loss_coefficient < 0 or self.delay_coefficient < 0 or self.noise_sigma < 0:
            raise ConfigError("coefficients must be nonnegative")

    @property
    def branch_range(self) -> tuple[int, int]:
        bf = self.branch_factor
        return (int(bf), int(bf)) if np.isscalar(bf) else (int(bf[0]), int(bf[1]))


@dataclass(frozen=True)
class Topology:
    """Tree over substations; ``parent[0] == -1`` marks the plant-side root."""

    ids: tuple
    parent: np.ndarray
    pipe_length: np.ndarray   # metres, pipe from parent; 0 at the root
    pipe_diameter: np.ndarray
    flow: np.ndarray          # m3/h drawn by each substation
    branch: np.ndarray        # index of the main line a node hangs off; -1 at the root
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.ids)

    def edges(self) -> list[tuple[int, int]]:
        return [(int(p), i) for i, p in enumerate(self.parent) if p >= 0]

    def depth(self) -> np.ndarray:
        depth = np.zeros(len(self), dtype=int)
        for i in range(1, len(self)):
            depth[i] = depth[self.parent[i]] + 1
        return depth

    def path_length(self) -> np.ndarray:
        out = np.zeros(len(self))
        for i in range(1, len(self)):
            out[i] = out[self.parent[i]] + self.pipe_length[i]
        return out

    def pipe_flow(self) -> np.ndarray:
        """Volume flow through the pipe feeding each node (its whole subtree)."""
        q = self.flow.astype(float).copy()
        for i in range(len(self) - 1, 0, -1):
            q[self.parent[i]] += q[i]
        return q


@dataclass(frozen=True)
class FaultSpec:
    substation_id: str
    fault_kind: str
    start: pd.Timestamp
    duration: int      # minutes
    magnitude: float

    def to_dict(self) -> dict:
        return {"substation_id": self.substation_id, "fault_kind": self.fault_kind,
                "start": pd.Timestamp(self.start).isoformat(), "duration": int(self.duration),
                "magnitude": float(self.magnitude)}

    @classmethod
    def from_dict(cls, d) -> "FaultSpec":
        start = pd.Timestamp(d["start"])
        start = start.tz_localize("UTC") if start.tzinfo is None else start.tz_convert("UTC")
        return cls(str(d["substation_id"]), str(d["fault_kind"]), start, int(d["duration"]), float(d["magnitude"]))


@dataclass(frozen=True)
class GroundTruth:
    supply_anomaly_ids: frozenset
    performance_anomaly_ids: frozenset
    coordinates: dict
    branches: dict
    faults: tuple = ()

    def to_dict(self) -> dict:
        return {
            "substations": [{"id": s, "x": float(self.coordinates[s][0]), "y": float(self.coordinates[s][1]),
                             "branch": int(self.branches[s])} for s in sorted(self.coordinates)],
            "supply_anomalies": sorted(self.supply_anomaly_ids),
            "performance_anomalies": sorted(self.performance_anomaly_ids),
            "faults": [f.to_dict() for f in self.faults],
        }

    @classmethod
    def from_dict(cls, d) -> "GroundTruth":
        subs = d.get("substations", [])
        return cls(frozenset(d["supply_anomalies"]), frozenset(d["performance_anomalies"]),
                   {s["id"]: (s["x"], s["y"]) for s in subs}, {s["id"]: s["branch"] for s in subs},
                   tuple(FaultSpec.from_dict(f) for f in d.get("faults", [])))

    @classmethod
    def from_json(cls, path) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def substation_ids(n: int) -> tuple:
    width = max(3, len(str(n - 1)))
    return tuple(f"S{i:0{width}d}" for i in range(n))


def generate_network(spec: NetworkSpec) -> Topology:
    """Random tree rooted at the plant with geometry that follows the pipes.

    Each new node hangs off a uniformly chosen node that still has spare
    branch capacity. Coordinates walk outward from the plant along each pipe,
    so tree distance and map distance are correlated.
    """
    rng = np.random.default_rng([spec.seed, 1])
    n = spec.n_substations
    lo, hi = spec.branch_range
    capacity = rng.integers(lo, hi + 1, size=n)
    children = np.zeros(n, dtype=int)
    parent = np.full(n, -1)
    for i in range(1, n):
        open_nodes = np.flatnonzero(children[:i] < capacity[:i])
        if len(open_nodes) == 0:
            # every node is full; extend the most recent one
            open_nodes = np.array([i - 1])
        p = int(rng.choice(open_nodes))
        parent[i] = p
        children[p] += 1

    length = np.zeros(n)
    length[1:] = rng.uniform(*spec.pipe_length_range, size=n - 1)
    flow = rng.uniform(*spec.flow_range, size=n)

    branch = np.full(n, -1)
    for i in range(1, n):
        branch[i] = i if parent[i] == 0 else branch[parent[i]]
    mains = sorted(set(branch[1:]))
    branch = np.array([-1] + [mains.index(b) for b in branch[1:]])

    topo = Topology(substation_ids(n), parent, length, np.zeros(n), flow, branch, np.zeros(n), np.zeros(n))
    q = topo.pipe_flow() / 3600.0  # m3/s
    # nominal sizing targets the reference velocity; real pipes deviate from it
    velocity = spec.reference_velocity * rng.uniform(0.5, 1.6, size=n)
    diameter = np.sqrt(4 * q / (np.pi * velocity))
    diameter[0] = 0.0

    angle = np.zeros(n)
    x = np.zeros(n)
    y = np.zeros(n)
    root_kids = np.flatnonzero(parent == 0)
    for k, c in enumerate(root_kids):
        angle[c] = 2 * np.pi * k / max(len(root_kids), 1)
    for i in range(1, n):
        if parent[i] != 0:
            angle[i] = angle[parent[i]] + rng.normal(0, 0.35)
        x[i] = x[parent[i]] + length[i] * np.cos(angle[i])
        y[i] = y[parent[i]] + length[i] * np.sin(angle[i])
    return Topology(topo.ids, parent, length, diameter, flow, branch, x, y)


def pipe_delay_samples(topology: Topology, spec: NetworkSpec) -> np.ndarray:
    """Cumulative transport delay from the plant to each node, in samples."""
    q = topology.pipe_flow() / 3600.0
    with np.errstate(divide="ignore", invalid="ignore"):
        velocity = np.where(topology.pipe_diameter > 0, q / (np.pi * topology.pipe_diameter ** 2 / 4), 1.0)
    flow_factor = velocity / spec.reference_velocity
    delay = np.zeros(len(topology))
    for i in range(1, len(topology)):
        delay[i] = delay[topology.parent[i]] + spec.delay_coefficient * topology.pipe_length[i] / 1000 / flow_factor[i]
    return np.rint(delay).astype(int)


def outdoor_temperature(window: Window, rng: np.random.Generator) -> np.ndarray:
    """Sinusoidal driver: a slow multi-day swing plus a daily cycle, roughly -9..11 degC."""
    t = np.arange(window.n_samples) * window.step / 86400.0
    phase = rng.uniform(0, 2 * np.pi)
    slow = 1.0 + 7.0 * np.sin(2 * np.pi * t / 9.5 + phase)
    daily = 3.0 * np.sin(2 * np.pi * (t - 0.375))
    return slow + daily


def source_supply(window: Window, spec: NetworkSpec, outdoor: np.ndarray, lead: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Plant supply temperature with ``lead`` extra samples before the window."""
    n = window.n_samples + lead
    if spec.source_profile is not None:
        prof = np.asarray(spec.source_profile, dtype=float)
        if len(prof) < n:
            raise ConfigError(f"source_profile needs {n} samples (window + longest delay), got {len(prof)}")
        return prof[-n:]
    out_full = np.concatenate([np.full(lead, outdoor[0]), outdoor])
    hours = ((np.arange(n) - lead) * window.step / 3600.0) % 24
    morning = np.exp(-0.5 * ((hours - 6.5) / 1.2) ** 2)
    evening = np.exp(-0.5 * ((hours - 18.0) / 1.5) ** 2)
    # operator set-point changes: slow AR(1) drift
    drift = np.zeros(n)
    eps = rng.normal(0, 0.35, size=n)
    for i in range(1, n):
        drift[i] = 0.995 * drift[i - 1] + eps[i]
    return spec.source_base - 1.1 * out_full + 5.0 * morning + 3.0 * evening + drift


def demand_shape(window: Window, outdoor: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    """Per-substation normalized heat demand in [0, 1], shape (n, samples)."""
    hours = np.arange(window.n_samples) * window.step / 3600.0 % 24
    shift = rng.normal(0, 0.75, size=(n, 1))
    h = (hours[None, :] - shift) % 24
    occupancy = 0.55 + 0.3 * np.exp(-0.5 * ((h - 7.5) / 1.5) ** 2) + 0.25 * np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
    cold = (11.0 - outdoor[None, :]) / 20.0
    return np.clip(0.5 * occupancy + 0.5 * cold, 0.0, 1.0)


def default_faults(topology: Topology, window: Window, n_supply: int = 16, n_performance: int = 14,
                   seed: int = 0) -> list[FaultSpec]:
    """Whole-window faults on distinct random substations (the root excluded).

    Supply-fault kinds are cycled in a fixed order so every kind appears.
    """
    if n_supply + n_performance > len(topology) - 1:
        raise ConfigError("more faults requested than substations available")
    rng = np.random.default_rng([seed, 3])
    chosen = rng.choice(np.arange(1, len(topology)), size=n_supply + n_performance, replace=False)
    kinds = sorted(SUPPLY_FAULTS, key=FAULT_KINDS.index)
    minutes = window.n_samples * window.step // 60
    faults = []
    for k, idx in enumerate(chosen):
        kind = kinds[k % len(kinds)] if k < n_supply else "low_delta_t"
        start = window.start
        duration = minutes
        if kind == "spike":
            # first daily excursion starts at a random time of day
            offset = int(rng.integers(0, 24 * 60 // 5 - SPIKE_MINUTES // 5)) * 5
            start = window.start + pd.Timedelta(minutes=offset)
            duration = minutes - offset
        faults.append(FaultSpec(topology.ids[idx], kind, start, duration, DEFAULT_MAGNITUDES[kind]))
    return faults


def _validate_faults(faults: Sequence[FaultSpec], topology: Topology, window: Window):
    ids = set(topology.ids)
    for f in faults:
        if f.fault_kind not in FAULT_KINDS:
            raise ConfigError(f"unknown fault kind {f.fault_kind!r}")
        if f.substation_id not in ids:
            raise ConfigError(f"fault references unknown substation {f.substation_id!r}")
        if f.magnitude <= 0 or f.duration <= 0:
            raise ConfigError(f"fault on {f.substation_id}: magnitude and duration must be positive")
        if f.fault_kind == "low_delta_t" and f.magnitude >= 1:
            raise ConfigError("low_delta_t magnitude is a fraction in (0, 1)")
        end = f.start + pd.Timedelta(minutes=f.duration)
        if f.start < window.start or end > window.end:
            raise ConfigError(f"fault on {f.substation_id} lies outside the simulation window")


def _apply_fault(f: FaultSpec, supply, ret, flow, window: Window, rng: np.random.Generator):
    i0 = int((f.start - window.start) / pd.Timedelta(seconds=window.step))
    i1 = i0 + f.duration * 60 // window.step
    sl = slice(i0, i1)
    t = np.arange(i0, i1)
    if f.fault_kind == "spike":
        # a short excursion to the peak value every day at the same clock time
        per_day = 86400 // window.step
        width = SPIKE_MINUTES * 60 // window.step
        on = ((t - i0) % per_day) < width
        idx = t[on]
        supply[idx] = f.magnitude
    elif f.fault_kind == "flatline":
        supply[sl] = f.magnitude
    elif f.fault_kind == "return_exceeds_supply":
        s, r = supply[sl].copy(), ret[sl].copy()
        supply[sl] = r
        ret[sl] = s + f.magnitude
    elif f.fault_kind == "delta_t_zero":
        supply[sl] = supply[sl] - f.magnitude
        ret[sl] = supply[sl]
        flow[sl] = 0.0
    elif f.fault_kind == "oscillation":
        period = OSCILLATION_PERIOD_MINUTES * 60 / window.step
        wave = f.magnitude * np.sin(2 * np.pi * t / period)
        supply[sl] = supply[sl] + wave
        ret[sl] = ret[sl] + 0.8 * wave
    elif f.fault_kind == "daytime_only_demand":
        hours = (window.start.hour + window.start.minute / 60 + t * window.step / 3600.0) % 24
        start_h, end_h = NIGHT_HOURS
        since = np.where(hours >= start_h, hours - start_h, hours + 24 - start_h)
        night = since < (24 - start_h + end_h)
        cool = f.magnitude * (1 - np.exp(-since / 1.5))
        idx = t[night]
        supply[idx] = supply[idx] - cool[night]
        ret[idx] = supply[idx] - 0.5
        flow[idx] = 0.0
    elif f.fault_kind == "low_delta_t":
        ret[sl] = supply[sl] - (1 - f.magnitude) * (supply[sl] - ret[sl])
    else:  # pragma: no cover - guarded by _validate_faults
        raise ConfigError(f"unknown fault kind {f.fault_kind!r}")


def simulate(topology: Topology, spec: NetworkSpec, faults: Sequence[FaultSpec] = (),
             window: Window = Window()) -> tuple[list[SubstationSeries], GroundTruth]:
    """Supply, return and flow for every substation plus the fault labels.

    Supply is the plant profile delayed and cooled along the pipe path plus
    Gaussian noise and rare single-sample spikes; return is supply minus a
    demand-driven delta-T. Faults then overwrite channels inside their
    interval.
    """
    faults = list(faults)
    _validate_faults(faults, topology, window)
    n = len(topology)
    rng = np.random.default_rng([spec.seed, 2])
    delays = pipe_delay_samples(topology, spec)
    lead = int(delays.max()) + 1
    outdoor = outdoor_temperature(window, rng)
    src = source_supply(window, spec, outdoor, lead, rng)
    loss = spec.loss_coefficient * topology.path_length() / 1000.0
    demand = demand_shape(window, outdoor, rng, n)
    dt_base = rng.uniform(*spec.delta_t_range, size=n)

    m = window.n_samples
    series = []
    noise_rng = np.random.default_rng([spec.seed, 4])
    by_sub: dict = {}
    for f in faults:
        by_sub.setdefault(f.substation_id, []).append(f)
    for i, sid in enumerate(topology.ids):
        supply = src[lead - delays[i]: lead - delays[i] + m] - loss[i]
        supply = supply + noise_rng.normal(0, spec.noise_sigma, size=m)
        spikes = noise_rng.random(m) < spec.spike_noise_rate
        supply[spikes] += spec.spike_noise_magnitude * noise_rng.uniform(0.5, 1.0, size=int(spikes.sum()))
        delta_t = dt_base[i] * (0.8 + 0.4 * demand[i])
        ret = supply - delta_t + noise_rng.normal(0, spec.noise_sigma, size=m)
        flow = topology.flow[i] * (0.3 + 1.4 * demand[i]) * (1 + noise_rng.normal(0, 0.02, size=m))
        flow = np.maximum(flow, 0.0)
        for f in by_sub.get(sid, ()):
            _apply_fault(f, supply, ret, flow, window, rng)
        series.append(SubstationSeries(sid, window.start, supply, ret, flow, outdoor.copy(), window.step))

    truth = GroundTruth(
        supply_anomaly_ids=frozenset(f.substation_id for f in faults if f.fault_kind in SUPPLY_FAULTS),
        performance_anomaly_ids=frozenset(f.substation_id for f in faults if f.fault_kind in PERFORMANCE_FAULTS),
        coordinates={s: (float(topology.x[i]), float(topology.y[i])) for i, s in enumerate(topology.ids)},
        branches={s: int(topology.branch[i]) for i, s in enumerate(topology.ids)},
        faults=tuple(faults),
    )
    if truth.supply_anomaly_ids & truth.performance_anomaly_ids:
        raise ConfigError("a substation cannot carry both a supply and a performance fault")
    return series, truth


def emit_csv(series: Sequence[SubstationSeries], ground_truth: GroundTruth, out_dir) -> tuple[Path, Path]:
    """Write ``data.csv`` (ingest schema, no coordinates) and ``ground_truth.json``."""
    if not series:
        raise DataError("nothing to write: series is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "data.csv"
    truth_path = out / "ground_truth.json"
    write_csv(series, data_path)
    truth_path.write_text(json.dumps(ground_truth.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return data_path, truth_path
