"""Flat ``key = value`` run configuration shared by every subcommand.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigError


@dataclass
class RunConfig:
    # pipeline
    input: str = ""
    out: str = "out"
    r: int = 7
    seed: int = 0
    band_radius: int = 12
    k_b: int = 10
    theta_min: float = 0.1
    theta_max: float = 0.9
    thresholds_as_quantiles: bool = True
    kappa_min: float = 0.6
    dissimilarity: str = "geodesic"
    n_clusters: int = 30
    singleton_threshold: int = 1
    comparison_k: int = 0  # 0 -> use k_b
    z_threshold: float = -2.0
    flag_threshold: float = 0.0
    timezone: str = "UTC"
    workers: int = 0  # 0 -> all cores
    # simulator
    n_substations: int = 248
    start: str = "2024-01-01T00:00:00Z"
    days: int = 31
    n_supply_faults: int = 16
    n_performance_faults: int = 14
    noise_sigma: float = 0.3
    faults: str = ""  # optional JSON list of fault specs, replaces the generated ones

    def validate(self) -> "RunConfig":
        checks = [
            (self.r >= 1, "r must be >= 1"),
            (self.band_radius >= 0, "band_radius must be >= 0"),
            (self.k_b >= 1, "k_b must be >= 1"),
            (self.theta_min < self.theta_max, "theta_min must be below theta_max"),
            (not self.thresholds_as_quantiles or 0 <= self.theta_min <= self.theta_max <= 1,
             "quantile thresholds must lie in [0, 1]"),
            (-1 <= self.kappa_min <= 1, "kappa_min must lie in [-1, 1]"),
            (self.dissimilarity in ("geodesic", "inverse"), "dissimilarity must be geodesic or inverse"),
            (self.n_clusters >= 1, "n_clusters must be >= 1"),
            (self.singleton_threshold >= 0, "singleton_threshold must be >= 0"),
            (self.comparison_k >= 0, "comparison_k must be >= 0"),
            (0 <= self.flag_threshold <= 1, "flag_threshold must lie in [0, 1]"),
            (self.workers >= 0, "workers must be >= 0"),
            (self.n_substations >= 2, "n_substations must be >= 2"),
            (self.days >= 1, "days must be >= 1"),
            (self.n_supply_faults >= 0 and self.n_performance_faults >= 0, "fault counts must be >= 0"),
            (self.noise_sigma >= 0, "noise_sigma must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def echo(self) -> dict:
        """Settings that shape results; the output location is left out."""
        d = self.to_dict()
        d.pop("out")
        return d

    def digest(self) -> str:
        """Hash of :meth:`echo`, stable across output directories."""
        text = "".join(line for line in self.to_text().splitlines(True) if not line.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls().updated(parse_pairs(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def updated(self, values: dict) -> "RunConfig":
        """Copy with string or typed overrides applied and validated."""
        types = {f.name: f.type for f in fields(self)}
        out = dataclasses.replace(self)
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(out, key, _coerce(key, raw, type(getattr(self, key))))
        return out.validate()


def parse_pairs(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        if typ is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        if not isinstance(raw, typ):
            raise ConfigError(f"{key}: expected {typ.__name__}, got {raw!r}")
        return raw
    try:
        if typ is bool:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
