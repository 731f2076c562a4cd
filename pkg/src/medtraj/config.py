"""Run configuration: one JSON file plus command-line flag overrides (flags win)."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .ingest import CARRY_FORWARD, TRUNCATE, CohortConfig
from .sequences import DEFAULT_CHANNELS

COST_TRATE = "trate"
COST_CONSTANT = "constant"


@dataclass(frozen=True)
class RunConfig:
    out_dir: str = "."
    patients_file: str | None = None  # default: <out_dir>/patients.csv
    events_file: str | None = None  # default: <out_dir>/events.csv
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    observation_days: int = 365
    weeks: int = 52
    coverage_threshold: int = 4
    overlap_policy: str = CARRY_FORWARD
    cost_model: str = COST_TRATE
    cval: float = 2.0
    constant_sub: float = 2.0
    indel: float = 1.0
    k_min: int = 2
    k_max: int = 6
    reference_cluster: int = 1
    seed: int = 42
    n_patients: int = 600
    contamination_rate: float = 0.0
    threads: int | None = None
    exclude_non_incident: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.weeks * 7 > self.observation_days:
            raise ValidationError(
                f"{self.weeks} weeks need {self.weeks * 7} days, "
                f"observation window is {self.observation_days}"
            )
        if not 1 <= self.coverage_threshold <= 7:
            raise ValidationError("coverage threshold must be in 1..7")
        if self.overlap_policy not in (CARRY_FORWARD, TRUNCATE):
            raise ValidationError(f"unknown overlap policy {self.overlap_policy!r}")
        if self.cost_model not in (COST_TRATE, COST_CONSTANT):
            raise ValidationError(f"unknown cost model {self.cost_model!r}")
        if self.indel <= 0 or self.cval <= 0 or self.constant_sub <= 0:
            raise ValidationError("indel, cval and constant_sub must be > 0")
        if not 2 <= self.k_min <= self.k_max:
            raise ValidationError("need 2 <= k_min <= k_max")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError([f"unknown config key {k!r}" for k in unknown])
        return cls(**raw)

    def override(self, **kwargs) -> "RunConfig":
        """New config with the non-None keyword values applied."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **updates)

    def cohort_config(self) -> CohortConfig:
        return CohortConfig(
            channels=self.channels,
            observation_days=self.observation_days,
            weeks=self.weeks,
            coverage_threshold=self.coverage_threshold,
            overlap_policy=self.overlap_policy,
            exclude_non_incident=self.exclude_non_incident,
        )

    def resolve_patients_file(self) -> Path:
        return Path(self.patients_file) if self.patients_file else Path(self.out_dir) / "patients.csv"

    def resolve_events_file(self) -> Path:
        return Path(self.events_file) if self.events_file else Path(self.out_dir) / "events.csv"
