"""Seeded synthetic cohorts with planted behavioral archetypes.

Each patient draws an archetype, simulates 52 weekly combined states from its
Markov chain, and the three binary channels decoded from those states are
turned into purchase events (one purchase per maximal run of Drug weeks, at
the run's first day, covering 7 days per week).  Rebuilding sequences from
the generated files therefore reproduces the simulated states exactly.

Randomness comes from the Philox 4x64 counter-based generator, one stream per
patient keyed by (seed, patient index), with a fixed draw order per patient;
generation is reproducible bit for bit and independent of scheduling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .ingest import PatientRecord, PurchaseEvent, write_events_csv, write_patients_csv
from .sequences import DEFAULT_CHANNELS

INDEX_BASE_DATE = date(2006, 1, 1)
MCS_SCORE_RANGES = {"low": (0, 4), "intermediate": (5, 9), "high": (10, 15)}


@dataclass(frozen=True)
class ArchetypeSpec:
    """A behavioral pattern: initial distribution and weekly transition matrix
    over the combined states, plus a hazard multiplier for survival times."""

    name: str
    initial: np.ndarray
    transition: np.ndarray
    hazard_multiplier: float

    def __post_init__(self):
        initial = np.ascontiguousarray(self.initial, dtype=np.float64)
        transition = np.ascontiguousarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        n = initial.shape[0]
        if transition.shape != (n, n):
            raise ValidationError(f"archetype {self.name}: transition shape mismatch")
        if (initial < 0).any() or abs(initial.sum() - 1.0) > 1e-9:
            raise ValidationError(f"archetype {self.name}: initial distribution not stochastic")
        if (transition < 0).any() or np.abs(transition.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValidationError(f"archetype {self.name}: transition rows not stochastic")
        if not (np.isfinite(self.hazard_multiplier) and self.hazard_multiplier > 0):
            raise ValidationError(f"archetype {self.name}: hazard multiplier must be positive")


def pull_home_archetype(
    name: str,
    home_state: int,
    n_states: int = 8,
    hazard_multiplier: float = 1.0,
    stay_home: float = 0.95,
    return_home: float = 0.55,
    stay_away: float = 0.4,
    initial_home: float = 0.85,
) -> ArchetypeSpec:
    """Archetype that gravitates toward one home state.

    From home: stay with probability ``stay_home``, else spread uniformly.
    From elsewhere: return home / stay put / drift uniformly.
    """
    init = np.full(n_states, (1.0 - initial_home) / (n_states - 1))
    init[home_state] = initial_home
    trans = np.zeros((n_states, n_states))
    for s in range(n_states):
        if s == home_state:
            trans[s] = (1.0 - stay_home) / (n_states - 1)
            trans[s, s] = stay_home
        else:
            drift = (1.0 - return_home - stay_away) / (n_states - 2)
            trans[s] = drift
            trans[s, home_state] = return_home
            trans[s, s] = stay_away
    return ArchetypeSpec(name, init, trans, hazard_multiplier)


def default_archetypes() -> tuple[ArchetypeSpec, ...]:
    """Three well-separated behaviors over the 8-state combined alphabet:
    no therapy (state None), RAS monotherapy, and the RAS+BB combination."""
    return (
        pull_home_archetype("untreated", home_state=0, hazard_multiplier=1.0),
        pull_home_archetype("ras_mono", home_state=1, hazard_multiplier=0.7),
        pull_home_archetype("ras_bb", home_state=3, hazard_multiplier=0.5),
    )


@dataclass(frozen=True)
class GeneratorConfig:
    n_patients: int = 600
    seed: int = 42
    archetypes: tuple[ArchetypeSpec, ...] = field(default_factory=default_archetypes)
    weights: tuple[float, ...] | None = None
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    weeks: int = 52
    baseline_hazard_per_year: float = 0.22
    censor_horizon_years: float = 6.0
    age_mean: float = 74.0
    age_sd: float = 11.0
    female_ratio: float = 0.5
    mcs_band_weights: tuple[float, float, float] = (0.45, 0.45, 0.10)
    procedure_band_weights: tuple[float, float, float] = (0.85, 0.12, 0.03)
    contamination_rate: float = 0.0

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValidationError("n_patients must be >= 1")
        weights = self.weights
        if weights is None:
            weights = tuple(1.0 / len(self.archetypes) for _ in self.archetypes)
        weights = tuple(float(w) for w in weights)
        object.__setattr__(self, "weights", weights)
        if len(weights) != len(self.archetypes):
            raise ValidationError("one weight per archetype required")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValidationError("archetype weights must be nonnegative and sum to 1")
        n_states = 2 ** len(self.channels)
        for a in self.archetypes:
            if a.initial.shape[0] != n_states:
                raise ValidationError(
                    f"archetype {a.name} covers {a.initial.shape[0]} states, "
                    f"{len(self.channels)} channels need {n_states}"
                )
        if not 0.0 <= self.contamination_rate <= 1.0:
            raise ValidationError("contamination_rate must be in [0, 1]")


@dataclass(frozen=True)
class SyntheticCohort:
    patients: tuple[PatientRecord, ...]
    events: tuple[PurchaseEvent, ...]
    truth: tuple[tuple[str, str], ...]  # (subject_id, archetype name)
    combined_states: dict[str, tuple[int, ...]]


def _patient_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _runs(bits: Sequence[int]):
    """Yield (start_week, length) for maximal runs of 1s; weeks are 1-based."""
    start = None
    for w, b in enumerate(bits, start=1):
        if b and start is None:
            start = w
        elif not b and start is not None:
            yield start, w - start
            start = None
    if start is not None:
        yield start, len(bits) - start + 1


def generate_cohort(config: GeneratorConfig) -> SyntheticCohort:
    """Simulate the cohort in memory; see :func:`generate` for the file form."""
    n_states = 2 ** len(config.channels)
    patients: list[PatientRecord] = []
    events: list[PurchaseEvent] = []
    truth: list[tuple[str, str]] = []
    combined: dict[str, tuple[int, ...]] = {}
    weights = np.array(config.weights)

    for i in range(config.n_patients):
        rng = _patient_rng(config.seed, i)
        subject_id = f"S{i + 1:06d}"
        archetype = config.archetypes[int(rng.choice(len(weights), p=weights))]

        states = []
        state = int(rng.choice(n_states, p=archetype.initial))
        states.append(state)
        for _ in range(config.weeks - 1):
            state = int(rng.choice(n_states, p=archetype.transition[state]))
            states.append(state)

        index_date = INDEX_BASE_DATE + timedelta(days=int(rng.integers(0, 365)))
        age = int(np.clip(round(rng.normal(config.age_mean, config.age_sd)), 40, 100))
        sex = "F" if rng.random() < config.female_ratio else "M"
        band = ("low", "intermediate", "high")[
            int(rng.choice(3, p=np.array(config.mcs_band_weights)))
        ]
        lo, hi = MCS_SCORE_RANGES[band]
        mcs_score = int(rng.integers(lo, hi + 1))
        proc_band = int(rng.choice(3, p=np.array(config.procedure_band_weights)))
        n_procedures = proc_band if proc_band < 2 else 2 + int(rng.integers(0, 3))
        days_in_hospital = int(np.clip(round(rng.lognormal(2.3, 0.7)), 1, 120))

        rate = config.baseline_hazard_per_year * archetype.hazard_multiplier
        t_years = float(rng.exponential(1.0 / rate))
        contaminated = rng.random() < config.contamination_rate
        if contaminated:
            end_day = int(rng.integers(1, 366))
            end_event = "death"
        elif t_years < config.censor_horizon_years:
            end_day = 365 + max(1, math.ceil(t_years * 365.0))
            end_event = "death"
        else:
            end_day = 365 + math.ceil(config.censor_horizon_years * 365.0)
            end_event = "censored"

        patients.append(
            PatientRecord(
                subject_id=subject_id,
                index_date=index_date,
                sex=sex,
                age_at_index=age,
                mcs_score=mcs_score,
                n_procedures=n_procedures,
                days_in_hospital=days_in_hospital,
                end_date=index_date + timedelta(days=end_day),
                end_event=end_event,
                incident=True,
            )
        )
        truth.append((subject_id, archetype.name))
        combined[subject_id] = tuple(states)

        for bit, channel in enumerate(config.channels):
            bits = [s >> bit & 1 for s in states]
            for start_week, length in _runs(bits):
                start_day = 7 * (start_week - 1) + 1
                events.append(
                    PurchaseEvent(
                        subject_id=subject_id,
                        drug_class=channel,
                        purchase_date=index_date + timedelta(days=start_day),
                        coverage_days=7 * length,
                    )
                )
    return SyntheticCohort(tuple(patients), tuple(events), tuple(truth), combined)


def write_cohort(cohort: SyntheticCohort, out_dir) -> tuple[Path, Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    patients_path = out / "patients.csv"
    events_path = out / "events.csv"
    truth_path = out / "truth.csv"

    write_patients_csv(patients_path, cohort.patients)
    write_events_csv(events_path, cohort.events)
    with open(truth_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "archetype"])
        for subject_id, name in cohort.truth:
            writer.writerow([subject_id, name])
    return patients_path, events_path, truth_path


def generate(config: GeneratorConfig, out_dir) -> tuple[Path, Path, Path]:
    """Generate and write patients.csv, events.csv and truth.csv."""
    return write_cohort(generate_cohort(config), out_dir)


def adjusted_rand_index(labels_a: Sequence, labels_b: Sequence) -> float:
    """Chance-corrected agreement between two labelings of the same items."""
    a = list(labels_a)
    b = list(labels_b)
    if len(a) != len(b):
        raise ValidationError(f"labelings differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise ValidationError("labelings are empty")

    contingency: dict[tuple, int] = {}
    counts_a: dict = {}
    counts_b: dict = {}
    for la, lb in zip(a, b):
        contingency[(la, lb)] = contingency.get((la, lb), 0) + 1
        counts_a[la] = counts_a.get(la, 0) + 1
        counts_b[lb] = counts_b.get(lb, 0) + 1

    def comb2(x: int) -> float:
        return x * (x - 1) / 2.0

    index = sum(comb2(c) for c in contingency.values())
    sum_a = sum(comb2(c) for c in counts_a.values())
    sum_b = sum(comb2(c) for c in counts_b.values())
    total = comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        # both labelings degenerate (e.g. each a single cluster): identical by construction
        return 1.0
    return float((index - expected) / (maximum - expected))


def read_truth_csv(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        return {row["subject_id"]: row["archetype"] for row in csv.DictReader(fh)}
