"""Cohort ingestion: CSV parsing, exclusion filters, coverage timelines, weekly channels.

Day numbering is relative to each subject's index date (hospital discharge):
day 1 is the first day after discharge and the observation window is days
1..365.  A purchase dated on the index date starts covering on day 1;
purchases dated before the index date are dropped.  Week w spans days
7(w-1)+1 .. 7w, so 52 weeks cover days 1..364 and day 365 belongs to no week.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Sequence

from .errors import ParseError, ValidationError
from .sequences import BINARY_ALPHABET, DEFAULT_CHANNELS, StateSequence

log = logging.getLogger(__name__)

OBSERVATION_DAYS = 365
WEEKS = 52
COVERED_DAYS_THRESHOLD = 4

CARRY_FORWARD = "carry_forward"
TRUNCATE = "truncate"

MCS_BANDS = ("low", "intermediate", "high")

PATIENT_COLUMNS = (
    "subject_id",
    "index_date",
    "sex",
    "age",
    "mcs_score",
    "n_procedures",
    "days_in_hospital",
    "end_date",
    "end_event",
    "incident_flag",
)
EVENT_COLUMNS = ("subject_id", "drug_class", "purchase_date", "coverage_days")


def mcs_band(score: int) -> str:
    """Band a multisource comorbidity score: 0-4 low, 5-9 intermediate, >=10 high."""
    if score <= 4:
        return "low"
    if score <= 9:
        return "intermediate"
    return "high"


@dataclass(frozen=True)
class PatientRecord:
    subject_id: str
    index_date: date
    sex: str
    age_at_index: int
    mcs_score: int
    n_procedures: int
    days_in_hospital: int
    end_date: date
    end_event: str
    incident: bool = True

    def __post_init__(self):
        problems = []
        if self.sex not in ("M", "F"):
            problems.append(f"sex must be M or F, got {self.sex!r}")
        if self.age_at_index < 0:
            problems.append("age must be >= 0")
        if self.mcs_score < 0:
            problems.append("mcs_score must be >= 0")
        if self.n_procedures < 0:
            problems.append("n_procedures must be >= 0")
        if self.days_in_hospital < 0:
            problems.append("days_in_hospital must be >= 0")
        if self.end_event not in ("death", "censored"):
            problems.append(f"end_event must be death or censored, got {self.end_event!r}")
        if self.end_date < self.index_date:
            problems.append("end_date before index_date")
        if problems:
            raise ValidationError(
                [f"patient {self.subject_id!r}: {p}" for p in problems]
            )

    @property
    def mcs_band(self) -> str:
        return mcs_band(self.mcs_score)

    @property
    def end_day(self) -> int:
        """Days from index date to end of follow-up."""
        return (self.end_date - self.index_date).days


@dataclass(frozen=True)
class PurchaseEvent:
    subject_id: str
    drug_class: str
    purchase_date: date
    coverage_days: int

    def __post_init__(self):
        if self.coverage_days < 1:
            raise ValidationError(
                f"event {self.subject_id!r}: coverage_days must be >= 1"
            )


@dataclass(frozen=True)
class CoverageTimeline:
    """Non-overlapping covered day intervals for one subject and drug class.

    Intervals are inclusive [start_day, end_day] pairs sorted ascending,
    each within 1..observation days; adjacent intervals may touch.
    """

    subject_id: str
    drug_class: str
    intervals: tuple[tuple[int, int], ...]

    def covered_days(self) -> int:
        return sum(end - start + 1 for start, end in self.intervals)


@dataclass(frozen=True)
class CohortConfig:
    """Knobs for filtering and sequence building."""

    channels: tuple[str, ...] = DEFAULT_CHANNELS
    observation_days: int = OBSERVATION_DAYS
    weeks: int = WEEKS
    coverage_threshold: int = COVERED_DAYS_THRESHOLD
    overlap_policy: str = CARRY_FORWARD
    exclude_non_incident: bool = True

    def __post_init__(self):
        if self.weeks * 7 > self.observation_days:
            raise ValidationError(
                f"{self.weeks} weeks need {self.weeks * 7} days, "
                f"observation window is {self.observation_days}"
            )
        if not 1 <= self.coverage_threshold <= 7:
            raise ValidationError("coverage threshold must be in 1..7")
        if self.overlap_policy not in (CARRY_FORWARD, TRUNCATE):
            raise ValidationError(f"unknown overlap policy {self.overlap_policy!r}")


def _parse_date(value: str) -> date:
    return date.fromisoformat(value)


def _parse_int(value: str, minimum: int | None = None) -> int:
    n = int(value)
    if minimum is not None and n < minimum:
        raise ValueError(f"must be >= {minimum}")
    return n


def parse_inputs(
    patients_file, events_file, channels: Sequence[str] = DEFAULT_CHANNELS
) -> tuple[list[PatientRecord], list[PurchaseEvent]]:
    """Parse the patients and events CSVs.

    All rows are checked; on any problem a ParseError is raised carrying one
    line-numbered message per offending row (unknown drug_class, malformed
    date, missing column, events whose subject has no patient record, ...).
    """
    errors: list[str] = []
    patients: list[PatientRecord] = []
    events: list[PurchaseEvent] = []

    with open(patients_file, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PATIENT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(
                [f"{patients_file}: missing column {c!r}" for c in missing]
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                patients.append(
                    PatientRecord(
                        subject_id=row["subject_id"],
                        index_date=_parse_date(row["index_date"]),
                        sex=row["sex"],
                        age_at_index=_parse_int(row["age"], 0),
                        mcs_score=_parse_int(row["mcs_score"], 0),
                        n_procedures=_parse_int(row["n_procedures"], 0),
                        days_in_hospital=_parse_int(row["days_in_hospital"], 0),
                        end_date=_parse_date(row["end_date"]),
                        end_event=row["end_event"],
                        incident=row["incident_flag"] in ("1", "true", "True"),
                    )
                )
            except (ValueError, ValidationError) as exc:
                errors.append(f"{patients_file}: line {lineno}: {exc}")

    known_classes = set(channels)
    with open(events_file, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in EVENT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError([f"{events_file}: missing column {c!r}" for c in missing])
        for lineno, row in enumerate(reader, start=2):
            if row["drug_class"] not in known_classes:
                errors.append(
                    f"{events_file}: line {lineno}: unknown drug_class {row['drug_class']!r}"
                )
                continue
            try:
                events.append(
                    PurchaseEvent(
                        subject_id=row["subject_id"],
                        drug_class=row["drug_class"],
                        purchase_date=_parse_date(row["purchase_date"]),
                        coverage_days=_parse_int(row["coverage_days"], 1),
                    )
                )
            except (ValueError, ValidationError) as exc:
                errors.append(f"{events_file}: line {lineno}: {exc}")

    known_ids = {p.subject_id for p in patients}
    orphans = sorted({e.subject_id for e in events} - known_ids)
    if orphans:
        errors.append(
            f"{events_file}: events reference unknown subject ids: {', '.join(orphans)}"
        )
    if errors:
        raise ParseError(errors)
    return patients, events


def apply_cohort_filters(
    patients: Iterable[PatientRecord],
    events: Iterable[PurchaseEvent],
    config: CohortConfig = CohortConfig(),
) -> tuple[list[PatientRecord], list[tuple[str, str]]]:
    """Apply the cohort exclusion rules; returns (kept patients, exclusion log).

    Exclusions, one reason per subject, in precedence order:
      death_in_observation   died on or before day 365
      censored_no_purchase   censored on or before day 365 with no purchase
                             in the observation window
      non_incident           prior-contact flag set (when enabled)
    """
    window = config.observation_days
    events_by_subject: dict[str, list[PurchaseEvent]] = {}
    for ev in events:
        events_by_subject.setdefault(ev.subject_id, []).append(ev)

    kept: list[PatientRecord] = []
    excluded: list[tuple[str, str]] = []
    for patient in patients:
        reason = None
        in_window = patient.end_day <= window
        if patient.end_event == "death" and in_window:
            reason = "death_in_observation"
        elif patient.end_event == "censored" and in_window:
            has_purchase = any(
                0 <= (ev.purchase_date - patient.index_date).days <= window
                for ev in events_by_subject.get(patient.subject_id, ())
            )
            if not has_purchase:
                reason = "censored_no_purchase"
        if reason is None and config.exclude_non_incident and not patient.incident:
            reason = "non_incident"
        if reason is None:
            kept.append(patient)
        else:
            excluded.append((patient.subject_id, reason))
    return kept, excluded


def resolve_overlaps(
    events: Iterable[PurchaseEvent],
    index_date: date,
    policy: str = CARRY_FORWARD,
    observation_days: int = OBSERVATION_DAYS,
) -> CoverageTimeline:
    """Convert one subject+class's purchases into disjoint covered intervals.

    Events are sorted by purchase date (ties: larger coverage first, then
    input order).  Under ``carry_forward`` a purchase made while supply from
    earlier purchases is still running starts covering the day after all
    existing coverage ends (stockpiling).  Under ``truncate`` each purchase
    keeps only the days of its own nominal span not already covered.
    Intervals are clipped to [1, observation_days]; purchases dated before
    the index date are dropped with a warning.
    """
    events = list(events)
    if not events:
        raise ValidationError("no events given")
    subject = events[0].subject_id
    drug_class = events[0].drug_class
    for ev in events:
        if ev.subject_id != subject or ev.drug_class != drug_class:
            raise ValidationError(
                "resolve_overlaps expects events for a single subject and drug class"
            )

    order = sorted(
        range(len(events)),
        key=lambda i: (events[i].purchase_date, -events[i].coverage_days, i),
    )
    intervals: list[tuple[int, int]] = []
    last_end = 0
    for i in order:
        ev = events[i]
        offset = (ev.purchase_date - index_date).days
        if offset < 0:
            log.warning(
                "subject %s: dropping %s purchase dated %s before index date %s",
                subject, drug_class, ev.purchase_date, index_date,
            )
            continue
        start = max(1, offset)
        span_end = start + ev.coverage_days - 1
        if policy == CARRY_FORWARD:
            start = max(start, last_end + 1)
            end = min(start + ev.coverage_days - 1, observation_days)
            if start <= observation_days and start <= end:
                intervals.append((start, end))
                last_end = max(last_end, end)
        elif policy == TRUNCATE:
            span_end = min(span_end, observation_days)
            for piece in _subtract(start, span_end, intervals):
                intervals.append(piece)
            intervals.sort()
            if intervals:
                last_end = max(last_end, intervals[-1][1])
        else:
            raise ValidationError(f"unknown overlap policy {policy!r}")
    return CoverageTimeline(subject, drug_class, tuple(sorted(intervals)))


def _subtract(start: int, end: int, covered: list[tuple[int, int]]):
    """Yield the sub-intervals of [start, end] not already covered."""
    if start > end:
        return
    pieces = [(start, end)]
    for c_start, c_end in covered:
        next_pieces = []
        for s, e in pieces:
            if c_end < s or c_start > e:
                next_pieces.append((s, e))
                continue
            if s < c_start:
                next_pieces.append((s, c_start - 1))
            if e > c_end:
                next_pieces.append((c_end + 1, e))
        pieces = next_pieces
    yield from pieces


def build_channel_sequence(
    timeline: CoverageTimeline,
    weeks: int = WEEKS,
    threshold: int = COVERED_DAYS_THRESHOLD,
) -> StateSequence:
    """Discretize a coverage timeline into a binary weekly sequence.

    Week w is Drug iff at least ``threshold`` of its 7 days are covered.
    """
    last_day = weeks * 7
    covered = bytearray(last_day + 1)  # 1-based days; index 0 unused
    for start, end in timeline.intervals:
        for day in range(max(1, start), min(end, last_day) + 1):
            covered[day] = 1
    states = []
    for w in range(weeks):
        count = sum(covered[7 * w + 1 : 7 * w + 8])
        states.append(1 if count >= threshold else 0)
    return StateSequence(timeline.subject_id, tuple(states), BINARY_ALPHABET)


def build_timelines(
    patients: Iterable[PatientRecord],
    events: Iterable[PurchaseEvent],
    config: CohortConfig = CohortConfig(),
) -> dict[str, dict[str, CoverageTimeline]]:
    """Resolve overlaps for every (subject, channel); subjects with no
    purchases of a class get an empty timeline."""
    by_key: dict[tuple[str, str], list[PurchaseEvent]] = {}
    for ev in events:
        by_key.setdefault((ev.subject_id, ev.drug_class), []).append(ev)
    out: dict[str, dict[str, CoverageTimeline]] = {}
    for patient in patients:
        per_class = {}
        for channel in config.channels:
            evs = by_key.get((patient.subject_id, channel))
            if evs:
                per_class[channel] = resolve_overlaps(
                    evs, patient.index_date, config.overlap_policy, config.observation_days
                )
            else:
                per_class[channel] = CoverageTimeline(patient.subject_id, channel, ())
        out[patient.subject_id] = per_class
    return out


def write_exclusion_log(path, exclusions: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "reason"])
        for subject_id, reason in exclusions:
            writer.writerow([subject_id, reason])


def write_patients_csv(path, patients: Iterable[PatientRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PATIENT_COLUMNS)
        for p in patients:
            writer.writerow(
                [p.subject_id, p.index_date.isoformat(), p.sex, p.age_at_index,
                 p.mcs_score, p.n_procedures, p.days_in_hospital,
                 p.end_date.isoformat(), p.end_event, int(p.incident)]
            )


def write_events_csv(path, events: Iterable[PurchaseEvent]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for e in events:
            writer.writerow(
                [e.subject_id, e.drug_class, e.purchase_date.isoformat(), e.coverage_days]
            )
