"""Record-level ingestion: case/death registries, mobility reports, vaccination.

Raw records are folded into :class:`~epipanel.panel.WeeklyPanel` variables
under explicit aggregation policies. Weeks run Monday through Sunday; a week
index is `floor((date - anchor) / 7) + 1` for a Monday anchor.

Zero-vs-missing convention: case and vaccination counts are 0 in weeks with
no records (the registry is taken as complete), mobility cells stay missing
where coverage is absent.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, SpecificationError
from .panel import WEEK_DAYS, WeeklyPanel

MOBILITY_CATEGORIES = ("residential", "workplace", "parks", "transit", "grocery", "retail")


class Geography(str, Enum):
    RESIDENCE = "residence"
    NOTIFICATION = "notification"


class EventDate(str, Enum):
    FIRST_SYMPTOM = "first_symptom"
    OBIT = "obit"


class DoseKind(str, Enum):
    FIRST = "first"
    SECOND = "second"


class VaccinationSource(str, Enum):
    CAMPAIGN = "campaign"
    SRAG = "srag"


def resolve_anchor(start: date) -> date:
    """First Monday on or after `start`; the panel's week-1 Monday."""
    return start + timedelta(days=-start.weekday() % 7)


def week_index(day: date, anchor: date) -> int:
    """1-based Monday-to-Sunday week index of `day` relative to `anchor`."""
    if anchor.weekday() != 0:
        raise ConfigurationError(f"anchor {anchor} is not a Monday")
    offset = (day - anchor).days
    if offset < 0:
        raise SpecificationError(f"date {day} falls before anchor {anchor}")
    return offset // WEEK_DAYS + 1


def _week_of(day: date, anchor: date) -> int:
    # may be <= 0 for pre-anchor dates; aggregation treats those as out of span
    return (day - anchor).days // WEEK_DAYS + 1


@dataclass(frozen=True)
class CaseRecord:
    record_id: str
    first_symptom_date: date
    obit_date: date | None
    residence_code: str
    notification_code: str
    died: bool
    vaccinated_flag: bool = False

    def __post_init__(self) -> None:
        if self.died != (self.obit_date is not None):
            raise DataError(
                f"record {self.record_id}: died flag inconsistent with obit date"
            )
        if self.obit_date is not None and self.obit_date < self.first_symptom_date:
            raise DataError(
                f"record {self.record_id}: obit date precedes first symptom date"
            )


@dataclass(frozen=True)
class MobilityRecord:
    entity_code: str
    week: int
    residential: float | None = None
    workplace: float | None = None
    parks: float | None = None
    transit: float | None = None
    grocery: float | None = None
    retail: float | None = None

    def __post_init__(self) -> None:
        if self.residential is not None and self.residential < -100:
            raise DataError(
                f"mobility {self.entity_code} week {self.week}: "
                "residential below -100% of baseline"
            )

    def category(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class VaccinationRecord:
    entity_code: str
    date: date
    dose: DoseKind | None
    source: VaccinationSource

    def __post_init__(self) -> None:
        if self.source == VaccinationSource.CAMPAIGN and self.dose is None:
            raise DataError(f"campaign record {self.entity_code} {self.date}: missing dose")
        if self.source == VaccinationSource.SRAG and self.dose is not None:
            raise DataError(f"srag record {self.entity_code} {self.date}: carries a dose")


@dataclass(frozen=True)
class AggregationPolicy:
    """Which geography and which event date put a record into a (j, t) cell."""

    geography: Geography
    event_date: EventDate
    anchor: date

    def __post_init__(self) -> None:
        if self.anchor.weekday() != 0:
            raise ConfigurationError(f"anchor {self.anchor} is not a Monday")

    def select_date(self, record: CaseRecord) -> date | None:
        if self.event_date == EventDate.OBIT:
            return record.obit_date
        return record.first_symptom_date

    def select_entity(self, record: CaseRecord) -> str:
        if self.geography == Geography.RESIDENCE:
            return record.residence_code
        return record.notification_code


def _panel_for(
    entities: Sequence[str] | None,
    fallback: Iterable[str],
    anchor: date,
    span: tuple[int, int],
) -> WeeklyPanel:
    start, end = span
    if start != 1:
        raise SpecificationError("panel weeks are indexed from 1")
    if end < start:
        raise SpecificationError(f"empty week span {span}")
    ents = tuple(entities) if entities is not None else tuple(sorted(set(fallback)))
    if not ents:
        raise DataError("no entities to aggregate")
    return WeeklyPanel(ents, anchor, end)


def aggregate_cases(
    records: Sequence[CaseRecord],
    policy: AggregationPolicy,
    span: tuple[int, int],
    entities: Sequence[str] | None = None,
    name: str | None = None,
) -> WeeklyPanel:
    """Count records per (entity, week) under `policy`.

    Cells with no records are 0, not missing. With event_date = obit only
    death records are counted. Records outside the span are skipped.
    """
    if name is None:
        name = "deaths" if policy.event_date == EventDate.OBIT else "cases"
    panel = _panel_for(entities, (policy.select_entity(r) for r in records), policy.anchor, span)
    grid = np.zeros((len(panel.entities), panel.n_weeks))
    pos = {e: i for i, e in enumerate(panel.entities)}
    for record in records:
        day = policy.select_date(record)
        if day is None:
            continue
        week = _week_of(day, policy.anchor)
        if not span[0] <= week <= span[1]:
            continue
        entity = policy.select_entity(record)
        if entity in pos:
            grid[pos[entity], week - 1] += 1
    return panel.with_variable(name, grid)


def aggregate_mobility(
    records: Sequence[MobilityRecord],
    anchor: date,
    span: tuple[int, int],
    entities: Sequence[str] | None = None,
) -> WeeklyPanel:
    """One variable per mobility category; absent category values stay missing."""
    panel = _panel_for(entities, (r.entity_code for r in records), anchor, span)
    pos = {e: i for i, e in enumerate(panel.entities)}
    seen: set[tuple[str, int]] = set()
    grids = {c: np.full((len(panel.entities), panel.n_weeks), np.nan) for c in MOBILITY_CATEGORIES}
    for record in records:
        key = (record.entity_code, record.week)
        if key in seen:
            raise DataError(f"duplicate mobility record for entity {key[0]} week {key[1]}")
        seen.add(key)
        if not span[0] <= record.week <= span[1] or record.entity_code not in pos:
            continue
        for cat in MOBILITY_CATEGORIES:
            v = record.category(cat)
            if v is not None:
                grids[cat][pos[record.entity_code], record.week - 1] = v
    out = panel
    for cat in MOBILITY_CATEGORIES:
        out = out.with_variable(cat, grids[cat])
    return out


CAMPAIGN_VARIABLES = {DoseKind.FIRST: "1st_dose", DoseKind.SECOND: "2nd_dose"}
SRAG_VARIABLE = "srag_vac"


def aggregate_vaccination(
    records: Sequence[VaccinationRecord],
    source: VaccinationSource,
    anchor: date,
    span: tuple[int, int],
    entities: Sequence[str] | None = None,
) -> WeeklyPanel:
    """Weekly dose counts per entity, stored as ln(1 + count).

    Campaign records split into `1st_dose` / `2nd_dose`; srag records feed the
    single `srag_vac` variable. Weeks with no doses hold ln(1) = 0.
    """
    kept = [r for r in records if r.source == source]
    panel = _panel_for(entities, (r.entity_code for r in kept), anchor, span)
    pos = {e: i for i, e in enumerate(panel.entities)}
    if source == VaccinationSource.CAMPAIGN:
        variables = {
            CAMPAIGN_VARIABLES[DoseKind.FIRST]: DoseKind.FIRST,
            CAMPAIGN_VARIABLES[DoseKind.SECOND]: DoseKind.SECOND,
        }
    else:
        variables = {SRAG_VARIABLE: None}
    counts = {name: np.zeros((len(panel.entities), panel.n_weeks)) for name in variables}
    for record in kept:
        week = _week_of(record.date, anchor)
        if not span[0] <= week <= span[1] or record.entity_code not in pos:
            continue
        for name, dose in variables.items():
            if dose is None or record.dose == dose:
                counts[name][pos[record.entity_code], week - 1] += 1
    out = panel
    for name in variables:
        out = out.with_variable(name, np.log1p(counts[name]))
    return out


@dataclass(frozen=True)
class WeekDurations:
    count: int
    median: float
    min: int
    max: int


@dataclass(frozen=True)
class DurationStats:
    """Days from first symptom to obit, grouped by obit week."""

    by_week: dict[int, WeekDurations]
    overall_median: float
    n_records: int


def symptom_to_obit_stats(records: Sequence[CaseRecord], anchor: date) -> DurationStats:
    """Median/min/max symptom-to-obit duration per obit week.

    Only death records qualify; even-count medians are the mean of the two
    central values.
    """
    if anchor.weekday() != 0:
        raise ConfigurationError(f"anchor {anchor} is not a Monday")
    per_week: dict[int, list[int]] = {}
    pooled: list[int] = []
    for record in records:
        if not record.died or record.obit_date is None:
            continue
        days = (record.obit_date - record.first_symptom_date).days
        week = _week_of(record.obit_date, anchor)
        per_week.setdefault(week, []).append(days)
        pooled.append(days)
    if not pooled:
        raise DataError("no death records with both dates")
    by_week = {
        week: WeekDurations(
            len(ds), float(statistics.median(ds)), min(ds), max(ds)
        )
        for week, ds in sorted(per_week.items())
    }
    return DurationStats(by_week, float(statistics.median(pooled)), len(pooled))


# -- CSV loaders -------------------------------------------------------------


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"{where}: bad date {text!r}") from exc


def _parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no", ""):
        return False
    raise DataError(f"{where}: bad boolean {text!r}")


def _parse_float(text: str, where: str) -> float | None:
    if text.strip() == "":
        return None
    try:
        v = float(text)
    except ValueError as exc:
        raise DataError(f"{where}: bad number {text!r}") from exc
    if math.isnan(v) or math.isinf(v):
        raise DataError(f"{where}: non-finite number {text!r}")
    return v


def _reader(path, expected: list[str]):
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        fh.close()
        raise DataError(f"{path}: expected header {','.join(expected)}")
    return fh, reader


CASES_HEADER = [
    "record_id",
    "first_symptom_date",
    "obit_date",
    "residence_code",
    "notification_code",
    "died",
]


def load_case_records(path) -> list[CaseRecord]:
    fh, reader = _reader(path, CASES_HEADER)
    records = []
    with fh:
        for row in reader:
            rid = row["record_id"]
            where = f"{path}: record {rid}"
            obit = row["obit_date"].strip()
            records.append(
                CaseRecord(
                    record_id=rid,
                    first_symptom_date=_parse_date(row["first_symptom_date"], where),
                    obit_date=_parse_date(obit, where) if obit else None,
                    residence_code=row["residence_code"],
                    notification_code=row["notification_code"],
                    died=_parse_bool(row["died"], where),
                )
            )
    return records


MOBILITY_HEADER = ["entity_code", "week_start"] + list(MOBILITY_CATEGORIES)


def load_mobility_records(path, anchor: date) -> list[MobilityRecord]:
    fh, reader = _reader(path, MOBILITY_HEADER)
    records = []
    with fh:
        for row in reader:
            where = f"{path}: entity {row['entity_code']} week {row['week_start']}"
            week = week_index(_parse_date(row["week_start"], where), anchor)
            records.append(
                MobilityRecord(
                    entity_code=row["entity_code"],
                    week=week,
                    **{c: _parse_float(row[c], where) for c in MOBILITY_CATEGORIES},
                )
            )
    return records


VACCINATION_HEADER = ["entity_code", "date", "dose", "source"]


def load_vaccination_records(path) -> list[VaccinationRecord]:
    fh, reader = _reader(path, VACCINATION_HEADER)
    records = []
    with fh:
        for row in reader:
            where = f"{path}: entity {row['entity_code']} date {row['date']}"
            dose_s = row["dose"].strip().lower()
            try:
                source = VaccinationSource(row["source"].strip().lower())
            except ValueError as exc:
                raise DataError(f"{where}: bad source {row['source']!r}") from exc
            try:
                dose = DoseKind(dose_s) if dose_s else None
            except ValueError as exc:
                raise DataError(f"{where}: bad dose {row['dose']!r}") from exc
            records.append(
                VaccinationRecord(
                    entity_code=row["entity_code"],
                    date=_parse_date(row["date"], where),
                    dose=dose,
                    source=source,
                )
            )
    return records
