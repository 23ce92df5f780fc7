"""Keyword-count control series: search-trend and news-title indexes.

Four fixed term categories (three general, one behavioral) are summed into
one weekly state-level series per category and channel. News titles count by
presence or absence of a term, not by occurrences. Matching is lowercase,
accent-insensitive, whitespace-normalized substring containment, so that
Portuguese diacritics and multi-word phrases behave uniformly across sources.
"""

from __future__ import annotations

import csv
import sys
import unicodedata
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, SpecificationError
from .ingest import week_index
from .panel import WeeklyPanel

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib


class Channel(str, Enum):
    GT = "gt"
    NEWS = "news"


VARIABLE_PREFIX = {Channel.GT: "gt", Channel.NEWS: "n"}


class Kind(str, Enum):
    GENERAL = "g"
    BEHAVIORAL = "b"


CATEGORY_LABELS = ("covid", "fakenews", "vaccines", "prevention")

DEFAULT_TERMS: dict[str, tuple[str, ...]] = {
    "covid": (
        "covid",
        "pandemia",
        "coronavirus",
        "covid-19",
        "mortes covid",
        "morrer de covid",
        "covid o que fazer",
        "covid como proceder",
        "pegar covid",
        "transmissão covid",
        "covid mata",
        "covid contagioso",
        "covid transmite",
        "contagio covid",
        "sintomas covid",
        "morte de covid",
        "casos covid",
    ),
    "fakenews": (
        "kit-covid",
        "hidroxicloroquina",
        "cloroquina",
        "azitromicina",
        "gripezinha",
        "ivermectina",
        "remedio covid",
        "tratamento covid",
    ),
    "vaccines": (
        "vacinação covid",
        "vacinas covid",
        "pfizer",
        "astrazeneca",
        "janssen",
        "butantan",
        "coronavac",
        "moderna",
        "biontech",
        "oxford",
        "fiocruz",
        "sputnik v",
    ),
    "prevention": (
        "mascara",
        "lavas as mãos",
        "alcool em gel",
        "isolamento",
        "distanciamento",
        "quarentena",
        "lockdown",
        "confinamento",
        "ficar em casa",
        "toque de recolher",
        "toque de restrição",
        "restrições",
        "circulação",
    ),
}


def normalize_term(text: str) -> str:
    """Lowercase, strip accents, collapse runs of whitespace."""
    decomposed = unicodedata.normalize("NFD", text.lower())
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return " ".join(stripped.split())


@dataclass(frozen=True)
class TermCategory:
    index: int
    label: str
    terms: tuple[str, ...]
    kind: Kind

    def __post_init__(self) -> None:
        if not 1 <= self.index <= 4:
            raise ConfigurationError(f"category index {self.index} outside 1..4")
        if self.label not in CATEGORY_LABELS:
            raise ConfigurationError(f"unknown category label {self.label!r}")
        if not self.terms:
            raise ConfigurationError(f"category {self.label!r} has no terms")
        normalized = [normalize_term(t) for t in self.terms]
        if len(set(normalized)) != len(normalized):
            raise ConfigurationError(f"category {self.label!r} has duplicate terms")
        for term in self.terms:
            if term != term.lower():
                raise ConfigurationError(f"term {term!r} is not lowercase")
        expected = Kind.BEHAVIORAL if self.label == "prevention" else Kind.GENERAL
        if self.kind != expected:
            raise ConfigurationError(
                f"category {self.label!r} must be kind {expected.value!r}"
            )


def default_categories() -> tuple[TermCategory, ...]:
    return tuple(
        TermCategory(
            index=i + 1,
            label=label,
            terms=DEFAULT_TERMS[label],
            kind=Kind.BEHAVIORAL if label == "prevention" else Kind.GENERAL,
        )
        for i, label in enumerate(CATEGORY_LABELS)
    )


def load_categories(path) -> tuple[TermCategory, ...]:
    """Read a TOML file with one `[label]` table holding a `terms` list per
    category; omitted categories fall back to the built-in term lists."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - set(CATEGORY_LABELS)
    if unknown:
        raise ConfigurationError(f"unknown categories in {path}: {sorted(unknown)}")
    cats = []
    for i, label in enumerate(CATEGORY_LABELS):
        terms = raw.get(label, {}).get("terms", DEFAULT_TERMS[label])
        if not isinstance(terms, list) and not isinstance(terms, tuple):
            raise ConfigurationError(f"{path}: {label}.terms must be a list")
        cats.append(
            TermCategory(
                index=i + 1,
                label=label,
                terms=tuple(str(t) for t in terms),
                kind=Kind.BEHAVIORAL if label == "prevention" else Kind.GENERAL,
            )
        )
    return tuple(cats)


def term_lookup(categories: Sequence[TermCategory]) -> dict[str, TermCategory]:
    """Normalized term -> category; a term in two categories is a configuration error."""
    lookup: dict[str, TermCategory] = {}
    for cat in categories:
        for term in cat.terms:
            key = normalize_term(term)
            if key in lookup and lookup[key].label != cat.label:
                raise ConfigurationError(
                    f"term {term!r} appears in both {lookup[key].label!r} and {cat.label!r}"
                )
            lookup[key] = cat
    return lookup


@dataclass(frozen=True)
class CountRecord:
    term: str
    state_code: str
    week: int
    count: int
    channel: Channel

    def __post_init__(self) -> None:
        if self.count < 0:
            raise DataError(
                f"count for {self.term!r} in {self.state_code} week {self.week} is negative"
            )


class SoftIndexPanel:
    """State-by-week integer count sums, one variable per (channel, category)."""

    __slots__ = ("states", "n_weeks", "_data", "_pos")

    def __init__(self, states: Sequence[str], n_weeks: int, data: Mapping[str, np.ndarray]):
        states = tuple(states)
        if len(set(states)) != len(states):
            raise DataError("duplicate state codes")
        self.states = states
        self.n_weeks = int(n_weeks)
        grids = {}
        for name, grid in data.items():
            arr = np.asarray(grid, dtype=np.int64)
            if arr.shape != (len(states), n_weeks):
                raise SpecificationError(f"bad grid shape for {name!r}")
            if (arr < 0).any():
                raise DataError(f"negative count cell in {name!r}")
            arr = arr.copy()
            arr.setflags(write=False)
            grids[name] = arr
        self._data = grids
        self._pos = {s: i for i, s in enumerate(states)}

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self._data)

    def grid(self, var: str) -> np.ndarray:
        if var not in self._data:
            raise SpecificationError(f"unknown index variable {var!r}")
        return self._data[var]

    def value(self, state: str, week: int, var: str) -> int:
        if state not in self._pos:
            raise SpecificationError(f"unknown state {state!r}")
        if not 1 <= week <= self.n_weeks:
            raise SpecificationError(f"week {week} outside 1..{self.n_weeks}")
        return int(self.grid(var)[self._pos[state], week - 1])

    def union(self, other: "SoftIndexPanel") -> "SoftIndexPanel":
        if self.states != other.states or self.n_weeks != other.n_weeks:
            raise SpecificationError("cannot union index panels with different shape")
        overlap = set(self._data) & set(other._data)
        if overlap:
            raise SpecificationError(f"index variables defined twice: {sorted(overlap)}")
        merged = dict(self._data)
        merged.update(other._data)
        return SoftIndexPanel(self.states, self.n_weeks, merged)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SoftIndexPanel):
            return NotImplemented
        return (
            self.states == other.states
            and self.n_weeks == other.n_weeks
            and self.variables == other.variables
            and all(np.array_equal(self._data[v], other._data[v]) for v in self.variables)
        )


def build_index(
    records: Sequence[CountRecord],
    categories: Sequence[TermCategory],
    channel: Channel,
    states: Sequence[str] | None = None,
    n_weeks: int | None = None,
) -> tuple[SoftIndexPanel, dict[str, int]]:
    """Sum per-term counts into one series per category.

    Returns the panel plus a rejects report mapping uncategorized terms to
    their total dropped count (never fatal). States or weeks with no records
    hold 0.
    """
    lookup = term_lookup(categories)
    kept = [r for r in records if r.channel == channel]
    if states is None:
        states = tuple(sorted({r.state_code for r in kept}))
    if n_weeks is None:
        n_weeks = max((r.week for r in kept), default=1)
    prefix = VARIABLE_PREFIX[channel]
    names = {c.label: f"{prefix}_{c.label}" for c in categories}
    grids = {names[c.label]: np.zeros((len(states), n_weeks), dtype=np.int64) for c in categories}
    pos = {s: i for i, s in enumerate(states)}
    rejects: dict[str, int] = {}
    for record in kept:
        cat = lookup.get(normalize_term(record.term))
        if cat is None:
            rejects[record.term] = rejects.get(record.term, 0) + record.count
            continue
        if record.state_code not in pos or not 1 <= record.week <= n_weeks:
            continue
        grids[names[cat.label]][pos[record.state_code], record.week - 1] += record.count
    return SoftIndexPanel(states, n_weeks, grids), rejects


def count_news_titles(
    titles: Sequence[tuple[str, int, str]],
    categories: Sequence[TermCategory],
) -> list[CountRecord]:
    """Presence/absence term counts over (state, week, title) triples.

    A title mentioning k distinct category terms contributes 1 to each of the
    k term counts, however often each term repeats inside the title.
    """
    lookup = term_lookup(categories)
    terms = sorted(lookup)
    counts: dict[tuple[str, str, int], int] = {}
    for state, week, title in titles:
        haystack = normalize_term(title)
        for term in terms:
            if term in haystack:
                key = (term, state, week)
                counts[key] = counts.get(key, 0) + 1
    return [
        CountRecord(term=t, state_code=s, week=w, count=c, channel=Channel.NEWS)
        for (t, s, w), c in sorted(counts.items())
    ]


def broadcast_to_municipalities(
    state_panel: SoftIndexPanel,
    state_of: Mapping[str, str],
    panel: WeeklyPanel,
) -> WeeklyPanel:
    """Copy each state-level index series onto that state's municipalities.

    Every panel entity must map to a state present in `state_panel`; existing
    columns of the same name are replaced, so broadcasting twice is a no-op.
    """
    rows = []
    for entity in panel.entities:
        state = state_of.get(entity)
        if state is None:
            raise DataError(f"municipality {entity!r} has no state mapping")
        if state not in state_panel.states:
            raise DataError(f"municipality {entity!r} maps to unknown state {state!r}")
        rows.append(state_panel.states.index(state))
    take = np.asarray(rows)
    weeks = min(panel.n_weeks, state_panel.n_weeks)
    out = panel
    for var in state_panel.variables:
        grid = np.full((len(panel.entities), panel.n_weeks), np.nan)
        grid[:, :weeks] = state_panel.grid(var)[take, :weeks].astype(float)
        out = out.with_variable(var, grid, replace=True)
    return out


def prefix_state_of(entities: Iterable[str], width: int = 2) -> dict[str, str]:
    """Default municipality -> state mapping: the leading code digits.

    Brazilian municipality codes embed the federal unit in their first two
    digits, so this is the no-configuration default; an explicit mapping file
    overrides it.
    """
    return {e: e[:width] for e in entities}


# -- CSV loaders -------------------------------------------------------------

COUNTS_HEADER = ["channel", "term", "state_code", "week_start", "count"]


def load_count_records(path, anchor: date) -> list[CountRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != COUNTS_HEADER:
            raise DataError(f"{path}: expected header {','.join(COUNTS_HEADER)}")
        for row in reader:
            where = f"{path}: term {row['term']!r} week {row['week_start']}"
            try:
                channel = Channel(row["channel"].strip().lower())
            except ValueError as exc:
                raise DataError(f"{where}: bad channel {row['channel']!r}") from exc
            try:
                start = date.fromisoformat(row["week_start"])
            except ValueError as exc:
                raise DataError(f"{where}: bad date") from exc
            try:
                count = int(row["count"])
            except ValueError as exc:
                raise DataError(f"{where}: bad count {row['count']!r}") from exc
            records.append(
                CountRecord(
                    term=row["term"],
                    state_code=row["state_code"],
                    week=week_index(start, anchor),
                    count=count,
                    channel=channel,
                )
            )
    return records


TITLES_HEADER = ["state_code", "week_start", "title"]


def load_titles(path, anchor: date) -> list[tuple[str, int, str]]:
    titles = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != TITLES_HEADER:
            raise DataError(f"{path}: expected header {','.join(TITLES_HEADER)}")
        for row in reader:
            try:
                start = date.fromisoformat(row["week_start"])
            except ValueError as exc:
                raise DataError(f"{path}: bad date {row['week_start']!r}") from exc
            titles.append((row["state_code"], week_index(start, anchor), row["title"]))
    return titles
