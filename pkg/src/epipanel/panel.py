"""Weekly entity-by-week panel container and the variable transforms built on it.

A :class:`WeeklyPanel` is an immutable (entity, week, variable) -> value store.
Weeks are indexed 1..T and anchored to a Monday calendar date; a cell is either
a finite float or missing. Internally each variable is a write-protected
(n_entities, n_weeks) float array with NaN standing for missing; the public
API never returns NaN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, EstimationError, SpecificationError

WEEK_DAYS = 7

CSV_HEADER = ["entity", "week_start", "variable", "value"]


class Role(str, Enum):
    DEPENDENT = "dependent"
    MOBILITY = "mobility"
    VACCINATION = "vaccination"
    GT_SERIES = "gt_series"
    N_INDEX = "n_index"
    DERIVED = "derived"


class Level(str, Enum):
    MUNICIPALITY = "municipality"
    STATE = "state"


@dataclass(frozen=True)
class VariableRole:
    """Bookkeeping for a panel variable: what it measures and at which level."""

    name: str
    role: Role
    level: Level = Level.MUNICIPALITY

    def __post_init__(self) -> None:
        if self.role in (Role.GT_SERIES, Role.N_INDEX) and self.level != Level.STATE:
            raise SpecificationError(
                f"variable {self.name!r}: {self.role.value} series live at state level"
            )


def _as_grid(values, n_entities: int, n_weeks: int) -> np.ndarray:
    grid = np.asarray(values, dtype=float)
    if grid.shape != (n_entities, n_weeks):
        raise SpecificationError(
            f"variable grid has shape {grid.shape}, expected {(n_entities, n_weeks)}"
        )
    if grid is values and not grid.flags.writeable:
        return grid  # already owned by another panel; safe to share
    if np.isinf(grid).any():
        raise DataError("panel cells must be finite or missing, got infinity")
    grid = grid.copy()
    grid.setflags(write=False)
    return grid


class WeeklyPanel:
    """Immutable weekly panel: ordered entities, weeks 1..T, named variables.

    All transforms return a new panel sharing the untouched variable arrays,
    so panels are safe to share across parallel estimation tasks.
    """

    __slots__ = ("entities", "anchor", "n_weeks", "_data", "_entity_pos", "latent")

    def __init__(
        self,
        entities: Sequence[str],
        anchor: date,
        n_weeks: int,
        data: Mapping[str, np.ndarray] | None = None,
        latent: Iterable[str] = (),
    ) -> None:
        entities = tuple(str(e) for e in entities)
        if len(set(entities)) != len(entities):
            raise DataError("entity identifiers must be unique")
        if anchor.weekday() != 0:
            raise SpecificationError(f"panel anchor {anchor} is not a Monday")
        if n_weeks < 1:
            raise SpecificationError("panel needs at least one week")
        object.__setattr__(self, "entities", entities)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "n_weeks", int(n_weeks))
        grids = {}
        for name, values in (data or {}).items():
            grids[str(name)] = _as_grid(values, len(entities), n_weeks)
        object.__setattr__(self, "_data", grids)
        object.__setattr__(
            self, "_entity_pos", {e: i for i, e in enumerate(entities)}
        )
        object.__setattr__(self, "latent", frozenset(latent))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("WeeklyPanel is immutable")

    # -- shape ------------------------------------------------------------

    @property
    def weeks(self) -> range:
        return range(1, self.n_weeks + 1)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self._data)

    def week_start(self, t: int) -> date:
        self._check_week(t)
        return self.anchor + timedelta(days=WEEK_DAYS * (t - 1))

    def _check_week(self, t: int) -> None:
        if not 1 <= t <= self.n_weeks:
            raise SpecificationError(f"week {t} outside 1..{self.n_weeks}")

    def _check_var(self, var: str) -> None:
        if var not in self._data:
            raise SpecificationError(f"unknown variable {var!r}")

    # -- cell access -------------------------------------------------------

    def grid(self, var: str) -> np.ndarray:
        """Write-protected (n_entities, n_weeks) array with NaN = missing."""
        self._check_var(var)
        return self._data[var]

    def value(self, entity: str, week: int, var: str) -> float | None:
        self._check_var(var)
        self._check_week(week)
        if entity not in self._entity_pos:
            raise SpecificationError(f"unknown entity {entity!r}")
        v = self._data[var][self._entity_pos[entity], week - 1]
        return None if math.isnan(v) else float(v)

    def series(self, entity: str, var: str) -> list[float | None]:
        self._check_var(var)
        row = self._data[var][self._entity_pos[entity]]
        return [None if math.isnan(v) else float(v) for v in row]

    # -- construction ------------------------------------------------------

    def with_variable(
        self,
        name: str,
        values,
        replace: bool = False,
        latent: bool = False,
    ) -> "WeeklyPanel":
        name = str(name)
        if name in self._data and not replace:
            raise SpecificationError(f"variable {name!r} already present")
        data = dict(self._data)
        data[name] = values
        marks = set(self.latent)
        if latent:
            marks.add(name)
        return WeeklyPanel(self.entities, self.anchor, self.n_weeks, data, marks)

    def with_cells(
        self, name: str, cells: Mapping[tuple[str, int], float], **kw
    ) -> "WeeklyPanel":
        grid = np.full((len(self.entities), self.n_weeks), np.nan)
        for (entity, week), value in cells.items():
            if entity not in self._entity_pos:
                raise SpecificationError(f"unknown entity {entity!r}")
            self._check_week(week)
            grid[self._entity_pos[entity], week - 1] = value
        return self.with_variable(name, grid, **kw)

    def drop_variables(self, names: Iterable[str]) -> "WeeklyPanel":
        drop = set(names)
        data = {k: v for k, v in self._data.items() if k not in drop}
        return WeeklyPanel(
            self.entities, self.anchor, self.n_weeks, data, self.latent - drop
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeeklyPanel):
            return NotImplemented
        if (self.entities, self.anchor, self.n_weeks) != (
            other.entities,
            other.anchor,
            other.n_weeks,
        ):
            return False
        if self.variables != other.variables:
            return False
        for var in self.variables:
            a, b = self._data[var], other._data[var]
            if not np.array_equal(a, b, equal_nan=True):
                return False
        return True

    # -- serialization -----------------------------------------------------

    def write_csv(self, path) -> None:
        """Long format `entity,week_start,variable,value`; empty value = missing.

        Every (entity, week, variable) cell is written so the panel shape
        survives a round trip; floats use shortest round-trip repr.
        """
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            starts = [self.week_start(t).isoformat() for t in self.weeks]
            for var in self.variables:
                grid = self._data[var]
                for i, entity in enumerate(self.entities):
                    for t in self.weeks:
                        v = grid[i, t - 1]
                        writer.writerow(
                            [entity, starts[t - 1], var, "" if math.isnan(v) else repr(float(v))]
                        )

    @classmethod
    def read_csv(cls, path) -> "WeeklyPanel":
        entities: list[str] = []
        variables: list[str] = []
        seen_e: set[str] = set()
        seen_v: set[str] = set()
        rows: list[tuple[str, date, str, float]] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise DataError(f"bad panel header {header!r}, expected {CSV_HEADER}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise DataError(f"line {lineno}: expected 4 fields, got {len(row)}")
                entity, start_s, var, value_s = row
                try:
                    start = date.fromisoformat(start_s)
                except ValueError as exc:
                    raise DataError(f"line {lineno}: bad week_start {start_s!r}") from exc
                if entity not in seen_e:
                    seen_e.add(entity)
                    entities.append(entity)
                if var not in seen_v:
                    seen_v.add(var)
                    variables.append(var)
                value = math.nan
                if value_s != "":
                    try:
                        value = float(value_s)
                    except ValueError as exc:
                        raise DataError(f"line {lineno}: bad value {value_s!r}") from exc
                rows.append((entity, start, var, value))
        if not rows:
            raise DataError("empty panel file")
        anchor = min(r[1] for r in rows)
        last = max(r[1] for r in rows)
        if anchor.weekday() != 0:
            raise DataError(f"panel anchor {anchor} is not a Monday")
        span = (last - anchor).days
        if span % WEEK_DAYS != 0:
            raise DataError("week_start dates are not 7 days apart")
        n_weeks = span // WEEK_DAYS + 1
        panel = cls(entities, anchor, n_weeks)
        epos = panel._entity_pos
        grids = {v: np.full((len(entities), n_weeks), np.nan) for v in variables}
        for entity, start, var, value in rows:
            offset = (start - anchor).days
            if offset % WEEK_DAYS != 0:
                raise DataError(f"week_start {start} does not fall on the weekly grid")
            grids[var][epos[entity], offset // WEEK_DAYS] = value
        return cls(entities, anchor, n_weeks, grids)


# -- transforms -------------------------------------------------------------


def log_growth(panel: WeeklyPanel, var: str, out: str | None = None) -> WeeklyPanel:
    """Add ln(Y_t / Y_{t-1}); defined only where both weeks have positive counts.

    Zero counts on either side make the growth rate undefined, so those cells
    stay missing rather than entering a design matrix as ln(0).
    """
    src = panel.grid(var)
    if np.nanmin(src, initial=0.0) < 0:
        raise SpecificationError(f"variable {var!r} holds negative values")
    out = out or f"dlog_{var}"
    with np.errstate(invalid="ignore", divide="ignore"):
        cur = np.where(src > 0, src, np.nan)
        prev = np.empty_like(cur)
        prev[:, 0] = np.nan
        prev[:, 1:] = cur[:, :-1]
        grid = np.log(cur / prev)
    return panel.with_variable(out, grid)


def lag(panel: WeeklyPanel, var: str, k: int, out: str | None = None) -> WeeklyPanel:
    """Add the k-week lag of `var`. k = 0 is rejected so a contemporaneous
    regressor can never slip in as a "lag"."""
    if k < 1:
        raise SpecificationError(f"lag must be >= 1, got {k}")
    src = panel.grid(var)
    out = out or f"{var}_l{k}"
    grid = np.full_like(src, np.nan)
    if k < panel.n_weeks:
        grid[:, k:] = src[:, :-k]
    return panel.with_variable(out, grid)


def within_transform(
    x: np.ndarray, entities: Sequence
) -> tuple[np.ndarray, dict[object, np.ndarray]]:
    """Demean stacked observations entity by entity.

    `x` is (n,) or (n, k) with one row per observation and no missing values;
    returns the demeaned array plus each entity's mean row (for intercept
    recovery).
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EstimationError("within transform on empty input")
    if np.isnan(x).any():
        raise SpecificationError("within transform requires complete rows")
    flat = x.ndim == 1
    mat = x[:, None] if flat else x
    labels = list(entities)
    if len(labels) != mat.shape[0]:
        raise SpecificationError("entity labels do not match row count")
    demeaned = np.empty_like(mat)
    means: dict[object, np.ndarray] = {}
    order: dict[object, list[int]] = {}
    for i, lab in enumerate(labels):
        order.setdefault(lab, []).append(i)
    for lab, idx in order.items():
        mean = mat[idx].mean(axis=0)
        means[lab] = mean[0] if flat else mean
        demeaned[idx] = mat[idx] - mean
    return (demeaned[:, 0] if flat else demeaned), means


def rolling_mean(
    series: Sequence[float | None], window: int
) -> list[float | None]:
    """Mean of the non-missing values in the trailing `window` positions
    ending at each index; missing where the whole window is missing."""
    if window < 1:
        raise SpecificationError(f"window must be >= 1, got {window}")
    out: list[float | None] = []
    for i in range(len(series)):
        chunk = [v for v in series[max(0, i - window + 1) : i + 1] if v is not None]
        out.append(sum(chunk) / len(chunk) if chunk else None)
    return out


# -- descriptive statistics --------------------------------------------------


@dataclass(frozen=True)
class SummaryStats:
    """Per-variable descriptives plus a pairwise-complete correlation matrix.

    `correlation[i, j]` is NaN when fewer than two complete pairs exist or a
    variable is constant over the overlap.
    """

    variables: tuple[str, ...]
    count: dict[str, int]
    mean: dict[str, float | None]
    sd: dict[str, float | None]
    min: dict[str, float | None]
    max: dict[str, float | None]
    correlation: np.ndarray = field(repr=False)


def describe(panel: WeeklyPanel, variables: Sequence[str]) -> SummaryStats:
    """Descriptive statistics over non-missing cells, sample (n-1) sd,
    pairwise-complete correlations."""
    names = tuple(variables)
    if not names:
        raise SpecificationError("describe needs at least one variable")
    cols = [panel.grid(v).ravel() for v in names]
    count, mean, sd, lo, hi = {}, {}, {}, {}, {}
    for name, col in zip(names, cols):
        vals = col[~np.isnan(col)]
        count[name] = int(vals.size)
        mean[name] = float(vals.mean()) if vals.size else None
        sd[name] = float(vals.std(ddof=1)) if vals.size >= 2 else None
        lo[name] = float(vals.min()) if vals.size else None
        hi[name] = float(vals.max()) if vals.size else None
    k = len(names)
    corr = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            both = ~np.isnan(cols[i]) & ~np.isnan(cols[j])
            if both.sum() < 2:
                continue
            xi, xj = cols[i][both], cols[j][both]
            sx, sy = xi.std(), xj.std()
            if sx == 0 or sy == 0:
                continue
            if i == j:
                corr[i, i] = 1.0
                continue
            r = float(np.corrcoef(xi, xj)[0, 1])
            corr[i, j] = corr[j, i] = min(1.0, max(-1.0, r))
    corr.setflags(write=False)
    return SummaryStats(names, count, mean, sd, lo, hi, corr)
