"""Config-driven pipeline: ingestion, index construction, spec generation,
estimation fan-out, and file outputs.

A run either starts from record-level CSVs (cases, mobility, vaccination,
counts/titles) or from a prebuilt panel CSV (e.g. simulator output). Control
blocks come from the bundled identification DAG of the configured sample;
the general search/news series are always added alongside, mirroring the
estimating equation. Any stage failure removes files already written and
surfaces a stage-tagged error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from . import ingest as ing
from . import softindex as soft
from .dag import derive_controls, full_sample_dag, sub_2020_dag
from .errors import ConfigurationError, DataError, PipelineError
from .estimators import AbOptions, Estimator, ModelSpec, fit
from .panel import WeeklyPanel, describe, log_growth
from .report import RegressionTable, TableColumn, render_table

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib


class Sample:
    FULL = "full_2020_2021"
    SUB_2020 = "sub_2020"


class MobilitySet:
    REDUCED = "reduced"
    FULL_SIX = "full_six"


END_OF_2020 = date(2020, 12, 28)  # last Monday of 2020

DEPENDENT_CHOICES = ("both", "cases", "deaths")

# candidate panel variables per control block, in display order
SOFT_BEHAVIORAL_CANDIDATES = ("n_prevention", "gt_prevention")
SOFT_GENERAL_CANDIDATES = (
    "n_covid",
    "n_fakenews",
    "n_vaccines",
    "n_general",
    "gt_covid",
    "gt_fakenews",
    "gt_vaccines",
    "gt_general",
)
VACCINATION_CANDIDATES = {
    ing.VaccinationSource.CAMPAIGN: (("1st_dose", "2nd_dose"), ("vac",)),
    ing.VaccinationSource.SRAG: (("srag_vac",),),
}


@dataclass(frozen=True)
class RunConfig:
    out_dir: Path
    panel: Path | None = None
    cases: Path | None = None
    mobility: Path | None = None
    vaccination: Path | None = None
    counts: Path | None = None
    titles: Path | None = None
    terms: Path | None = None
    state_map: Path | None = None
    start: date = date(2020, 5, 3)
    weeks: int | None = None
    sample: str = Sample.FULL
    geography: ing.Geography = ing.Geography.RESIDENCE
    vaccination_source: ing.VaccinationSource = ing.VaccinationSource.CAMPAIGN
    mobility_set: str = MobilitySet.REDUCED
    estimator: Estimator = Estimator.WITHIN_FE
    dependents: str = "both"
    vaccination_block: bool | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sample not in (Sample.FULL, Sample.SUB_2020):
            raise ConfigurationError(f"unknown sample {self.sample!r}")
        if self.mobility_set not in (MobilitySet.REDUCED, MobilitySet.FULL_SIX):
            raise ConfigurationError(f"unknown mobility set {self.mobility_set!r}")
        if self.dependents not in DEPENDENT_CHOICES:
            raise ConfigurationError(f"dependents must be one of {DEPENDENT_CHOICES}")
        if self.sample == Sample.SUB_2020 and self.vaccination_block:
            raise ConfigurationError(
                "the 2020 subsample has no vaccination channel; "
                "a vaccination block cannot be requested"
            )
        if self.panel is None:
            if self.cases is None or self.mobility is None:
                raise ConfigurationError(
                    "record-level runs need at least cases and mobility inputs"
                )
            if self.weeks is None:
                raise ConfigurationError("record-level runs need a week span")

    @property
    def anchor(self) -> date:
        return ing.resolve_anchor(self.start)

    def wants_vaccination(self) -> bool:
        if self.vaccination_block is not None:
            return self.vaccination_block
        return self.sample == Sample.FULL


def _paths(raw: dict, base: Path, keys) -> dict:
    out = {}
    for key in keys:
        if key in raw:
            out[key] = (base / str(raw[key])).resolve()
    return out


def load_run_config(path, out_dir=None, seed: int | None = None) -> RunConfig:
    """Read a TOML run configuration; relative input paths resolve against
    the config file's directory."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = path.parent
    inputs = raw.get("inputs", {})
    panel_tbl = raw.get("panel", {})
    run_tbl = raw.get("run", {})
    known = {"inputs", "panel", "run"}
    if set(raw) - known:
        raise ConfigurationError(f"unknown config tables: {sorted(set(raw) - known)}")
    kwargs: dict = {}
    kwargs.update(
        _paths(
            inputs,
            base,
            (
                "panel",
                "cases",
                "mobility",
                "vaccination",
                "counts",
                "titles",
                "terms",
                "state_map",
            ),
        )
    )
    if "start" in panel_tbl:
        start = panel_tbl["start"]
        if not isinstance(start, date):
            raise ConfigurationError("panel.start must be a TOML date")
        kwargs["start"] = start
    if "weeks" in panel_tbl:
        kwargs["weeks"] = int(panel_tbl["weeks"])
    for key in ("sample", "mobility_set", "dependents"):
        if key in run_tbl:
            kwargs[key] = str(run_tbl[key])
    if "geography" in run_tbl:
        kwargs["geography"] = ing.Geography(run_tbl["geography"])
    if "vaccination_source" in run_tbl:
        kwargs["vaccination_source"] = ing.VaccinationSource(run_tbl["vaccination_source"])
    if "estimator" in run_tbl:
        kwargs["estimator"] = Estimator(run_tbl["estimator"])
    if "vaccination_block" in run_tbl:
        kwargs["vaccination_block"] = bool(run_tbl["vaccination_block"])
    if "seed" in run_tbl:
        kwargs["seed"] = int(run_tbl["seed"])
    if seed is not None:
        kwargs["seed"] = seed
    out = Path(out_dir) if out_dir is not None else base / str(run_tbl.get("out", "out"))
    return RunConfig(out_dir=out, **kwargs)


class StageError(PipelineError):
    """Wraps the underlying error with the stage where it happened."""

    def __init__(self, stage: str, cause: PipelineError):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


class _Outputs:
    """Tracks written files so a failed run leaves nothing behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)
        return path

    def discard_all(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass
        self.written.clear()


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, PipelineError) and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def build_panel_from_records(config: RunConfig) -> tuple[WeeklyPanel, dict]:
    """Ingest record CSVs into one municipality panel with soft indexes
    broadcast from the state level."""
    anchor = config.anchor
    span = (1, int(config.weeks))
    case_records = ing.load_case_records(config.cases)
    policy_kw = dict(geography=config.geography, anchor=anchor)
    cases_panel = ing.aggregate_cases(
        case_records,
        ing.AggregationPolicy(event_date=ing.EventDate.FIRST_SYMPTOM, **policy_kw),
        span,
        name="cases",
    )
    entities = cases_panel.entities
    deaths_panel = ing.aggregate_cases(
        case_records,
        ing.AggregationPolicy(event_date=ing.EventDate.OBIT, **policy_kw),
        span,
        entities=entities,
        name="deaths",
    )
    panel = cases_panel.with_variable("deaths", deaths_panel.grid("deaths"))
    mobility_records = ing.load_mobility_records(config.mobility, anchor)
    mob_panel = ing.aggregate_mobility(mobility_records, anchor, span, entities=entities)
    for var in mob_panel.variables:
        panel = panel.with_variable(var, mob_panel.grid(var))
    summary: dict = {
        "anchor": anchor.isoformat(),
        "weeks": int(config.weeks),
        "entities": len(entities),
        "case_records": len(case_records),
        "death_records": sum(1 for r in case_records if r.died),
    }
    if config.vaccination is not None:
        vac_records = ing.load_vaccination_records(config.vaccination)
        vac_panel = ing.aggregate_vaccination(
            vac_records, config.vaccination_source, anchor, span, entities=entities
        )
        for var in vac_panel.variables:
            panel = panel.with_variable(var, vac_panel.grid(var))
    categories = (
        soft.load_categories(config.terms)
        if config.terms is not None
        else soft.default_categories()
    )
    count_records: list[soft.CountRecord] = []
    if config.counts is not None:
        count_records.extend(soft.load_count_records(config.counts, anchor))
    if config.titles is not None:
        count_records.extend(
            soft.count_news_titles(soft.load_titles(config.titles, anchor), categories)
        )
    if count_records:
        state_of = (
            _load_state_map(config.state_map)
            if config.state_map is not None
            else soft.prefix_state_of(entities)
        )
        states = tuple(sorted({state_of[e] for e in entities}))
        rejects_all: dict[str, int] = {}
        for channel in (soft.Channel.GT, soft.Channel.NEWS):
            if not any(r.channel == channel for r in count_records):
                continue
            index_panel, rejects = soft.build_index(
                count_records, categories, channel, states=states, n_weeks=config.weeks
            )
            panel = soft.broadcast_to_municipalities(index_panel, state_of, panel)
            for term, count in rejects.items():
                rejects_all[term] = rejects_all.get(term, 0) + count
        summary["uncategorized_terms"] = dict(sorted(rejects_all.items()))
    duration_rows = None
    if any(r.died for r in case_records):
        stats = ing.symptom_to_obit_stats(case_records, anchor)
        summary["symptom_to_obit_median_days"] = stats.overall_median
        duration_rows = stats
    return panel, {"summary": summary, "durations": duration_rows}


def _load_state_map(path) -> dict[str, str]:
    import csv

    out: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
            "entity_code",
            "state_code",
        ]:
            raise DataError(f"{path}: expected header entity_code,state_code")
        for row in reader:
            out[row["entity_code"]] = row["state_code"]
    return out


def _sub_2020_weeks(panel: WeeklyPanel) -> int:
    n = 0
    for t in panel.weeks:
        if panel.week_start(t) <= END_OF_2020:
            n = t
    if n == 0:
        raise ConfigurationError("no panel weeks fall inside 2020")
    return n


def truncate_panel(panel: WeeklyPanel, n_weeks: int) -> WeeklyPanel:
    if not 1 <= n_weeks <= panel.n_weeks:
        raise ConfigurationError(f"cannot truncate to {n_weeks} weeks")
    data = {var: panel.grid(var)[:, :n_weeks] for var in panel.variables}
    return WeeklyPanel(panel.entities, panel.anchor, n_weeks, data, panel.latent)


def _block_variables(panel: WeeklyPanel, config: RunConfig) -> dict[str, tuple[str, ...]]:
    available = set(panel.variables) - set(panel.latent)
    behavioral = tuple(v for v in SOFT_BEHAVIORAL_CANDIDATES if v in available)
    general = tuple(v for v in SOFT_GENERAL_CANDIDATES if v in available)
    out = {"soft_behavioral": behavioral, "soft_general": general}
    if config.wants_vaccination():
        for candidate in VACCINATION_CANDIDATES[config.vaccination_source]:
            if all(v in available for v in candidate):
                out["vaccination"] = candidate
                break
        else:
            raise ConfigurationError(
                f"no {config.vaccination_source.value} vaccination variables in the panel"
            )
    return out


def table_specs(panel: WeeklyPanel, config: RunConfig) -> list[tuple[str, int, ModelSpec]]:
    """One (label, m, spec) triple per table column.

    The adjustment blocks come from the sample's identification DAG; the
    general search/news series ride along as in the estimating equation.
    """
    dag = sub_2020_dag() if config.sample == Sample.SUB_2020 else full_sample_dag()
    blocks = set(derive_controls(dag, "X", "Y")) | {"soft_general"}
    if not config.wants_vaccination():
        blocks.discard("vaccination")
    block_vars = _block_variables(panel, config)
    if "soft_behavioral" in blocks and not block_vars["soft_behavioral"]:
        raise ConfigurationError(
            "identification needs behavioral proxy variables "
            f"({' or '.join(SOFT_BEHAVIORAL_CANDIDATES)}) in the panel"
        )
    mobility = (
        ing.MOBILITY_CATEGORIES
        if config.mobility_set == MobilitySet.FULL_SIX
        else ing.MOBILITY_CATEGORIES[:2]
    )
    missing = [v for v in mobility if v not in panel.variables]
    if missing:
        raise ConfigurationError(f"mobility variables missing from panel: {missing}")
    soft_vars: tuple[str, ...] = ()
    if "soft_behavioral" in blocks:
        soft_vars += block_vars["soft_behavioral"]
    if "soft_general" in blocks:
        soft_vars += block_vars["soft_general"]
    # keep news indexes ahead of search indexes, as in the table rows
    soft_vars = tuple(sorted(soft_vars, key=lambda v: (not v.startswith("n_"), v)))
    vaccination = block_vars.get("vaccination", ()) if "vaccination" in blocks else ()
    is_ab = config.estimator == Estimator.ARELLANO_BOND
    labels = ("cases", "deaths") if config.dependents == "both" else (config.dependents,)
    specs = []
    for label in labels:
        dep = f"dlog_{label}"
        if dep not in panel.variables:
            raise ConfigurationError(f"dependent variable {dep!r} missing from panel")
        for m in (1, 2, 3, 4) if label == "cases" else (2, 3, 4):
            specs.append(
                (
                    label,
                    m,
                    ModelSpec(
                        dependent=dep,
                        regressor_lag=m,
                        mobility_vars=tuple(mobility),
                        vaccination_vars=tuple(vaccination),
                        soft_vars=soft_vars,
                        dep_lag_count=4 if "dep_lags" in blocks else 0,
                        time_dummies=not is_ab,
                        trend=is_ab,
                        estimator=config.estimator,
                        dependent_kind=label,
                    ),
                )
            )
    return specs


def _stats_csv(panel: WeeklyPanel, variables) -> tuple[str, str]:
    stats = describe(panel, variables)

    def num(v):
        return "" if v is None else f"{v:.6g}"

    lines = ["variable,count,mean,sd,min,max"]
    for name in stats.variables:
        lines.append(
            f"{name},{stats.count[name]},{num(stats.mean[name])},{num(stats.sd[name])},"
            f"{num(stats.min[name])},{num(stats.max[name])}"
        )
    corr_lines = ["," + ",".join(stats.variables)]
    for i, name in enumerate(stats.variables):
        cells = []
        for j in range(len(stats.variables)):
            v = stats.correlation[i, j]
            cells.append("" if v != v else f"{v:.6g}")
        corr_lines.append(name + "," + ",".join(cells))
    return "\n".join(lines) + "\n", "\n".join(corr_lines) + "\n"


def _durations_csv(stats: ing.DurationStats) -> str:
    lines = ["obit_week,count,median_days,min_days,max_days"]
    for week, d in stats.by_week.items():
        lines.append(f"{week},{d.count},{d.median:.6g},{d.min},{d.max}")
    return "\n".join(lines) + "\n"


def run(config: RunConfig) -> dict:
    """Execute the full pipeline and write outputs into `config.out_dir`.

    Returns a summary dict. On any failure, files written so far are removed
    and a stage-tagged error is raised.
    """
    outputs = _Outputs(config.out_dir)
    try:
        with _stage("config"):
            wants_vac = config.wants_vaccination()
        duration_stats = None
        with _stage("data"):
            if config.panel is not None:
                panel = WeeklyPanel.read_csv(config.panel)
                summary = {
                    "anchor": panel.anchor.isoformat(),
                    "weeks": panel.n_weeks,
                    "entities": len(panel.entities),
                }
            else:
                panel, extra = build_panel_from_records(config)
                summary = extra["summary"]
                duration_stats = extra["durations"]
            for label in ("cases", "deaths"):
                if f"dlog_{label}" not in panel.variables and label in panel.variables:
                    panel = log_growth(panel, label)
            if config.sample == Sample.SUB_2020:
                panel = truncate_panel(panel, _sub_2020_weeks(panel))
                summary["weeks"] = panel.n_weeks
            summary["sample"] = config.sample
            summary["vaccination_block"] = wants_vac
        with _stage("specification"):
            specs = table_specs(panel, config)
        with _stage("estimation"):
            columns = []
            for label, m, spec in specs:
                options = AbOptions(include_trend=True) if spec.estimator == Estimator.ARELLANO_BOND else None
                columns.append(TableColumn(label, m, fit(panel, spec, options)))
            table = RegressionTable(tuple(columns))
        with _stage("render"):
            for fmt, suffix in (("text", "txt"), ("csv", "csv"), ("latex", "tex")):
                outputs.write_text(f"table.{suffix}", render_table(table, fmt))
            model_vars = []
            for _, _, spec in specs:
                for v in (spec.dependent,) + spec.block_vars:
                    if v not in model_vars:
                        model_vars.append(v)
            stats_csv, corr_csv = _stats_csv(panel, model_vars)
            outputs.write_text("descriptive_stats.csv", stats_csv)
            outputs.write_text("correlation_matrix.csv", corr_csv)
            if duration_stats is not None:
                outputs.write_text("durations.csv", _durations_csv(duration_stats))
            summary["columns"] = [
                {"label": c.label, "m": c.m, "n_obs": c.fit.n_obs} for c in table.columns
            ]
            outputs.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary
    except Exception:
        outputs.discard_all()
        raise
