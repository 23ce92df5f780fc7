"""Command-line entry point.

Subcommands: ingest, index, dag, fit, table, simulate, recover, compound.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import softindex as soft
from .dag import backdoor_sets, load_dag
from .errors import ConfigurationError, PipelineError
from .estimators import Estimator, ModelSpec, fit
from .panel import WeeklyPanel, log_growth
from .pipeline import (
    _Outputs,
    build_panel_from_records,
    load_run_config,
    run,
    truncate_panel,
    _durations_csv,
    _sub_2020_weeks,
    Sample,
)
from .report import compound_effect
from .scm import ScmParams, load_sim_params, recovery_experiment, recovery_spec, simulate

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib


def _add_common(parser: argparse.ArgumentParser, config=True) -> None:
    if config:
        parser.add_argument("--config", type=Path, required=True, help="TOML configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epipanel",
        description="Weekly panel construction, keyword indexes, causal DAG "
        "queries, and panel estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a panel CSV from record-level inputs")
    _add_common(p)

    p = sub.add_parser("index", help="build state-level keyword indexes")
    _add_common(p)

    p = sub.add_parser("dag", help="print backdoor adjustment sets for a DAG file")
    p.add_argument("dag_file", type=Path)
    p.add_argument("--x", default="X")
    p.add_argument("--y", default="Y")
    p.add_argument("--max-size", type=int, default=None)

    p = sub.add_parser("fit", help="estimate a single specification")
    _add_common(p)

    p = sub.add_parser("table", help="run the full pipeline and write the table")
    _add_common(p)

    p = sub.add_parser("simulate", help="generate a synthetic panel")
    _add_common(p)
    p.add_argument("--dependents", default="cases", help="comma-separated dependents")

    p = sub.add_parser("recover", help="Monte Carlo coefficient-recovery experiment")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument(
        "--omit-behavioral",
        action="store_true",
        help="drop the behavioral proxy block from the fitted model",
    )

    p = sub.add_parser("compound", help="compound per-horizon coefficient magnitudes")
    p.add_argument("coefficients", type=float, nargs="+")
    return parser


def _out_dir(args, default: str) -> Path:
    return args.out if args.out is not None else Path(default)


def _cmd_ingest(args) -> int:
    config = load_run_config(args.config, out_dir=args.out, seed=args.seed)
    outputs = _Outputs(config.out_dir)
    try:
        panel, extra = build_panel_from_records(config)
        for label in ("cases", "deaths"):
            if label in panel.variables:
                panel = log_growth(panel, label)
        if config.sample == Sample.SUB_2020:
            panel = truncate_panel(panel, _sub_2020_weeks(panel))
            extra["summary"]["weeks"] = panel.n_weeks
        outputs.out_dir.mkdir(parents=True, exist_ok=True)
        panel.write_csv(outputs.out_dir / "panel.csv")
        outputs.written.append(outputs.out_dir / "panel.csv")
        if extra["durations"] is not None:
            outputs.write_text("durations.csv", _durations_csv(extra["durations"]))
        outputs.write_text(
            "ingest_summary.json",
            json.dumps(extra["summary"], indent=2, sort_keys=True) + "\n",
        )
    except Exception:
        outputs.discard_all()
        raise
    print(f"panel written to {outputs.out_dir / 'panel.csv'}")
    return 0


def _cmd_index(args) -> int:
    config = load_run_config(args.config, out_dir=args.out, seed=args.seed)
    if config.counts is None and config.titles is None:
        raise ConfigurationError("index needs counts and/or titles inputs")
    if config.weeks is None:
        raise ConfigurationError("index needs a week span")
    anchor = config.anchor
    categories = (
        soft.load_categories(config.terms)
        if config.terms is not None
        else soft.default_categories()
    )
    records: list[soft.CountRecord] = []
    if config.counts is not None:
        records.extend(soft.load_count_records(config.counts, anchor))
    if config.titles is not None:
        records.extend(soft.count_news_titles(soft.load_titles(config.titles, anchor), categories))
    states = tuple(sorted({r.state_code for r in records}))
    if not states:
        raise ConfigurationError("no count records found")
    panel = WeeklyPanel(states, anchor, config.weeks)
    rejects_all: dict[str, int] = {}
    for channel in (soft.Channel.GT, soft.Channel.NEWS):
        if not any(r.channel == channel for r in records):
            continue
        index_panel, rejects = soft.build_index(
            records, categories, channel, states=states, n_weeks=config.weeks
        )
        for var in index_panel.variables:
            panel = panel.with_variable(var, index_panel.grid(var).astype(float))
        for term, count in rejects.items():
            rejects_all[term] = rejects_all.get(term, 0) + count
    outputs = _Outputs(config.out_dir)
    try:
        outputs.out_dir.mkdir(parents=True, exist_ok=True)
        panel.write_csv(outputs.out_dir / "indexes.csv")
        outputs.written.append(outputs.out_dir / "indexes.csv")
        outputs.write_text(
            "index_rejects.json", json.dumps(rejects_all, indent=2, sort_keys=True) + "\n"
        )
    except Exception:
        outputs.discard_all()
        raise
    print(f"indexes written to {outputs.out_dir / 'indexes.csv'}")
    return 0


def _cmd_dag(args) -> int:
    dag = load_dag(args.dag_file)
    result = backdoor_sets(dag, args.x, args.y, max_size=args.max_size)
    print(f"backdoor adjustment sets for {args.x} -> {args.y} ({args.dag_file}):")
    if not result.valid_sets:
        print("  (none: not identifiable under the observability tags)")
        return 0
    for i, (nodes, flagged) in enumerate(
        zip(result.valid_sets, result.uses_deterministic_proxy), start=1
    ):
        body = "{" + ", ".join(sorted(nodes)) + "}"
        note = "  [uses deterministic proxy]" if flagged else ""
        print(f"  {i}. {body}{note}")
    return 0


def _load_model_spec(path) -> tuple[Path, ModelSpec]:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    if "model" not in raw or "inputs" not in raw or "panel" not in raw.get("inputs", {}):
        raise ConfigurationError("fit needs [inputs].panel and a [model] table")
    model = raw["model"]
    known = {
        "dependent",
        "m",
        "mobility_vars",
        "vaccination_vars",
        "soft_vars",
        "dep_lags",
        "time_dummies",
        "trend",
        "estimator",
        "dependent_kind",
        "cluster",
    }
    unknown = set(model) - known
    if unknown:
        raise ConfigurationError(f"unknown [model] keys: {sorted(unknown)}")
    spec = ModelSpec(
        dependent=str(model["dependent"]),
        regressor_lag=int(model.get("m", 1)),
        mobility_vars=tuple(model.get("mobility_vars", ())),
        vaccination_vars=tuple(model.get("vaccination_vars", ())),
        soft_vars=tuple(model.get("soft_vars", ())),
        dep_lag_count=int(model.get("dep_lags", 4)),
        time_dummies=bool(model.get("time_dummies", model.get("estimator", "within_fe") == "within_fe")),
        trend=bool(model.get("trend", model.get("estimator", "within_fe") == "arellano_bond")),
        estimator=Estimator(model.get("estimator", "within_fe")),
        dependent_kind=str(model.get("dependent_kind", "cases")),
        cluster=bool(model.get("cluster", False)),
    )
    panel_path = Path(path).parent / str(raw["inputs"]["panel"])
    return panel_path, spec


def _cmd_fit(args) -> int:
    panel_path, spec = _load_model_spec(args.config)
    panel = WeeklyPanel.read_csv(panel_path)
    if spec.dependent not in panel.variables:
        stem = spec.dependent.removeprefix("dlog_")
        if spec.dependent.startswith("dlog_") and stem in panel.variables:
            panel = log_growth(panel, stem)
    result = fit(panel, spec)
    payload = {
        "coefficients": result.coefficients,
        "std_errors": result.std_errors,
        "intercept": result.intercept,
        "r2_within": result.r2_within,
        "r2_overall": result.r2_overall,
        "n_obs": result.n_obs,
        "f_pvalue": result.f_pvalue,
        "entity_count": result.entity_count,
        "week_count": result.week_count,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    out_dir = _out_dir(args, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "fit.json").write_text(text)
    print(text, end="")
    return 0


def _cmd_table(args) -> int:
    config = load_run_config(args.config, out_dir=args.out, seed=args.seed)
    summary = run(config)
    print(f"table written to {config.out_dir / 'table.txt'} "
          f"({len(summary['columns'])} columns)")
    return 0


def _cmd_simulate(args) -> int:
    params = load_sim_params(args.config)
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    dependents = tuple(d.strip() for d in args.dependents.split(",") if d.strip())
    sim = simulate(params, dependents=dependents)
    out_dir = _out_dir(args, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    sim.panel.write_csv(out_dir / "panel.csv")
    truth = _params_dict(params)
    truth["dependents"] = list(sim.dependents)
    truth["latent_variables"] = sorted(sim.panel.latent)
    truth["anchor"] = sim.panel.anchor.isoformat()
    # the vaccination->mobility and vaccination->behavior channels are linear
    # by construction; record that so downstream readers need not guess
    truth["functional_form"] = "linear"
    (out_dir / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    print(f"simulated panel written to {out_dir / 'panel.csv'}")
    return 0


def _params_dict(params: ScmParams) -> dict:
    out = {}
    for name in ScmParams.__dataclass_fields__:
        value = getattr(params, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def _cmd_recover(args) -> int:
    params = load_sim_params(args.config)
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    controls = ["soft_behavioral", "dep_lags"]
    if params.include_vaccination:
        controls.insert(0, "vaccination")
    if args.omit_behavioral:
        controls.remove("soft_behavioral")
    spec = recovery_spec(params, controls=controls)
    result = recovery_experiment(params, spec, n_seeds=args.seeds)
    payload = {
        "coverage_rate": result.coverage_rate,
        "mean_bias": result.mean_bias,
        "mean_se": result.mean_se,
        "mean_estimate": result.mean_estimate,
        "n_seeds": result.n_seeds,
        "n_failures": result.n_failures,
        "controls": controls,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    out_dir = _out_dir(args, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "recovery.json").write_text(text)
    print(text, end="")
    return 0


def _cmd_compound(args) -> int:
    value = compound_effect(args.coefficients)
    print(f"{value:.6f} ({value * 100:.4f}%)")
    return 0


COMMANDS = {
    "ingest": _cmd_ingest,
    "index": _cmd_index,
    "dag": _cmd_dag,
    "fit": _cmd_fit,
    "table": _cmd_table,
    "simulate": _cmd_simulate,
    "recover": _cmd_recover,
    "compound": _cmd_compound,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
