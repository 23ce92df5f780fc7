"""Acceptance gate: each test pins one criterion at its stated tolerance and
prints one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
complete.
"""

import time
from datetime import date, timedelta

import numpy as np

from epipanel import (
    CausalDag,
    ModelSpec,
    ScmParams,
    WeeklyPanel,
    backdoor_sets,
    build_design,
    compound_effect,
    derive_controls,
    fit_arellano_bond,
    fit_within,
    full_sample_dag,
    recovery_experiment,
    recovery_spec,
    sub_2020_dag,
)
from epipanel.dag import Observability
from epipanel.estimators import AbOptions, Estimator
from epipanel.pipeline import RunConfig, run
from epipanel.scm import simulate
from epipanel.softindex import (
    Channel,
    CountRecord,
    DEFAULT_TERMS,
    build_index,
    count_news_titles,
    default_categories,
    normalize_term,
)
from epipanel.ingest import (
    AggregationPolicy,
    CaseRecord,
    EventDate,
    Geography,
    aggregate_cases,
    symptom_to_obit_stats,
)
from oracles import backdoor_sets_paths, index_by_single_records, lsdv_fit

ANCHOR = date(2020, 5, 4)


def _check(criterion: int, description: str, ok: bool, detail: str, elapsed: float, cap: float):
    status = "PASS" if ok and elapsed < cap else "FAIL"
    print(f"[criterion {criterion}] {status} {description}: {detail} ({elapsed:.1f}s / cap {cap:.0f}s)")
    assert ok, f"criterion {criterion} failed: {detail}"
    assert elapsed < cap, f"criterion {criterion} exceeded runtime cap: {elapsed:.1f}s"


def test_criterion_1_compound_effect_fidelity(capsys):
    from epipanel.cli import main

    start = time.time()
    checks = [
        ([0.0619, 0.0565, 0.0455, 0.0302], 20.83, 0.01),
        ([0.0247, 0.0478, 0.0651], 14.35, 0.01),
        ([0.0504, 0.0518, 0.0500, 0.0408], 20.73, 0.01),
        ([0.0331, 0.0601, 0.0625], 16.36, 0.01),
        ([0.0120, 0.0127, 0.0118, 0.0108], 4.8, 0.05),
        ([0.0181, 0.0201, 0.0214], 6.07, 0.05),
    ]
    gaps = []
    cli_ok = True
    for magnitudes, quoted_pct, tol_pp in checks:
        got_pct = 100.0 * compound_effect(magnitudes)
        gaps.append((abs(got_pct - quoted_pct), tol_pp, quoted_pct, got_pct))
        assert main(["compound"] + [str(v) for v in magnitudes]) == 0
        printed = float(capsys.readouterr().out.split()[0])
        cli_ok = cli_ok and abs(100.0 * printed - got_pct) < 1e-3
    ok = all(gap <= tol for gap, tol, _, _ in gaps) and cli_ok
    worst = max(gaps)
    _check(
        1,
        "compound-effect fidelity (library and `compound` command)",
        ok,
        f"6 quoted percentages matched; worst gap {worst[0]:.4f}pp vs {worst[1]}pp "
        f"(quoted {worst[2]}%, computed {worst[3]:.4f}%)",
        time.time() - start,
        1.0,
    )


def _random_missing_panel(seed: int):
    rng = np.random.default_rng(seed)
    n_e, n_w, k = 20, 10, 3
    panel = WeeklyPanel([f"e{i}" for i in range(n_e)], ANCHOR, n_w)
    for j in range(k):
        grid = rng.normal(0, 1, (n_e, n_w))
        grid[rng.random((n_e, n_w)) < rng.uniform(0, 0.2)] = np.nan
        panel = panel.with_variable(f"x{j}", grid)
    y = rng.normal(0, 1, (n_e, 1)) + rng.normal(0, 1, (n_e, n_w))
    for j in range(k):
        y = y + (0.5 + j) * np.nan_to_num(panel.grid(f"x{j}"))
    return panel.with_variable("y", y)


def test_criterion_2_lsdv_oracle_equivalence():
    start = time.time()
    spec = ModelSpec(
        dependent="y",
        regressor_lag=1,
        mobility_vars=("x0", "x1", "x2"),
        dep_lag_count=0,
        time_dummies=False,
    )
    worst = 0.0
    for seed in range(100):
        design = build_design(_random_missing_panel(seed), spec)
        fit = fit_within(design)
        oracle = lsdv_fit(design.x, design.y, design.entities)
        got = np.array([fit.coefficients[c] for c in design.columns])
        got_se = np.array([fit.std_errors[c] for c in design.columns])
        rel = np.max(np.abs(got - oracle["slopes"]) / np.maximum(np.abs(oracle["slopes"]), 1e-12))
        rel_se = np.max(np.abs(got_se - oracle["slope_ses"]) / np.abs(oracle["slope_ses"]))
        worst = max(worst, rel, rel_se)
    _check(
        2,
        "LSDV oracle equivalence (100 panels, 20x10, 3 regressors, missing <= 20%)",
        worst <= 1e-8,
        f"worst relative gap {worst:.2e} vs 1e-8",
        time.time() - start,
        30.0,
    )


def _ar1_panel(seed: int, n=200, t=12, phi=0.5) -> WeeklyPanel:
    rng = np.random.default_rng(seed)
    alpha = rng.normal(0, 1, n)
    grid = np.zeros((n, t))
    prev = rng.normal(0, 1, n)
    for s in range(t):
        prev = phi * prev + alpha + rng.normal(0, 1, n)
        grid[:, s] = prev
    return WeeklyPanel([f"e{i}" for i in range(n)], ANCHOR, t).with_variable("y", grid)


def test_criterion_3_nickell_bias_demonstration():
    start = time.time()
    fe_spec = ModelSpec(dependent="y", dep_lag_count=1, time_dummies=False)
    ab_spec = ModelSpec(
        dependent="y", dep_lag_count=1, time_dummies=False, estimator=Estimator.ARELLANO_BOND
    )
    fe, ab = [], []
    for seed in range(100):
        panel = _ar1_panel(seed)
        fe.append(fit_within(build_design(panel, fe_spec)).coefficients["y_1"])
        ab.append(
            fit_arellano_bond(panel, ab_spec, AbOptions(4, include_trend=False)).coefficients["y_1"]
        )
    fe_mean, ab_mean = float(np.mean(fe)), float(np.mean(ab))
    fe_mae = float(np.mean(np.abs(np.array(fe) - 0.5)))
    ab_mae = float(np.mean(np.abs(np.array(ab) - 0.5)))
    ok = fe_mean <= 0.5 - 0.02 and abs(ab_mean - 0.5) <= 0.05 and ab_mae < fe_mae
    _check(
        3,
        "Nickell-bias demonstration (phi=0.5, N=200, T=12, 100 seeds)",
        ok,
        f"FE mean {fe_mean:.4f} (<= 0.48), AB mean {ab_mean:.4f} (in 0.45..0.55), "
        f"MAE AB {ab_mae:.4f} < FE {fe_mae:.4f}",
        time.time() - start,
        120.0,
    )


def test_criterion_4_scm_recovery():
    start = time.time()
    params = ScmParams(entity_count=60, week_count=40, seed=100)
    blocks = derive_controls(full_sample_dag(), "X", "Y")
    correct = recovery_experiment(params, recovery_spec(params, controls=blocks), n_seeds=200)
    omitted_blocks = [b for b in blocks if b != "soft_behavioral"]
    omitted = recovery_experiment(
        params, recovery_spec(params, controls=omitted_blocks), n_seeds=200
    )
    ok = (
        correct.coverage_rate >= 0.90
        and abs(omitted.mean_bias) > 3 * omitted.mean_se
        and correct.n_failures == 0
    )
    _check(
        4,
        "SCM recovery with DAG-derived controls (200 seeds)",
        ok,
        f"coverage {correct.coverage_rate:.3f} (>= 0.90); omitted-proxy |bias| "
        f"{abs(omitted.mean_bias):.5f} > 3 x SE {3 * omitted.mean_se:.5f}",
        time.time() - start,
        300.0,
    )


def _primer_dags():
    bare = CausalDag(["X", "Y"], [("X", "Y")])
    confounded = CausalDag(["X", "Y", "V"], [("V", "X"), ("V", "Y"), ("X", "Y")])
    return bare, confounded


def _random_dag(rng: np.random.Generator, n_nodes: int) -> CausalDag:
    names = [f"n{i}" for i in range(n_nodes)]
    order = list(rng.permutation(n_nodes))
    tags = {}
    for name in names:
        roll = rng.random()
        tags[name] = (
            Observability.DETERMINISTIC
            if roll < 0.2
            else Observability.LATENT
            if roll < 0.35
            else Observability.OBSERVED
        )
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < 0.4:
                edges.append((names[order[i]], names[order[j]]))
    return CausalDag(tags, edges)


def test_criterion_5_backdoor_correctness():
    start = time.time()
    bare, confounded = _primer_dags()
    mismatches = 0
    for dag in (full_sample_dag(), sub_2020_dag(), bare, confounded):
        got = backdoor_sets(dag, "X", "Y")
        tags = {n: o.value for n, o in dag.observability.items()}
        want_sets, want_flags = backdoor_sets_paths(tags, dag.edges, "X", "Y")
        if got.valid_sets != want_sets or got.uses_deterministic_proxy != want_flags:
            mismatches += 1
    rng = np.random.default_rng(2024)
    for _ in range(500):
        dag = _random_dag(rng, int(rng.integers(3, 8)))
        nodes = list(dag.nodes)
        x, y = [nodes[i] for i in rng.choice(len(nodes), size=2, replace=False)]
        got = backdoor_sets(dag, x, y)
        tags = {n: o.value for n, o in dag.observability.items()}
        want_sets, want_flags = backdoor_sets_paths(tags, dag.edges, x, y)
        if got.valid_sets != want_sets or got.uses_deterministic_proxy != want_flags:
            mismatches += 1
    single_confounder = backdoor_sets(confounded, "X", "Y")
    exact_v = single_confounder.valid_sets == (frozenset({"V"}),)
    _check(
        5,
        "backdoor search vs path-enumeration oracle (4 named + 500 random DAGs)",
        mismatches == 0 and exact_v,
        f"{mismatches} mismatches; single-confounder minimal set "
        f"{[sorted(s) for s in single_confounder.valid_sets]} == [['V']]",
        time.time() - start,
        60.0,
    )


def test_criterion_6_index_builder_oracle():
    start = time.time()
    categories = default_categories()
    all_terms = sorted({t for terms in DEFAULT_TERMS.values() for t in terms})
    term_to_cat = {normalize_term(t): c.label for c in categories for t in c.terms}
    states = ("33", "35", "52")
    rng = np.random.default_rng(77)
    mismatches = 0
    for _ in range(1000):
        n_records = int(rng.integers(0, 30))
        records = []
        for _ in range(n_records):
            term = all_terms[int(rng.integers(len(all_terms)))]
            if rng.random() < 0.05:
                term = "fora-de-categoria"
            records.append(
                CountRecord(
                    term=term,
                    state_code=states[int(rng.integers(3))],
                    week=int(rng.integers(1, 7)),
                    count=int(rng.integers(0, 25)),
                    channel=Channel.GT,
                )
            )
        panel, _ = build_index(records, categories, Channel.GT, states=states, n_weeks=6)
        expected = index_by_single_records(
            [
                CountRecord(normalize_term(r.term), r.state_code, r.week, r.count, r.channel)
                for r in records
            ],
            term_to_cat,
            states,
            6,
            "gt",
        )
        for var, cells in expected.items():
            for (s, w), v in cells.items():
                if panel.value(s, w, var) != v:
                    mismatches += 1
    titles = [
        ("35", 1, "mascara e mascara de novo"),
        ("35", 1, "cloroquina e ivermectina liberadas"),
        ("35", 2, "quarentena: MASCARA obrigatória"),
    ]
    counts = {
        (c.term, c.state_code, c.week): c.count
        for c in count_news_titles(titles, categories)
    }
    presence_ok = (
        counts[("mascara", "35", 1)] == 1
        and counts[("cloroquina", "35", 1)] == 1
        and counts[("ivermectina", "35", 1)] == 1
        and counts[("mascara", "35", 2)] == 1
        and counts[("quarentena", "35", 2)] == 1
    )
    _check(
        6,
        "index builder vs single-record oracle (1000 record sets, full term lists)",
        mismatches == 0 and presence_ok,
        f"{mismatches} cell mismatches; title presence semantics verified",
        time.time() - start,
        30.0,
    )


def test_criterion_7_aggregation_conservation():
    start = time.time()
    rng = np.random.default_rng(55)
    entities = ["A", "B", "C", "D"]
    total_checks = []
    for trial in range(50):
        records = []
        for i in range(int(rng.integers(1, 60))):
            symptom = ANCHOR + timedelta(days=int(rng.integers(0, 35)))
            died = rng.random() < 0.4
            obit = symptom + timedelta(days=int(rng.integers(0, 20))) if died else None
            records.append(
                CaseRecord(
                    record_id=f"t{trial}r{i}",
                    first_symptom_date=symptom,
                    obit_date=obit,
                    residence_code=entities[int(rng.integers(4))],
                    notification_code=entities[int(rng.integers(4))],
                    died=died,
                )
            )
        span = (1, 9)
        for geography in (Geography.RESIDENCE, Geography.NOTIFICATION):
            policy = AggregationPolicy(geography, EventDate.FIRST_SYMPTOM, ANCHOR)
            panel = aggregate_cases(records, policy, span, entities=entities)
            total = sum(
                panel.value(e, t, "cases") for e in entities for t in panel.weeks
            )
            total_checks.append(total == len(records))
    obit = ANCHOR + timedelta(days=30)
    fixture = [
        CaseRecord("d1", obit - timedelta(days=8), obit, "A", "A", True),
        CaseRecord("d2", obit - timedelta(days=17), obit, "A", "A", True),
        CaseRecord("d3", obit - timedelta(days=22), obit, "A", "A", True),
    ]
    stats = symptom_to_obit_stats(fixture, ANCHOR)
    week = (obit - ANCHOR).days // 7 + 1
    duration_ok = (
        stats.by_week[week].median == 17.0
        and stats.by_week[week].min == 8
        and stats.by_week[week].max == 22
        and stats.overall_median == 17.0
    )
    _check(
        7,
        "aggregation conservation + duration fixture {8, 17, 22}",
        all(total_checks) and duration_ok,
        f"{len(total_checks)} conservation checks exact; median 17 / min 8 / max 22",
        time.time() - start,
        10.0,
    )


def test_criterion_8_end_to_end_determinism(tmp_path):
    start = time.time()
    params = ScmParams(
        entity_count=30,
        week_count=24,
        true_beta=(-0.05, 0.01),
        b_weights=(1.0, 1.0, 0.0),
        seed=2025,
    )
    sim = simulate(params, dependents=("cases", "deaths"))
    sim.panel.write_csv(tmp_path / "panel.csv")
    outputs = []
    for name in ("run1", "run2"):
        config = RunConfig(out_dir=tmp_path / name, panel=tmp_path / "panel.csv")
        run(config)
        outputs.append(
            {
                p.name: p.read_bytes()
                for p in sorted((tmp_path / name).iterdir())
            }
        )
    same_names = sorted(outputs[0]) == sorted(outputs[1])
    identical = same_names and all(
        outputs[0][name] == outputs[1][name] for name in outputs[0]
    )
    _check(
        8,
        "end-to-end determinism (two `table` runs on identical simulator inputs)",
        identical,
        f"{len(outputs[0])} output files byte-identical across runs",
        time.time() - start,
        60.0,
    )
