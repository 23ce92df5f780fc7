"""Shared fixtures: a small synthetic record-level dataset for pipeline runs."""

from datetime import date, timedelta

import numpy as np
import pytest

ANCHOR = date(2020, 5, 4)
WEEKS = 20
MUNICIPALITIES = {
    "35": ("3501", "3502", "3503"),
    "33": ("3301", "3302", "3303"),
    "52": ("5201", "5202", "5203"),
}
GT_TERMS = ("covid", "mascara", "cloroquina", "pfizer", "quarentena", "pandemia")
TITLE_POOL = (
    "uso de mascara obrigatorio em {s}",
    "quarentena prorrogada",
    "cloroquina sem eficacia comprovada",
    "vacina pfizer avanca em testes",
    "casos covid em alta",
    "lockdown decretado na regiao",
    "nada relacionado a saude",
)


def write_record_inputs(root, seed=0, weeks=WEEKS):
    """Emit cases/mobility/vaccination/counts/titles CSVs for a small panel."""
    rng = np.random.default_rng(seed)
    munis = [m for group in MUNICIPALITIES.values() for m in group]
    cases_lines = [
        "record_id,first_symptom_date,obit_date,residence_code,notification_code,died"
    ]
    rid = 0
    for muni in munis:
        base = rng.uniform(35, 70)
        for week in range(1, weeks + 1):
            monday = ANCHOR + timedelta(days=7 * (week - 1))
            n_cases = rng.poisson(base * (1.0 + 0.3 * np.sin(week / 3.0)))
            for i in range(max(int(n_cases), 1)):
                rid += 1
                symptom = monday + timedelta(days=int(rng.integers(0, 7)))
                died = rng.random() < 0.3
                obit = ""
                if died:
                    lag_days = int(rng.integers(8, 23))
                    obit = (symptom + timedelta(days=lag_days)).isoformat()
                notif = muni if rng.random() < 0.8 else munis[int(rng.integers(len(munis)))]
                cases_lines.append(
                    f"r{rid},{symptom.isoformat()},{obit},{muni},{notif},{str(died).lower()}"
                )
    (root / "cases.csv").write_text("\n".join(cases_lines) + "\n")

    mob_lines = ["entity_code,week_start,residential,workplace,parks,transit,grocery,retail"]
    for muni in munis:
        shift = rng.uniform(-5, 5)
        for week in range(1, weeks + 1):
            monday = (ANCHOR + timedelta(days=7 * (week - 1))).isoformat()
            res = 10 + shift + 3 * np.sin(week / 2.0) + rng.normal(0, 2)
            work = -15 - shift + 2 * np.cos(week / 2.0) + rng.normal(0, 2)
            extras = [
                f"{rng.normal(-10, 5):.3f}" if rng.random() > 0.3 else ""
                for _ in range(4)
            ]
            mob_lines.append(
                f"{muni},{monday},{res:.3f},{work:.3f}," + ",".join(extras)
            )
    (root / "mobility.csv").write_text("\n".join(mob_lines) + "\n")

    vac_lines = ["entity_code,date,dose,source"]
    for muni in munis:
        for week in range(1, weeks + 1):
            monday = ANCHOR + timedelta(days=7 * (week - 1))
            for _ in range(int(rng.poisson(2.0))):
                day = (monday + timedelta(days=int(rng.integers(0, 7)))).isoformat()
                dose = "first" if rng.random() < 0.7 else "second"
                vac_lines.append(f"{muni},{day},{dose},campaign")
            if rng.random() < 0.4:
                day = (monday + timedelta(days=int(rng.integers(0, 7)))).isoformat()
                vac_lines.append(f"{muni},{day},,srag")
    (root / "vaccination.csv").write_text("\n".join(vac_lines) + "\n")

    count_lines = ["channel,term,state_code,week_start,count"]
    for state in MUNICIPALITIES:
        for week in range(1, weeks + 1):
            monday = (ANCHOR + timedelta(days=7 * (week - 1))).isoformat()
            for term in GT_TERMS:
                count_lines.append(
                    f"gt,{term},{state},{monday},{int(rng.poisson(5))}"
                )
    (root / "counts.csv").write_text("\n".join(count_lines) + "\n")

    title_lines = ["state_code,week_start,title"]
    for state in MUNICIPALITIES:
        for week in range(1, weeks + 1):
            monday = (ANCHOR + timedelta(days=7 * (week - 1))).isoformat()
            for _ in range(int(rng.integers(2, 6))):
                template = TITLE_POOL[int(rng.integers(len(TITLE_POOL)))]
                title_lines.append(f"{state},{monday},{template.format(s=state)}")
    (root / "titles.csv").write_text("\n".join(title_lines) + "\n")


def write_run_config(root, out_name="out", **overrides):
    """TOML run config pointing at the record-level inputs in `root`."""
    run_keys = {
        "sample": "full_2020_2021",
        "geography": "residence",
        "vaccination_source": "campaign",
        "mobility_set": "reduced",
        "estimator": "within_fe",
        "dependents": "both",
    }
    run_keys.update({k: v for k, v in overrides.items() if k in
                     ("sample", "geography", "vaccination_source", "mobility_set",
                      "estimator", "dependents", "vaccination_block")})
    lines = [
        "[inputs]",
        'cases = "cases.csv"',
        'mobility = "mobility.csv"',
        'vaccination = "vaccination.csv"',
        'counts = "counts.csv"',
        'titles = "titles.csv"',
        "",
        "[panel]",
        "start = 2020-05-03",
        f"weeks = {overrides.get('weeks', WEEKS)}",
        "",
        "[run]",
        f'out = "{out_name}"',
    ]
    for key, value in run_keys.items():
        if isinstance(value, bool):
            lines.append(f"{key} = {str(value).lower()}")
        else:
            lines.append(f'{key} = "{value}"')
    path = root / "run.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def record_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("records")
    write_record_inputs(root)
    return root
