"""Regression-table assembly and rendering, plus the effect-compounding rule.

Column layout: cases at lags m = 1..4, then deaths at m = 2..4 (deaths trail
first symptoms by at least a week, so m = 1 is never a deaths column). Coefficients print at four significant figures
with strict-threshold significance stars; standard errors print below in
parentheses at three significant figures with trailing zeros kept; absent
statistics print as ".".
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import SpecificationError
from .estimators import FitResult

CASES_LAGS = (1, 2, 3, 4)
DEATHS_LAGS = (2, 3, 4)

MOBILITY_ROWS = ("residential", "workplace", "parks", "transit", "grocery", "retail")
VACCINATION_ROWS = ("1st_dose", "2nd_dose", "srag_vac", "vac")
N_ROWS = ("n_covid", "n_prevention", "n_fakenews", "n_vaccines", "n_general")
GT_ROWS = ("gt_covid", "gt_prevention", "gt_fakenews", "gt_vaccines", "gt_general")

INTERCEPT_ROW = "_cons"
MISSING = "."


def significance_stars(p: float) -> str:
    """Strict thresholds: *** below 0.001, ** below 0.01, * below 0.05."""
    if math.isnan(p) or not 0.0 <= p <= 1.0:
        raise SpecificationError(f"p-value {p} outside [0, 1]")
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def compound_effect(magnitudes) -> float:
    """Week-by-week compounding of per-horizon effects: prod(1 + |b|) - 1.

    This is the upper-bound reading of the per-lag coefficients: it always
    weakly exceeds their plain sum. An empty list has no meaningful bound and
    is rejected.
    """
    values = [abs(float(v)) for v in magnitudes]
    if not values:
        raise SpecificationError("compound effect over no horizons is meaningless")
    product = 1.0
    for v in values:
        product *= 1.0 + v
    return product - 1.0


def format_coefficient(value: float) -> str:
    """Four significant figures, shortest form."""
    return f"{value:.4g}"


def format_se(value: float) -> str:
    """Three significant figures, trailing zeros kept (0.0037 -> 0.00370)."""
    if value == 0.0:
        return "0"
    decimals = 2 - math.floor(math.log10(abs(value)))
    return f"{value:.{max(decimals, 0)}f}"


def format_footer_stat(value: float | None) -> str:
    if value is None:
        return MISSING
    return f"{value:.4g}"


def format_pvalue(value: float | None) -> str:
    if value is None:
        return MISSING
    if value == 0.0:
        return "0"
    return f"{value:.3g}"


@dataclass(frozen=True)
class TableColumn:
    label: str  # dependent label, e.g. "cases"
    m: int
    fit: FitResult


@dataclass(frozen=True)
class RegressionTable:
    columns: tuple[TableColumn, ...]

    def __post_init__(self) -> None:
        labels = []
        for col in self.columns:
            if col.label not in labels:
                labels.append(col.label)
        expected: list[tuple[str, int]] = []
        for label in labels:
            lags = CASES_LAGS if label == "cases" else DEATHS_LAGS
            expected.extend((label, m) for m in lags)
        actual = [(c.label, c.m) for c in self.columns]
        if actual != expected:
            raise SpecificationError(
                f"column layout {actual} does not follow the cases m=1..4 / "
                f"deaths m=2..4 pattern"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        seen = []
        for col in self.columns:
            if col.label not in seen:
                seen.append(col.label)
        return tuple(seen)

    def row_names(self) -> list[str]:
        """Mobility, vaccination, news indexes, search indexes, other
        regressors, trend, dependent lags, intercept. Time dummies are
        estimated but not displayed."""
        present: list[str] = []
        seen = set()
        for col in self.columns:
            for name in col.fit.coefficients:
                if name not in seen:
                    seen.add(name)
                    present.append(name)
        dep_lag = re.compile(rf"^({'|'.join(map(re.escape, self.labels))})_([1-9])$")
        ordered: list[str] = []
        for group in (MOBILITY_ROWS, VACCINATION_ROWS, N_ROWS, GT_ROWS):
            ordered.extend(n for n in group if n in seen)
        known = set(ordered)
        other = sorted(
            n
            for n in present
            if n not in known
            and not n.startswith("week_")
            and n != "trend"
            and not dep_lag.match(n)
        )
        ordered.extend(other)
        if any("trend" in c.fit.coefficients for c in self.columns):
            ordered.append("trend")
        for label in self.labels:
            lags = sorted(
                int(m.group(2))
                for n in present
                if (m := dep_lag.match(n)) and m.group(1) == label
            )
            ordered.extend(f"{label}_{h}" for h in lags)
        ordered.append(INTERCEPT_ROW)
        return ordered


def _cells(table: RegressionTable) -> tuple[list[str], list[list[str]], list[list[str]], list[tuple[str, list[str]]]]:
    """Row labels, coefficient cells, SE cells, footer rows (shared by all
    output formats so every format carries identical numbers)."""
    rows = table.row_names()
    pvalues = [col.fit.p_values() for col in table.columns]
    coef_cells: list[list[str]] = []
    se_cells: list[list[str]] = []
    for name in rows:
        coefs: list[str] = []
        ses: list[str] = []
        for col, col_p in zip(table.columns, pvalues):
            if name == INTERCEPT_ROW:
                b = col.fit.intercept
                if b is None:
                    coefs.append(MISSING)
                    ses.append("")
                    continue
                coefs.append(format_coefficient(b))
                ses.append("")
                continue
            if name not in col.fit.coefficients:
                coefs.append("")
                ses.append("")
                continue
            b = col.fit.coefficients[name]
            coefs.append(format_coefficient(b) + significance_stars(col_p[name]))
            ses.append(f"({format_se(col.fit.std_errors[name])})")
        coef_cells.append(coefs)
        se_cells.append(ses)
    footer = [
        ("R2", [format_footer_stat(c.fit.r2_within) for c in table.columns]),
        ("R2_overall", [format_footer_stat(c.fit.r2_overall) for c in table.columns]),
        ("N", [str(c.fit.n_obs) for c in table.columns]),
        ("p", [format_pvalue(c.fit.f_pvalue) for c in table.columns]),
    ]
    return rows, coef_cells, se_cells, footer


def render_table(table: RegressionTable, fmt: str = "text") -> str:
    """Deterministic text, csv, or latex rendering of a regression table."""
    if fmt == "text":
        return _render_text(table)
    if fmt == "csv":
        return _render_csv(table)
    if fmt == "latex":
        return _render_latex(table)
    raise SpecificationError(f"unknown table format {fmt!r}")


def _render_text(table: RegressionTable) -> str:
    rows, coef_cells, se_cells, footer = _cells(table)
    head_num = [f"({i + 1})" for i in range(len(table.columns))]
    head_lab = [c.label for c in table.columns]
    head_m = [f"m={c.m}" for c in table.columns]
    body: list[list[str]] = [[""] + head_num, [""] + head_lab, [""] + head_m]
    for name, coefs, ses in zip(rows, coef_cells, se_cells):
        body.append([name] + coefs)
        if any(ses):
            body.append([""] + ses)
    footer_rows = [[label] + cells for label, cells in footer]
    widths = [
        max(len(line[i]) for line in body + footer_rows)
        for i in range(len(table.columns) + 1)
    ]
    sep = "-" * (sum(widths) + 2 * len(widths))

    def fmt_line(line: list[str]) -> str:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(widths[i + 1]) for i, cell in enumerate(line[1:])]
        return "  ".join([first] + rest).rstrip()

    out = [sep]
    out.extend(fmt_line(line) for line in body[:3])
    out.append(sep)
    out.extend(fmt_line(line) for line in body[3:])
    out.append(sep)
    out.extend(fmt_line(line) for line in footer_rows)
    out.append(sep)
    out.append("Standard errors in parentheses")
    out.append("* p<0.05, ** p<0.01, *** p<0.001")
    return "\n".join(out) + "\n"


def _render_csv(table: RegressionTable) -> str:
    rows, coef_cells, se_cells, footer = _cells(table)
    lines = [",".join([""] + [f"{c.label} m={c.m}" for c in table.columns])]
    for name, coefs, ses in zip(rows, coef_cells, se_cells):
        lines.append(",".join([name] + coefs))
        if any(ses):
            lines.append(",".join([""] + ses))
    for label, cells in footer:
        lines.append(",".join([label] + cells))
    return "\n".join(lines) + "\n"


def _latex_escape(text: str) -> str:
    return text.replace("_", r"\_")


def _render_latex(table: RegressionTable) -> str:
    rows, coef_cells, se_cells, footer = _cells(table)
    k = len(table.columns)
    out = [
        r"\begin{tabular}{l" + "c" * k + "}",
        r"\hline\hline",
        " & ".join([""] + [f"({i + 1})" for i in range(k)]) + r" \\",
        " & ".join([""] + [_latex_escape(c.label) for c in table.columns]) + r" \\",
        " & ".join([""] + [f"m={c.m}" for c in table.columns]) + r" \\",
        r"\hline",
    ]
    for name, coefs, ses in zip(rows, coef_cells, se_cells):
        out.append(" & ".join([_latex_escape(name)] + [_latex_escape(c) for c in coefs]) + r" \\")
        if any(ses):
            out.append(" & ".join([""] + ses) + r" \\")
    out.append(r"\hline")
    for label, cells in footer:
        out.append(" & ".join([_latex_escape(label)] + cells) + r" \\")
    out.extend(
        [
            r"\hline\hline",
            r"\multicolumn{%d}{l}{Standard errors in parentheses} \\" % (k + 1),
            r"\multicolumn{%d}{l}{* p<0.05, ** p<0.01, *** p<0.001} \\" % (k + 1),
            r"\end{tabular}",
        ]
    )
    return "\n".join(out) + "\n"
