"""Panel estimators: two-way fixed effects (within) and dynamic-panel GMM.

The regression form is a weekly growth rate on lag-m regressors, four lags of
the growth rate itself, entity effects (removed by demeaning) and time
dummies. The dynamic-panel estimator works on first differences with lagged
levels of the dependent variable as instruments (one-step weighting with the
standard first-difference covariance pattern).

All kernels are double precision numpy; fits are pure functions of their
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .errors import (
    EstimationError,
    SpecificationError,
    UnderIdentifiedError,
)
from .panel import WeeklyPanel, within_transform

COLLINEARITY_RTOL = 1e-10
MAX_REGRESSOR_LAG = 4
MAX_DEP_LAGS = 4


class Estimator(str, Enum):
    WITHIN_FE = "within_fe"
    ARELLANO_BOND = "arellano_bond"


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one regression column.

    `regressor_lag` (m) shifts every mobility / soft / vaccination regressor;
    the dependent always enters with `dep_lag_count` of its own lags. Deaths
    equations need m >= 2: nobody dies in the week of first symptoms.
    """

    dependent: str
    regressor_lag: int = 1
    mobility_vars: tuple[str, ...] = ()
    vaccination_vars: tuple[str, ...] = ()
    soft_vars: tuple[str, ...] = ()
    dep_lag_count: int = 4
    time_dummies: bool = True
    trend: bool = False
    estimator: Estimator = Estimator.WITHIN_FE
    dependent_kind: str = "cases"
    cluster: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.regressor_lag <= MAX_REGRESSOR_LAG:
            raise SpecificationError(
                f"regressor lag {self.regressor_lag} outside 1..{MAX_REGRESSOR_LAG}"
            )
        if self.dependent_kind not in ("cases", "deaths"):
            raise SpecificationError(f"unknown dependent kind {self.dependent_kind!r}")
        if self.dependent_kind == "deaths" and self.regressor_lag < 2:
            raise SpecificationError("deaths specifications need regressor lag >= 2")
        if not 0 <= self.dep_lag_count <= MAX_DEP_LAGS:
            raise SpecificationError(
                f"dependent lag count {self.dep_lag_count} outside 0..{MAX_DEP_LAGS}"
            )
        blocks = [self.mobility_vars, self.vaccination_vars, self.soft_vars]
        flat = [v for block in blocks for v in block]
        if len(set(flat)) != len(flat):
            raise SpecificationError("a variable appears in two regressor blocks")
        if self.dependent in flat:
            raise SpecificationError("dependent variable cannot also be a regressor")

    @property
    def block_vars(self) -> tuple[str, ...]:
        return self.mobility_vars + self.vaccination_vars + self.soft_vars

    def dep_lag_name(self, h: int) -> str:
        stem = self.dependent
        if stem.startswith("dlog_"):
            stem = stem[len("dlog_") :]
        return f"{stem}_{h}"


@dataclass(frozen=True)
class AbOptions:
    """One-step dynamic-panel settings; `instrument_lag_depth` is the number
    of dependent-level lags used as instruments (depth d -> lags 2..d+1).
    Only one-step estimation is implemented; `step` exists to reject anything
    else loudly."""

    instrument_lag_depth: int = 4
    include_trend: bool = True
    step: str = "one_step"

    def __post_init__(self) -> None:
        if self.instrument_lag_depth < 1:
            raise SpecificationError("instrument lag depth must be >= 1")
        if self.step != "one_step":
            raise SpecificationError(f"unsupported GMM step {self.step!r}")


@dataclass(frozen=True)
class FitResult:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    intercept: float | None
    r2_within: float | None
    r2_overall: float | None
    n_obs: int
    f_pvalue: float | None
    entity_count: int
    week_count: int
    n_params: int
    dof_resid: int | None

    def p_values(self) -> dict[str, float]:
        """Two-sided coefficient p-values: t with the residual dof for within
        fits, normal for GMM fits."""
        out = {}
        for name, b in self.coefficients.items():
            se = self.std_errors[name]
            if se == 0.0:
                out[name] = 0.0 if b != 0.0 else 1.0
                continue
            z = abs(b / se)
            if self.dof_resid is not None and self.dof_resid > 0:
                out[name] = float(2.0 * stats.t.sf(z, self.dof_resid))
            else:
                out[name] = float(2.0 * stats.norm.sf(z))
        return out


@dataclass(frozen=True)
class Design:
    """Complete-case stacked design: one row per usable (entity, week)."""

    x: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    entities: tuple[str, ...]
    weeks: tuple[int, ...]
    spec: ModelSpec | None = field(default=None, compare=False)


def _shift(grid: np.ndarray, k: int) -> np.ndarray:
    out = np.full_like(grid, np.nan)
    if k == 0:
        return grid.astype(float, copy=True)
    if k < grid.shape[1]:
        out[:, k:] = grid[:, :-k]
    return out


def _level_columns(panel: WeeklyPanel, spec: ModelSpec) -> list[tuple[str, np.ndarray]]:
    """Named level grids aligned to equation time t, blocks first, then
    dependent lags."""
    for var in (spec.dependent,) + spec.block_vars:
        if var not in panel.variables:
            raise SpecificationError(f"spec variable {var!r} missing from panel")
    cols: list[tuple[str, np.ndarray]] = []
    m = spec.regressor_lag
    for var in spec.block_vars:
        cols.append((var, _shift(panel.grid(var), m)))
    dep = panel.grid(spec.dependent)
    for h in range(1, spec.dep_lag_count + 1):
        cols.append((spec.dep_lag_name(h), _shift(dep, h)))
    names = [c[0] for c in cols]
    if len(set(names)) != len(names):
        raise SpecificationError(f"duplicate design columns: {sorted(names)}")
    return cols


def build_design(panel: WeeklyPanel, spec: ModelSpec) -> Design:
    """Stack complete cases of the spec's equation.

    The dependent is expected to already be a growth-rate series (see
    `log_growth`). Regressor blocks enter at lag m, dependent lags at 1..H;
    time dummies are one-hot over the surviving weeks with the first as
    reference.
    """
    cols = _level_columns(panel, spec)
    y = panel.grid(spec.dependent)
    stack = np.stack([grid for _, grid in cols], axis=2) if cols else None
    keep_rows: list[tuple[int, int]] = []
    for i in range(len(panel.entities)):
        for t in panel.weeks:
            if np.isnan(y[i, t - 1]):
                continue
            if stack is not None and np.isnan(stack[i, t - 1]).any():
                continue
            keep_rows.append((i, t))
    if not keep_rows:
        raise EstimationError("no complete cases for this specification")
    idx = np.array([i for i, _ in keep_rows])
    ts = np.array([t for _, t in keep_rows])
    columns = [name for name, _ in cols]
    parts = [stack[idx, ts - 1, :]] if stack is not None else []
    if spec.trend:
        parts.append(ts[:, None].astype(float))
        columns.append("trend")
    if spec.time_dummies:
        weeks_in = sorted(set(ts.tolist()))
        for w in weeks_in[1:]:
            parts.append((ts == w).astype(float)[:, None])
            columns.append(f"week_{w}")
    x = np.hstack(parts) if parts else np.empty((len(keep_rows), 0))
    if len(set(columns)) != len(columns):
        raise SpecificationError(f"duplicate design columns: {columns}")
    return Design(
        x=x,
        y=y[idx, ts - 1],
        columns=tuple(columns),
        entities=tuple(panel.entities[i] for i in idx),
        weeks=tuple(int(t) for t in ts),
        spec=spec,
    )


def _collinearity_check(
    x: np.ndarray, columns, raw_scale: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD plus a singular-value screen naming the offending columns.

    `raw_scale` (largest column norm before demeaning) anchors the threshold
    so a design whose demeaned columns are all numerically zero (for example
    an entity-constant regressor) is caught rather than producing a division
    by a rounding residue.
    """
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    threshold = COLLINEARITY_RTOL * max(s[0] if s.size else 0.0, raw_scale)
    if s.size and (s[-1] < threshold or threshold == 0.0):
        bad = sorted(
            {
                columns[j]
                for i in range(s.size)
                if s[i] < threshold or threshold == 0.0
                for j in np.nonzero(np.abs(vt[i]) > 1e-8)[0]
            }
        )
        raise EstimationError(f"collinear design columns: {', '.join(bad)}")
    return u, s, vt


def _canonical_order(design: Design) -> np.ndarray:
    codes = {e: i for i, e in enumerate(sorted(set(design.entities)))}
    ent = np.array([codes[e] for e in design.entities])
    return np.lexsort((np.array(design.weeks), ent))


def fit_within(design: Design, cluster: bool | None = None) -> FitResult:
    """Entity-demeaned least squares with classical standard errors.

    Slopes and SEs agree with explicit entity-dummy OLS; degrees of freedom
    subtract one per entity; the intercept is the observation-weighted mean
    of the recovered entity effects, leaving the centered effects summing to
    zero over observations.
    """
    if cluster is None:
        cluster = bool(design.spec.cluster) if design.spec is not None else False
    order = _canonical_order(design)
    x = design.x[order]
    y = design.y[order]
    rows = [design.entities[i] for i in order]
    weeks = [design.weeks[i] for i in order]
    n, k = x.shape
    groups = sorted(set(rows))
    n_groups = len(groups)
    if n_groups < 2:
        raise EstimationError("within estimation needs at least two entities")
    xd, x_means = within_transform(x, rows) if k else (x, {g: np.zeros(0) for g in groups})
    yd, y_means = within_transform(y, rows)
    dof = n - k - n_groups
    if dof < 1:
        raise EstimationError(
            f"no residual degrees of freedom (n={n}, k={k}, entities={n_groups})"
        )
    if k:
        raw_scale = float(np.linalg.norm(x, axis=0).max())
        u, s, vt = _collinearity_check(xd, design.columns, raw_scale)
        beta = vt.T @ ((u.T @ yd) / s)
        resid = yd - xd @ beta
        xtx_inv = (vt.T / s**2) @ vt
    else:
        beta = np.zeros(0)
        resid = yd.copy()
        xtx_inv = np.zeros((0, 0))
    ssr = float(resid @ resid)
    tss = float(yd @ yd)
    sigma2 = ssr / dof
    if cluster and k:
        labels = np.array([groups.index(r) for r in rows])
        meat = np.zeros((k, k))
        for g in range(n_groups):
            sel = labels == g
            score = xd[sel].T @ resid[sel]
            meat += np.outer(score, score)
        scale = (n_groups / (n_groups - 1)) * ((n - 1) / dof)
        cov = scale * xtx_inv @ meat @ xtx_inv
    else:
        cov = sigma2 * xtx_inv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    counts = {g: 0 for g in groups}
    for r in rows:
        counts[r] += 1
    raw_effects = {
        g: float(y_means[g] - (x_means[g] @ beta if k else 0.0)) for g in groups
    }
    beta0 = sum(counts[g] * raw_effects[g] for g in groups) / n
    if tss > 0:
        r2_within = 1.0 - ssr / tss
    else:
        r2_within = 1.0 if ssr == 0.0 else 0.0
    fitted_raw = x @ beta if k else np.zeros(n)
    r2_overall = 0.0
    if k and np.std(fitted_raw) > 0 and np.std(y) > 0:
        r2_overall = float(np.corrcoef(y, fitted_raw)[0, 1] ** 2)
    f_pvalue = _f_pvalue(r2_within, k, dof)
    return FitResult(
        coefficients=dict(zip(design.columns, beta.tolist())),
        std_errors=dict(zip(design.columns, se.tolist())),
        intercept=float(beta0),
        r2_within=float(r2_within),
        r2_overall=r2_overall,
        n_obs=n,
        f_pvalue=f_pvalue,
        entity_count=n_groups,
        week_count=len(set(weeks)),
        n_params=k,
        dof_resid=dof,
    )


def _f_pvalue(r2: float, k: int, dof: int) -> float | None:
    if k == 0 or dof <= 0:
        return None
    if r2 >= 1.0:
        return 0.0
    f_stat = (r2 / k) / ((1.0 - r2) / dof)
    return float(stats.f.sf(f_stat, k, dof))


def f_test(fit: FitResult) -> float | None:
    """Joint F test that every slope is zero, from a within fit. Missing (not
    an error) when the residual dof is exhausted."""
    if fit.r2_within is None:
        raise SpecificationError("F test requires a within fit with an R-squared")
    if fit.dof_resid is None or fit.dof_resid <= 0:
        return None
    return _f_pvalue(fit.r2_within, fit.n_params, fit.dof_resid)


# -- dynamic panel -------------------------------------------------------------


@dataclass(frozen=True)
class AbSystem:
    """First-differenced equation plus its instrument matrix."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    columns: tuple[str, ...]
    instrument_names: tuple[str, ...]
    entities: tuple[str, ...]
    weeks: tuple[int, ...]


def arellano_bond_system(
    panel: WeeklyPanel, spec: ModelSpec, options: AbOptions
) -> AbSystem:
    """Assemble differenced rows and the per-period instrument blocks.

    Moments: lagged dependent levels y_{t-s}, s = 2..depth+1, one instrument
    column per (t, s) pair (zero where the level is unavailable); strictly
    exogenous regressors instrument their own differences.
    """
    cols = _level_columns(panel, spec)
    names = [name for name, _ in cols]
    dep_lag_names = {spec.dep_lag_name(h) for h in range(1, spec.dep_lag_count + 1)}
    exog_idx = [j for j, name in enumerate(names) if name not in dep_lag_names]
    dep = panel.grid(spec.dependent)
    level = np.stack([g for _, g in cols], axis=2) if cols else None
    depth = options.instrument_lag_depth
    columns = list(names) + (["trend"] if options.include_trend else [])
    if spec.time_dummies:
        raise SpecificationError(
            "dynamic-panel estimation uses a trend, not time dummies"
        )
    rows_x: list[np.ndarray] = []
    rows_y: list[float] = []
    rows_entity: list[str] = []
    rows_week: list[int] = []
    inst_cells: list[dict[tuple[int, int], float]] = []
    for i in range(len(panel.entities)):
        for t in range(2, panel.n_weeks + 1):
            dy = dep[i, t - 1] - dep[i, t - 2]
            if np.isnan(dy):
                continue
            if level is not None:
                dx = level[i, t - 1, :] - level[i, t - 2, :]
                if np.isnan(dx).any():
                    continue
            else:
                dx = np.zeros(0)
            if options.include_trend:
                dx = np.append(dx, 1.0)
            cells = {}
            for s in range(2, depth + 2):
                if t - s >= 1 and not np.isnan(dep[i, t - s - 1]):
                    cells[(t, s)] = float(dep[i, t - s - 1])
            rows_x.append(dx)
            rows_y.append(float(dy))
            rows_entity.append(panel.entities[i])
            rows_week.append(t)
            inst_cells.append(cells)
    if not rows_x:
        raise EstimationError("no usable differenced observations")
    keys = sorted({key for cells in inst_cells for key in cells})
    z = np.zeros((len(rows_x), len(keys) + len(exog_idx)))
    key_pos = {key: j for j, key in enumerate(keys)}
    for r, cells in enumerate(inst_cells):
        for key, value in cells.items():
            z[r, key_pos[key]] = value
    x = np.vstack(rows_x)
    for j, col in enumerate(exog_idx):
        z[:, len(keys) + j] = x[:, col]
    if options.include_trend:
        # the differenced trend column instruments itself
        z = np.hstack([z, np.ones((len(rows_x), 1))])
        inst_names = [f"dep_l{s}_t{t}" for t, s in keys] + [names[j] for j in exog_idx] + ["trend"]
    else:
        inst_names = [f"dep_l{s}_t{t}" for t, s in keys] + [names[j] for j in exog_idx]
    nonzero = [j for j in range(z.shape[1]) if np.any(z[:, j] != 0.0)]
    z = z[:, nonzero]
    inst_names = [inst_names[j] for j in nonzero]
    return AbSystem(
        x=x,
        y=np.array(rows_y),
        z=z,
        columns=tuple(columns),
        instrument_names=tuple(inst_names),
        entities=tuple(rows_entity),
        weeks=tuple(rows_week),
    )


def _difference_weighting(entities, weeks) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-entity (row-index, H) blocks; H has 2 on the diagonal and -1 for
    adjacent periods, the covariance pattern of differenced white noise."""
    by_entity: dict[str, list[int]] = {}
    for r, e in enumerate(entities):
        by_entity.setdefault(e, []).append(r)
    blocks = []
    for e, idx in by_entity.items():
        ts = np.array([weeks[r] for r in idx])
        h = np.zeros((len(idx), len(idx)))
        for a in range(len(idx)):
            for b in range(len(idx)):
                if a == b:
                    h[a, b] = 2.0
                elif abs(ts[a] - ts[b]) == 1:
                    h[a, b] = -1.0
        blocks.append((np.array(idx), h))
    return blocks


def fit_arellano_bond(
    panel: WeeklyPanel, spec: ModelSpec, options: AbOptions | None = None
) -> FitResult:
    """One-step difference GMM for the dynamic growth equation.

    R-squared statistics are undefined under GMM and reported missing; the
    intercept differences out and is reported missing as well. The joint
    significance p-value is a Wald chi-squared over all coefficients.
    """
    if spec.estimator != Estimator.ARELLANO_BOND:
        raise SpecificationError("spec does not request the dynamic-panel estimator")
    if options is None:
        options = AbOptions(include_trend=spec.trend)
    system = arellano_bond_system(panel, spec, options)
    x, y, z = system.x, system.y, system.z
    n, k = x.shape
    if z.shape[1] < k:
        raise UnderIdentifiedError(
            f"{z.shape[1]} instruments for {k} parameters"
        )
    blocks = _difference_weighting(system.entities, system.weeks)
    zhz = np.zeros((z.shape[1], z.shape[1]))
    for idx, h in blocks:
        zi = z[idx]
        zhz += zi.T @ h @ zi
    u, s, vt = np.linalg.svd(zhz)
    if s[0] <= 0 or s[-1] < 1e-12 * s[0]:
        raise EstimationError("singular weighted instrument cross-product")
    a = (vt.T / s) @ u.T
    xz = x.T @ z
    zy = z.T @ y
    m = xz @ a @ xz.T
    try:
        beta = np.linalg.solve(m, xz @ a @ zy)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular GMM normal equations") from exc
    resid = y - x @ beta
    if n - k <= 0:
        raise EstimationError("no residual degrees of freedom in the differenced sample")
    sigma2 = float(resid @ resid) / (2.0 * (n - k))
    try:
        cov = sigma2 * np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular GMM normal equations") from exc
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    f_pvalue = None
    try:
        wald = float(beta @ np.linalg.solve(cov, beta))
        f_pvalue = float(stats.chi2.sf(wald, k))
    except np.linalg.LinAlgError:
        pass
    return FitResult(
        coefficients=dict(zip(system.columns, beta.tolist())),
        std_errors=dict(zip(system.columns, se.tolist())),
        intercept=None,
        r2_within=None,
        r2_overall=None,
        n_obs=n,
        f_pvalue=f_pvalue,
        entity_count=len(set(system.entities)),
        week_count=len(set(system.weeks)),
        n_params=k,
        dof_resid=None,
    )


def fit(panel: WeeklyPanel, spec: ModelSpec, options: AbOptions | None = None) -> FitResult:
    """Dispatch a spec to its estimator."""
    if spec.estimator == Estimator.ARELLANO_BOND:
        return fit_arellano_bond(panel, spec, options)
    return fit_within(build_design(panel, spec))
