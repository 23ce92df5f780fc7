"""Synthetic panels from the structural causal model behind the estimators.

The generator wires exactly the edges of the identification DAG: exogenous
count-valued search/news series, optional vaccination, an unobservable
behavior series B that is an exact linear function of its parents, mobility
driven by (V, B, general series), and a growth-rate recursion with entity and
week effects. Because B has zero residual, conditioning on its parents is
provably sufficient inside the simulator, which is what makes the recovery
experiments meaningful.

Draw order is fixed (entity effects, week effects, soft series, vaccination,
mobility noise, outcome noise, once per dependent) so a seed pins the output
bit for bit.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, EstimationError
from .estimators import Estimator, ModelSpec, build_design, fit_within
from .panel import WeeklyPanel

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib

BURN_IN_WEEKS = 5
DEFAULT_ANCHOR = date(2020, 5, 4)

MOBILITY_NAMES = ("residential", "workplace", "parks", "transit", "grocery", "retail")
SOFT_NAMES = ("gt_general", "gt_prevention", "n_general", "n_prevention")
VACCINATION_NAME = "vac"
BEHAVIOR_NAME = "B"


@dataclass(frozen=True)
class ScmParams:
    """True parameters of the data-generating process.

    `true_beta` holds one mobility effect per generated mobility series;
    `b_weights` are B's exact loadings on (gt_prevention, n_prevention,
    previous growth); `x_coeffs` are the mobility equation's loadings on
    (vaccination, B, gt_general, n_general).
    """

    entity_count: int = 60
    week_count: int = 40
    true_beta: tuple[float, ...] = (-0.05,)
    true_phi: tuple[float, float, float, float] = (-0.4, -0.2, -0.1, -0.05)
    beta0: float = 0.1
    gamma_b: float = 0.05
    eta_b: float = 0.05
    gamma_g: float = 0.0
    eta_g: float = 0.0
    nu: float = -0.02
    b_weights: tuple[float, float, float] = (1.0, 1.0, 0.5)
    x_coeffs: tuple[float, float, float, float] = (0.3, 1.0, 0.2, 0.2)
    x_entity_sd: float = 1.0
    x_noise_sd: float = 1.0
    soft_mean: float = 5.0
    vac_mean: float = 3.0
    noise_sd: float = 0.2
    entity_effect_sd: float = 0.1
    time_effect_sd: float = 0.1
    regressor_lag: int = 1
    include_vaccination: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if sum(abs(p) for p in self.true_phi) >= 1.0:
            raise ConfigurationError("lag polynomial must satisfy sum |phi_h| < 1")
        if self.week_count < 10:
            raise ConfigurationError("week_count must be at least 10")
        if self.entity_count < 2:
            raise ConfigurationError("need at least two entities")
        if not 1 <= len(self.true_beta) <= len(MOBILITY_NAMES):
            raise ConfigurationError(
                f"true_beta needs 1..{len(MOBILITY_NAMES)} mobility effects"
            )
        if not 1 <= self.regressor_lag <= 4:
            raise ConfigurationError("regressor_lag outside 1..4")
        for name in (
            "x_entity_sd",
            "x_noise_sd",
            "noise_sd",
            "entity_effect_sd",
            "time_effect_sd",
            "soft_mean",
            "vac_mean",
        ):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")

    @property
    def mobility_names(self) -> tuple[str, ...]:
        return MOBILITY_NAMES[: len(self.true_beta)]


@dataclass(frozen=True)
class SimOutput:
    panel: WeeklyPanel
    truth: ScmParams
    dependents: tuple[str, ...]


def load_sim_params(path) -> ScmParams:
    """Read ScmParams from a flat TOML table; lists become tuples."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = set(ScmParams.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown simulation keys: {sorted(unknown)}")
    cleaned = {
        k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()
    }
    return ScmParams(**cleaned)


def simulate(
    params: ScmParams,
    dependents: Sequence[str] = ("cases",),
    anchor: date = DEFAULT_ANCHOR,
) -> SimOutput:
    """Generate a weekly panel from the structural model.

    Variables: `dlog_<dep>` growth rates for each requested dependent, the
    mobility series, `vac` (when vaccination is on), the four soft series,
    and the latent `B`. The first five weeks wash out the zero-initialized
    lag recursion and are dropped from the panel.

    With two dependents the behavior feedback through lagged growth must be
    off (`b_weights[2] == 0`), otherwise mobility would need one value per
    dependent.
    """
    dependents = tuple(dependents)
    if not dependents or len(set(dependents)) != len(dependents):
        raise ConfigurationError("dependents must be distinct and nonempty")
    if len(dependents) > 1 and params.b_weights[2] != 0.0:
        raise ConfigurationError(
            "multiple dependents need b_weights[2] == 0 (no growth feedback into B)"
        )
    n = params.entity_count
    total = BURN_IN_WEEKS + params.week_count
    m = params.regressor_lag
    rng = np.random.default_rng(params.seed)

    # documented draw order; everything is drawn up front
    x_entity = rng.normal(0.0, params.x_entity_sd, size=(len(params.true_beta), n))
    alpha = rng.normal(0.0, params.entity_effect_sd, size=(len(dependents), n))
    delta = rng.normal(0.0, params.time_effect_sd, size=(len(dependents), total))
    soft = {
        name: rng.poisson(params.soft_mean, size=(n, total)).astype(float)
        for name in SOFT_NAMES
    }
    vac = (
        rng.poisson(params.vac_mean, size=(n, total)).astype(float)
        if params.include_vaccination
        else np.zeros((n, total))
    )
    x_noise = rng.normal(0.0, params.x_noise_sd, size=(len(params.true_beta), n, total))
    shocks = rng.normal(0.0, params.noise_sd, size=(len(dependents), n, total))

    w_gb, w_nb, w_lag = params.b_weights
    c_v, c_b, c_gg, c_ng = params.x_coeffs
    growth = np.zeros((len(dependents), n, total))
    b_series = np.zeros((n, total))
    mobility = np.zeros((len(params.true_beta), n, total))
    for t in range(total):
        lag_growth = growth[0, :, t - 1] if t >= 1 else np.zeros(n)
        b_series[:, t] = (
            w_gb * soft["gt_prevention"][:, t]
            + w_nb * soft["n_prevention"][:, t]
            + w_lag * lag_growth
        )
        for v in range(len(params.true_beta)):
            mobility[v, :, t] = (
                c_v * vac[:, t]
                + c_b * b_series[:, t]
                + c_gg * soft["gt_general"][:, t]
                + c_ng * soft["n_general"][:, t]
                + x_entity[v]
                + x_noise[v, :, t]
            )
        for d in range(len(dependents)):
            level = np.full(n, params.beta0)
            if t - m >= 0:
                for v, beta in enumerate(params.true_beta):
                    level = level + beta * mobility[v, :, t - m]
                level = level + params.gamma_g * soft["gt_general"][:, t - m]
                level = level + params.gamma_b * soft["gt_prevention"][:, t - m]
                level = level + params.eta_g * soft["n_general"][:, t - m]
                level = level + params.eta_b * soft["n_prevention"][:, t - m]
                if params.include_vaccination:
                    level = level + params.nu * vac[:, t - m]
            for h, phi in enumerate(params.true_phi, start=1):
                if t - h >= 0:
                    level = level + phi * growth[d, :, t - h]
            growth[d, :, t] = level + alpha[d] + delta[d, t] + shocks[d, :, t]

    keep = slice(BURN_IN_WEEKS, total)
    entities = tuple(f"e{i:04d}" for i in range(n))
    panel = WeeklyPanel(entities, anchor, params.week_count)
    for v, name in enumerate(params.mobility_names):
        panel = panel.with_variable(name, mobility[v, :, keep])
    if params.include_vaccination:
        panel = panel.with_variable(VACCINATION_NAME, vac[:, keep])
    for name in SOFT_NAMES:
        panel = panel.with_variable(name, soft[name][:, keep])
    for d, dep in enumerate(dependents):
        panel = panel.with_variable(f"dlog_{dep}", growth[d, :, keep])
    panel = panel.with_variable(BEHAVIOR_NAME, b_series[:, keep], latent=True)
    return SimOutput(panel=panel, truth=params, dependents=dependents)


def recovery_spec(
    params: ScmParams,
    controls: Sequence[str] = ("vaccination", "soft_behavioral", "dep_lags"),
    dependent: str = "cases",
) -> ModelSpec:
    """ModelSpec matching the simulator's variable names for the given
    control blocks."""
    blocks = set(controls)
    soft: tuple[str, ...] = ()
    if "soft_behavioral" in blocks:
        soft = soft + ("gt_prevention", "n_prevention")
    if "soft_general" in blocks:
        soft = soft + ("gt_general", "n_general")
    vaccination: tuple[str, ...] = ()
    if "vaccination" in blocks:
        if not params.include_vaccination:
            raise ConfigurationError("vaccination block requested but channel is off")
        vaccination = (VACCINATION_NAME,)
    return ModelSpec(
        dependent=f"dlog_{dependent}",
        regressor_lag=params.regressor_lag,
        mobility_vars=params.mobility_names,
        vaccination_vars=vaccination,
        soft_vars=soft,
        dep_lag_count=4 if "dep_lags" in blocks else 0,
        time_dummies=True,
        estimator=Estimator.WITHIN_FE,
    )


@dataclass(frozen=True)
class RecoveryResult:
    """Monte Carlo summary for the first mobility coefficient."""

    coverage_rate: float
    mean_bias: float
    mean_se: float
    mean_estimate: float
    n_seeds: int
    n_failures: int
    estimates: tuple[float, ...] = field(repr=False, default=())
    std_errors: tuple[float, ...] = field(repr=False, default=())


def recovery_experiment(
    params: ScmParams,
    spec: ModelSpec,
    n_seeds: int,
    target: str | None = None,
) -> RecoveryResult:
    """Simulate, fit, and score `n_seeds` replications.

    Coverage counts |estimate - truth| <= 1.96 SE for the target mobility
    coefficient. Estimation failures are excluded and counted.
    """
    if n_seeds < 1:
        raise ConfigurationError("need at least one seed")
    target = target or params.mobility_names[0]
    truth = dict(zip(params.mobility_names, params.true_beta))[target]
    estimates: list[float] = []
    ses: list[float] = []
    failures = 0
    for i in range(n_seeds):
        run = replace(params, seed=params.seed + i)
        sim = simulate(run)
        try:
            fit = fit_within(build_design(sim.panel, spec))
        except EstimationError:
            failures += 1
            continue
        estimates.append(fit.coefficients[target])
        ses.append(fit.std_errors[target])
    if not estimates:
        raise EstimationError("every replication failed")
    est = np.array(estimates)
    se = np.array(ses)
    covered = np.abs(est - truth) <= 1.96 * se
    return RecoveryResult(
        coverage_rate=float(covered.mean()),
        mean_bias=float((est - truth).mean()),
        mean_se=float(se.mean()),
        mean_estimate=float(est.mean()),
        n_seeds=n_seeds,
        n_failures=failures,
        estimates=tuple(est.tolist()),
        std_errors=tuple(se.tolist()),
    )
