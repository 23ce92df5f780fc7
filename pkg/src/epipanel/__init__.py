"""Weekly epidemiological panels: construction, keyword-count controls,
causal DAG queries, and fixed-effects / dynamic-panel estimation."""

from .errors import (
    ConfigurationError,
    DataError,
    EstimationError,
    IdentifiabilityError,
    PipelineError,
    SpecificationError,
    UnderIdentifiedError,
)
from .panel import (
    SummaryStats,
    VariableRole,
    WeeklyPanel,
    describe,
    lag,
    log_growth,
    rolling_mean,
    within_transform,
)
from .dag import (
    AdjustmentResult,
    CausalDag,
    backdoor_sets,
    d_separated,
    derive_controls,
    full_sample_dag,
    is_acyclic,
    restrict_2020,
    sub_2020_dag,
)
from .estimators import (
    AbOptions,
    Design,
    Estimator,
    FitResult,
    ModelSpec,
    build_design,
    f_test,
    fit,
    fit_arellano_bond,
    fit_within,
)
from .report import RegressionTable, TableColumn, compound_effect, render_table, significance_stars
from .scm import RecoveryResult, ScmParams, SimOutput, recovery_experiment, recovery_spec, simulate

__version__ = "0.1.0"

__all__ = [
    "AbOptions",
    "AdjustmentResult",
    "CausalDag",
    "ConfigurationError",
    "DataError",
    "Design",
    "EstimationError",
    "Estimator",
    "FitResult",
    "IdentifiabilityError",
    "ModelSpec",
    "PipelineError",
    "RecoveryResult",
    "RegressionTable",
    "ScmParams",
    "SimOutput",
    "SpecificationError",
    "SummaryStats",
    "TableColumn",
    "UnderIdentifiedError",
    "VariableRole",
    "WeeklyPanel",
    "backdoor_sets",
    "build_design",
    "compound_effect",
    "d_separated",
    "derive_controls",
    "describe",
    "f_test",
    "fit",
    "fit_arellano_bond",
    "fit_within",
    "full_sample_dag",
    "is_acyclic",
    "lag",
    "log_growth",
    "recovery_experiment",
    "recovery_spec",
    "render_table",
    "restrict_2020",
    "rolling_mean",
    "significance_stars",
    "simulate",
    "sub_2020_dag",
    "within_transform",
    "__version__",
]
