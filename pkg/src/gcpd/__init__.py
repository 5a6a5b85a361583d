"""Change point estimation and inference for dynamic graphical models.

Estimate the location of a single covariance-structure switch in a
multivariate time-ordered series via lasso neighborhood regressions and a
two-segment prediction-loss scan, then construct confidence intervals for
the switch index under both the vanishing and non-vanishing jump-size limit
laws.
"""

from . import bench, changepoint, inference, ingest, lasso, numstats, simulate
from .bench import BenchmarkReport, emit_table, run_replications
from .changepoint import (
    ChangePointFit,
    algorithm1,
    algorithm2,
    initialize,
    q_loss,
    scan_argmin,
    u_criterion,
)
from .errors import (
    EmptyAfterFilter,
    EmptySample,
    GcpdError,
    HorizonTooSmall,
    MissingColumn,
    NotPositiveDefinite,
    NumericalError,
    ReferenceHasZeros,
    SegmentTooShort,
    SingularDesign,
    UserInputError,
    ZeroJump,
)
from .inference import (
    ConfidenceInterval,
    NonvanishingMcSettings,
    RegimeParams,
    VanishingMcSettings,
    ZetaSeries,
    confidence_interval,
    drift_estimates,
    estimate_regime_params,
    fit_increment_law,
    jump_stats,
    quantile_nonvanishing,
    quantile_vanishing,
    refit,
    variance_estimates,
    zeta_series,
)
from .ingest import IngestConfig, ingest as ingest_table
from .lasso import (
    EdgeEstimates,
    LassoConfig,
    bic_select,
    default_lambda_grid,
    lasso_fit,
    neighborhood_fit,
)
from .numstats import (
    KsResult,
    Rng,
    chisq_cdf,
    chisq_sample,
    cholesky,
    ks_test,
    ols_on_support,
    sample_mvn,
)
from .simulate import (
    CovarianceSpec,
    ScenarioConfig,
    build_post_covariance,
    build_pre_covariance,
    generate_series,
    table_scenario,
)

__version__ = "0.1.0"
