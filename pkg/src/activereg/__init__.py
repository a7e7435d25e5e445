"""Online selection of observations to label for linear regression.

Observations stream past one at a time; each is whitened, its weighted norm
is compared against a threshold tuned to the labeling budget, and only the
selected rows are labeled and used for the final fit.
"""

from .bounds import (
    BoundKind,
    BoundReport,
    check_diag_trace_lemma,
    lower_bound_clt,
    lower_bound_gaussian,
    lower_bound_pointwise,
    ridge_bound_report,
    upper_bound_gaussian,
    upper_bound_main,
    upper_bound_sparse,
)
from .datagen import (
    Dataset,
    DistributionKind,
    DistributionSpec,
    ResponseSpec,
    gen_responses,
    make_model,
    make_rng,
    sample_observations,
)
from .errors import (
    ActiveRegError,
    BudgetError,
    DegenerateSupportError,
    DomainError,
    MomentInconsistencyError,
    NumericFailure,
    ParseError,
    RankDeficiencyError,
    SampleTooSmallError,
    ShapeError,
    StateError,
)
from .estimators import (
    FitMethod,
    LinearFit,
    LinearModel,
    fit_lasso,
    fit_ols,
    fit_ridge,
    lasso_regularization,
    ridge_mse_bound,
)
from .harness import ExperimentConfig, ExperimentReport, load_csv_dataset, mse_sigma_norm, run_experiment, summarize_report
from .numerics import chi2_quantile, eig_sym, normal_quantile, spd_inverse_trace
from .selectors import (
    LabeledStream,
    SparseConfig,
    adaptive_selector,
    fixed_selector,
    run_sparse_two_stage,
    run_stream,
    step_adaptive,
    step_fixed,
)
from .thresholds import (
    BudgetState,
    ThresholdMethod,
    ThresholdRule,
    clt_threshold,
    estimate_phi,
    gaussian_threshold,
    solve_threshold_empirical,
    threshold_at_rate,
)
from .whitening import (
    OnlineCovarianceState,
    WhiteningTransform,
    fit_covariance_batch,
    whitening_from_covariance,
)

__version__ = "0.1.0"
