"""Marginal likelihood and automatic relevance determination for regularized
linear regression: closed-form evidence, an analytic divergence gate, bounded
search for the finite optimum, a quadrature oracle, and a reproducible Monte
Carlo estimator."""

from .errors import (
    EbregError,
    GroupStructureError,
    IngestionError,
    MonteCarloError,
    QuadratureConvergenceError,
    QuasiconcavityError,
    SingularDesignError,
    UnsupportedClosedFormError,
    WhiteningError,
)
from .estimator import (
    ArdVerdict,
    LambdaEstimate,
    ard_gate,
    ard_gate_problem,
    bracket_upper,
    estimate_lambda,
    estimate_lambda_problem,
    golden_section_max,
    map_subgradient_residual,
    map_weights,
    scan_unimodal,
)
from .evidence import (
    Asymptote,
    EvidenceCurve,
    EvidencePoint,
    asymptote,
    closed_form_curve,
    d_log_z,
    d_log_z_group_lasso,
    has_closed_form,
    lambda_grid,
    log_z,
    log_z_group_lasso,
    log_z_lasso,
    log_z_lasso_1d,
    log_z_ridge,
)
from .model import (
    Dataset,
    GroupStructure,
    RegularizerKind,
    RegularizerSpec,
    WhitenedProblem,
    builtin_sigma_w_sq,
    load_dataset,
    load_groups,
)
from .monte_carlo import MCConfig, MCEstimate, mc_curve, mc_log_z, sample_prior
from .oracle import (
    QuadratureResult,
    argmax_lambda_oracle,
    polar_log_z_gl3,
    quad_log_z,
    quad_log_z_grid,
    quad_moments,
)
from .reduction import (
    WhiteningReport,
    check_whitened,
    decompose_by_groups,
    reduce,
    whiten,
)
from .special import erfcx, log_erfcx

__version__ = "0.1.0"
