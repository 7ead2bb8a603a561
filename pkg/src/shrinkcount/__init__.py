"""Penalized maximum likelihood shrinkage for bounded count data."""

from .count_models import (
    CountDataset,
    ModelFamily,
    ModelParams,
    VariableData,
    betabinom_logpmf,
    binom_logpmf,
    log_likelihood,
    logpmf,
    mean_proportion,
    mle_fit,
    zib_logpmf,
)
from .cross_validation import (
    CVResult,
    FoldPlan,
    default_lambda_grid,
    make_folds,
    min_cv_select,
    vfcv,
)
from .errors import (
    ConfigError,
    ConstraintError,
    DomainError,
    FamilyMismatch,
    InvalidV,
    ParseError,
    ShrinkCountError,
    UnsupportedPenalty,
)
from .estimator import FitRequest, FitResult, closed_form_binomial, fit, fit_penalized, regularization_path
from .penalties import PenaltyKind, PenaltySpec, inverse_normal_cdf, penalty_value

__version__ = "0.1.0"
