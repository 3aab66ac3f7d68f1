"""
Cox proportional hazards: partial likelihood, penalties, penalized paths, screening.

File: hdsurv/src/cox/__init__.py
"""
from src.cox.coxnet import (
    PathFit,
    adaptive_weights,
    cross_validate,
    eta_max,
    fit_path,
    fit_penalized,
    penalized_objective,
)
from src.cox.partial_likelihood import (
    CoxFit,
    CoxObjective,
    fit_mple,
    neg_log_partial_likelihood,
    predict_survival,
    score_and_hessian,
)
from src.cox.penalties import (
    PenaltyKind,
    PenaltySpec,
    penalty_value,
    prox,
    rbf_column_kernel,
    scad_derivative,
)
from src.cox.screening import ScreenResult, ThresholdRule, concordance_screen, marginal_cox_screen

__all__ = [
    "CoxFit",
    "CoxObjective",
    "PathFit",
    "PenaltyKind",
    "PenaltySpec",
    "ScreenResult",
    "ThresholdRule",
    "adaptive_weights",
    "concordance_screen",
    "cross_validate",
    "eta_max",
    "fit_mple",
    "fit_path",
    "fit_penalized",
    "marginal_cox_screen",
    "neg_log_partial_likelihood",
    "penalized_objective",
    "penalty_value",
    "predict_survival",
    "prox",
    "rbf_column_kernel",
    "scad_derivative",
    "score_and_hessian",
]
