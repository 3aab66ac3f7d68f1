"""
Semi-competing risks: the gamma-frailty illness-death model and cumulative incidence utilities.

File: hdsurv/src/scr/__init__.py
"""
from src.scr.cif import CifModel, cif_predict
from src.scr.illness_death import (
    PathSample,
    ScrFit,
    ScrHyperparameters,
    ScrMode,
    ScrOptions,
    ScrParameters,
    TransitionCurves,
    bootstrap_theta_ci,
    conditional_log_likelihood,
    default_grid,
    fit_scr,
    log_risk_sweep,
    marginal_neg_log_likelihood,
    neg_log_likelihood_and_gradient,
    pack_parameters,
    predict_transitions,
    printed_form_neg_log_likelihood,
    record_neg_log_likelihoods,
    sample_paths,
    simulate_fitted_paths,
    transition_hazards,
    unpack_parameters,
)
from src.scr.log_risk import LinearLogRisk, LogRisk, NetworkLogRisk

__all__ = [
    "CifModel",
    "LinearLogRisk",
    "LogRisk",
    "NetworkLogRisk",
    "PathSample",
    "ScrFit",
    "ScrHyperparameters",
    "ScrMode",
    "ScrOptions",
    "ScrParameters",
    "TransitionCurves",
    "bootstrap_theta_ci",
    "cif_predict",
    "conditional_log_likelihood",
    "default_grid",
    "fit_scr",
    "log_risk_sweep",
    "marginal_neg_log_likelihood",
    "neg_log_likelihood_and_gradient",
    "pack_parameters",
    "predict_transitions",
    "printed_form_neg_log_likelihood",
    "record_neg_log_likelihoods",
    "sample_paths",
    "simulate_fitted_paths",
    "transition_hazards",
    "unpack_parameters",
]
