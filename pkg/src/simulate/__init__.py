"""
Seeded simulation designs and the quadrature likelihood oracle.

File: hdsurv/src/simulate/__init__.py
"""
from src.simulate.generators import (
    CensoringSpec,
    ErrorFamily,
    IllnessDeathDraw,
    SimKind,
    SimSpec,
    calibrate_censoring_rate,
    draw_covariates,
    draw_frailty,
    draw_illness_death,
    observation_patterns,
    simulate,
)
from src.simulate.quadrature import gamma_laguerre_rule, oracle_quadrature_likelihood

__all__ = [
    "CensoringSpec",
    "ErrorFamily",
    "IllnessDeathDraw",
    "SimKind",
    "SimSpec",
    "calibrate_censoring_rate",
    "draw_covariates",
    "draw_frailty",
    "draw_illness_death",
    "gamma_laguerre_rule",
    "observation_patterns",
    "oracle_quadrature_likelihood",
    "simulate",
]
