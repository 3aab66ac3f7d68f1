"""
Accelerated failure time models: simplex LP core and Dantzig selector.

File: hdsurv/src/aft/__init__.py
"""
from src.aft.dantzig import (
    DantzigCV,
    DantzigFit,
    adaptive_dantzig_weights,
    buckley_james_impute,
    center,
    cv_eta_q,
    dantzig_aft,
    dantzig_linear,
)
from src.aft.simplex import LPResult, solve_lp

__all__ = [
    "DantzigCV",
    "DantzigFit",
    "LPResult",
    "adaptive_dantzig_weights",
    "buckley_james_impute",
    "center",
    "cv_eta_q",
    "dantzig_aft",
    "dantzig_linear",
    "solve_lp",
]
