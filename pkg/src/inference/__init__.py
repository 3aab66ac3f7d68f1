"""
Quantile regression under censoring and split-refit inference.

File: hdsurv/src/inference/__init__.py
"""
from src.inference.cqr import CqrFit, QuantileGrid, cqr_coefficient, cumulative_hazard_transform, fit_cqr
from src.inference.spares import (
    FamilyKind,
    FixedSelector,
    FusedCqrInference,
    LassoSelector,
    RefitFamily,
    ResampleInference,
    ScreenSelector,
    SeCorrection,
    aggregate,
    fused_hdcqr,
    partial_regression,
    spares_fit,
)

__all__ = [
    "CqrFit",
    "FamilyKind",
    "FixedSelector",
    "FusedCqrInference",
    "LassoSelector",
    "QuantileGrid",
    "RefitFamily",
    "ResampleInference",
    "ScreenSelector",
    "SeCorrection",
    "aggregate",
    "cqr_coefficient",
    "cumulative_hazard_transform",
    "fit_cqr",
    "fused_hdcqr",
    "partial_regression",
    "spares_fit",
]
