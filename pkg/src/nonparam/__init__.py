"""
Nonparametric estimators and rank metrics.

File: hdsurv/src/nonparam/__init__.py
"""
from src.nonparam.concordance import c_index
from src.nonparam.estimators import aalen_johansen, event_table, kaplan_meier, nelson_aalen
from src.nonparam.logrank import LogRankResult, logrank, logrank_arrays, logrank_split_scan
from src.nonparam.step_function import StepFunction

__all__ = [
    "StepFunction",
    "aalen_johansen",
    "c_index",
    "event_table",
    "kaplan_meier",
    "logrank",
    "logrank_arrays",
    "logrank_split_scan",
    "LogRankResult",
    "nelson_aalen",
]
