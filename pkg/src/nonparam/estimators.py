"""
Product-limit and cumulative-hazard estimators.

At a shared timestamp events precede censorings: a subject censored at t is
still in the risk set of an event at t.

File: hdsurv/src/nonparam/estimators.py
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError
from src.nonparam.step_function import StepFunction

logger = logging.getLogger(__name__)

Outcome = Union[SurvivalDataset, Tuple[np.ndarray, np.ndarray]]


def _arrays(data: Outcome) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(data, SurvivalDataset):
        time, event = data.time, data.event
    else:
        time, event = data
    time = np.asarray(time, dtype=float).reshape(-1)
    event = np.asarray(event, dtype=bool).reshape(-1)
    if time.size == 0:
        raise DegenerateDataError("Estimator requires at least one observation")
    return time, event


def event_table(
    time: np.ndarray, event: np.ndarray, weights: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Distinct event times with risk-set sizes and event counts.

    Args:
        time: Observed times
        event: Event indicators
        weights: Optional case weights (bootstrap multiplicities)

    Returns:
        (event_times, at_risk, deaths) where at_risk[k] = sum of weights with time >= t_k
    """
    w = np.ones_like(time) if weights is None else np.asarray(weights, dtype=float)
    event_times = np.unique(time[event])
    order = np.argsort(time, kind="stable")
    sorted_time = time[order]
    tail = np.concatenate((np.cumsum(w[order][::-1])[::-1], [0.0]))
    at_risk = tail[np.searchsorted(sorted_time, event_times, side="left")]
    deaths = np.zeros(event_times.size)
    if event_times.size:
        idx = np.searchsorted(event_times, time[event])
        np.add.at(deaths, idx, w[event])
    return event_times, at_risk, deaths


def kaplan_meier(data: Outcome, weights: Optional[np.ndarray] = None) -> StepFunction:
    """
    Kaplan-Meier survival curve.

    Args:
        data: SurvivalDataset or (time, event) arrays
        weights: Optional case weights

    Returns:
        Right-continuous survival StepFunction with knots at distinct event times

    Raises:
        DegenerateDataError: Empty input
    """
    time, event = _arrays(data)
    event_times, at_risk, deaths = event_table(time, event, weights)
    factors = np.where(at_risk > 0, 1.0 - deaths / np.where(at_risk > 0, at_risk, 1.0), 1.0)
    values = np.clip(np.cumprod(factors), 0.0, 1.0)
    return StepFunction(event_times, values, left_value=1.0)


def nelson_aalen(data: Outcome, weights: Optional[np.ndarray] = None) -> StepFunction:
    """
    Nelson-Aalen cumulative hazard.

    Args:
        data: SurvivalDataset or (time, event) arrays
        weights: Optional case weights

    Returns:
        Non-decreasing StepFunction starting at 0

    Raises:
        DegenerateDataError: Empty input
    """
    time, event = _arrays(data)
    event_times, at_risk, deaths = event_table(time, event, weights)
    increments = np.where(at_risk > 0, deaths / np.where(at_risk > 0, at_risk, 1.0), 0.0)
    return StepFunction(event_times, np.cumsum(increments), left_value=0.0)


def aalen_johansen(ds: SurvivalDataset, cause: int = 1) -> StepFunction:
    """
    Nonparametric cumulative incidence of one cause under competing risks.

    Datasets without cause labels are treated as single-cause (every event is
    cause 1), which reduces the estimate to 1 - Kaplan-Meier.

    Args:
        ds: Dataset, optionally carrying `causes`
        cause: Cause label (>= 1)

    Returns:
        Non-decreasing StepFunction starting at 0
    """
    time, event = _arrays(ds)
    causes = ds.causes if ds.causes is not None else event.astype(int)
    event_times, at_risk, deaths = event_table(time, event)
    cause_deaths = np.zeros(event_times.size)
    hits = causes == cause
    if hits.any():
        np.add.at(cause_deaths, np.searchsorted(event_times, time[hits]), 1.0)
    else:
        logger.warning(f"No events of cause {cause}; cumulative incidence is identically 0")

    safe = np.where(at_risk > 0, at_risk, 1.0)
    surv = np.cumprod(1.0 - deaths / safe)
    surv_before = np.concatenate(([1.0], surv[:-1]))
    cif = np.cumsum(surv_before * cause_deaths / safe)
    return StepFunction(event_times, np.clip(cif, 0.0, 1.0), left_value=0.0)
