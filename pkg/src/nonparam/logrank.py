"""
Two-sample log-rank test.

`logrank` compares two datasets; `logrank_split_scan` evaluates every
threshold split of one covariate at once and is what tree growing uses.
Both share the same observed-minus-expected and hypergeometric variance
terms.

File: hdsurv/src/nonparam/logrank.py
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from scipy import stats

from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError

logger = logging.getLogger(__name__)


@dataclass
class LogRankResult:
    """Chi-square statistic (1 df) and its asymptotic p-value."""
    statistic: float
    p_value: float
    observed_minus_expected: float
    variance: float

    def to_dict(self) -> Dict[str, Any]:
        return {"statistic": self.statistic, "p_value": self.p_value}

    def __getitem__(self, key: str) -> float:
        return self.to_dict()[key]


def _risk_and_death_matrices(
    time: np.ndarray, event: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subject-by-event-time at-risk and death indicators."""
    event_times = np.unique(time[event])
    at_risk = time[:, None] >= event_times[None, :]
    deaths = event[:, None] & (time[:, None] == event_times[None, :])
    return event_times, at_risk.astype(float), deaths.astype(float)


def _statistic(
    y_group: np.ndarray, d_group: np.ndarray, y_total: np.ndarray, d_total: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    O - E and variance summed over event times.

    Arrays carry event times on the last axis; leading axes broadcast so a
    whole set of candidate groupings is evaluated together.
    """
    safe_y = np.where(y_total > 0, y_total, 1.0)
    frac = y_group / safe_y
    o_minus_e = np.sum(d_group - frac * d_total, axis=-1)
    ties = np.where(y_total > 1, (y_total - d_total) / np.where(y_total > 1, y_total - 1.0, 1.0), 0.0)
    variance = np.sum(frac * (1.0 - frac) * ties * d_total, axis=-1)
    return o_minus_e, variance


def logrank_arrays(time: np.ndarray, event: np.ndarray, in_group_a: np.ndarray) -> LogRankResult:
    """
    Log-rank test from pooled arrays and a group mask.

    Args:
        time: Pooled observed times
        event: Pooled event indicators
        in_group_a: True for members of the first group

    Returns:
        LogRankResult

    Raises:
        DegenerateDataError: A group is empty or there are no events
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    mask = np.asarray(in_group_a, dtype=bool)
    if not mask.any() or mask.all():
        raise DegenerateDataError("Log-rank test needs two non-empty groups")
    if not event.any():
        raise DegenerateDataError("Log-rank test needs at least one event")

    _, at_risk, deaths = _risk_and_death_matrices(time, event)
    o_minus_e, variance = _statistic(
        at_risk[mask].sum(axis=0), deaths[mask].sum(axis=0), at_risk.sum(axis=0), deaths.sum(axis=0)
    )
    statistic = float(o_minus_e**2 / variance) if variance > 0 else 0.0
    return LogRankResult(
        statistic=statistic,
        p_value=float(stats.chi2.sf(statistic, df=1)),
        observed_minus_expected=float(o_minus_e),
        variance=float(variance),
    )


def logrank(group_a: SurvivalDataset, group_b: SurvivalDataset) -> LogRankResult:
    """
    Two-sample log-rank chi-square test.

    Args:
        group_a: First group
        group_b: Second group

    Returns:
        LogRankResult with statistic and p_value
    """
    if group_a.n == 0 or group_b.n == 0:
        raise DegenerateDataError("Log-rank test needs two non-empty groups")
    time = np.concatenate((group_a.time, group_b.time))
    event = np.concatenate((group_a.event, group_b.event))
    mask = np.concatenate((np.ones(group_a.n, dtype=bool), np.zeros(group_b.n, dtype=bool)))
    return logrank_arrays(time, event, mask)


@dataclass
class SplitScan:
    """Log-rank statistics for every threshold split of one covariate."""
    thresholds: np.ndarray
    statistics: np.ndarray
    left_counts: np.ndarray
    left_events: np.ndarray
    right_events: np.ndarray


def logrank_split_scan(time: np.ndarray, event: np.ndarray, x: np.ndarray) -> SplitScan:
    """
    Evaluate the split x <= threshold for every midpoint between sorted unique values.

    Args:
        time: Node observed times
        event: Node event indicators
        x: Covariate values in the node

    Returns:
        SplitScan (empty arrays when x is constant or there are no events)
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    boundary = np.flatnonzero(xs[1:] > xs[:-1])
    if boundary.size == 0 or not event.any():
        empty = np.empty(0)
        return SplitScan(empty, empty, empty.astype(int), empty.astype(int), empty.astype(int))

    _, at_risk, deaths = _risk_and_death_matrices(time[order], event[order])
    y_left = np.cumsum(at_risk, axis=0)[boundary]
    d_left = np.cumsum(deaths, axis=0)[boundary]
    o_minus_e, variance = _statistic(y_left, d_left, at_risk.sum(axis=0), deaths.sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        statistics = np.where(variance > 0, o_minus_e**2 / np.where(variance > 0, variance, 1.0), 0.0)

    left_events = np.cumsum(event[order])[boundary]
    return SplitScan(
        thresholds=(xs[boundary] + xs[boundary + 1]) / 2.0,
        statistics=statistics,
        left_counts=boundary + 1,
        left_events=left_events,
        right_events=int(event.sum()) - left_events,
    )
