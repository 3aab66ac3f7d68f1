"""
Harrell's concordance index.

File: hdsurv/src/nonparam/concordance.py
"""
import numpy as np

from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError


def concordance_counts(time: np.ndarray, event: np.ndarray, risk: np.ndarray) -> tuple:
    """
    Count concordant pairs among comparable ones.

    A pair (i, j) is comparable when subject i had an event and Y_i < Y_j.
    It is concordant when risk_i > risk_j; tied scores count one half.

    Returns:
        (concordant weight, number of comparable pairs)
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    risk = np.asarray(risk, dtype=float)
    order = np.argsort(time, kind="stable")
    time, event, risk = time[order], event[order], risk[order]

    concordant = 0.0
    comparable = 0
    for i in np.flatnonzero(event):
        later = slice(np.searchsorted(time, time[i], side="right"), None)
        others = risk[later]
        if others.size == 0:
            continue
        comparable += others.size
        concordant += np.sum(risk[i] > others) + 0.5 * np.sum(risk[i] == others)
    return float(concordant), comparable


def c_index(ds: SurvivalDataset, risk_scores: np.ndarray) -> float:
    """
    Harrell's C: fraction of comparable pairs ordered correctly by risk.

    Args:
        ds: Dataset (time, event)
        risk_scores: Higher means shorter expected survival

    Returns:
        Concordance in [0, 1]

    Raises:
        DegenerateDataError: No comparable pairs
    """
    risk_scores = np.asarray(risk_scores, dtype=float).reshape(-1)
    if risk_scores.shape[0] != ds.n:
        raise DimensionError(f"Expected {ds.n} risk scores, got {risk_scores.shape[0]}")
    concordant, comparable = concordance_counts(ds.time, ds.event, risk_scores)
    if comparable == 0:
        raise DegenerateDataError("No comparable pairs for the concordance index")
    return concordant / comparable
