"""
Marginal feature screening for ultra-high-dimensional covariates.

File: hdsurv/src/cox/screening.py
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from src.cox.partial_likelihood import fit_mple
from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError, NumericalError
from src.models.base import ResultBase
from src.nonparam.concordance import c_index
from src.scheduler.jobs import JobScheduler

logger = logging.getLogger(__name__)


class ThresholdRule(str, Enum):
    """How the kept set is chosen from the scores."""
    TOP_D = "top_d"
    SCORE_CUTOFF = "score_cutoff"


@dataclass
class ScreenResult(ResultBase):
    """Marginal importance scores and the retained columns."""
    scores: np.ndarray
    kept: List[int]
    threshold_rule: ThresholdRule
    d: int
    method: str
    feature_names: tuple = ()
    cutoff: Optional[float] = None
    zero_variance: List[int] = field(default_factory=list)
    not_converged: List[int] = field(default_factory=list)

    def apply(self, ds: SurvivalDataset) -> SurvivalDataset:
        """Dataset restricted to the kept columns."""
        return ds.select_columns(self.kept)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "scores": self.scores.tolist(),
            "kept": list(self.kept),
            "kept_names": [self.feature_names[j] for j in self.kept] if self.feature_names else [],
            "threshold_rule": self.threshold_rule.value,
            "d": self.d,
            "cutoff": self.cutoff,
            "zero_variance": list(self.zero_variance),
            "not_converged": list(self.not_converged),
        }


def default_d(n: int) -> int:
    """Conventional retention size floor(n / log n)."""
    return max(1, int(math.floor(n / math.log(n)))) if n > 1 else 1


def top_d(scores: np.ndarray, d: int) -> List[int]:
    """Indices of the d largest scores; ties go to the lower index."""
    order = np.lexsort((np.arange(scores.size), -scores))
    return sorted(int(j) for j in order[:d])


def _select(
    scores: np.ndarray,
    d: Optional[int],
    n: int,
    cutoff: Optional[float],
) -> tuple:
    p = scores.size
    if cutoff is not None:
        kept = [int(j) for j in np.flatnonzero(scores >= cutoff)]
        return kept, ThresholdRule.SCORE_CUTOFF, len(kept)
    d = default_d(n) if d is None else d
    if not 1 <= d:
        raise DimensionError(f"Screening size d must be >= 1, got {d}")
    d = min(d, p)
    return top_d(scores, d), ThresholdRule.TOP_D, d


def _check_d(d: Optional[int], p: int) -> None:
    if d is not None and not 1 <= d <= p:
        raise DimensionError(f"Screening size d must lie in [1, {p}], got {d}")


def marginal_cox_screen(
    ds: SurvivalDataset,
    d: Optional[int] = None,
    cutoff: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> ScreenResult:
    """
    Sure independence screening by univariate Cox fits.

    Args:
        ds: Dataset
        d: Number of columns to keep (default floor(n / log n), capped at p)
        cutoff: Keep every column scoring at least this instead of top-d
        n_jobs: Workers for the marginal fits

    Returns:
        ScreenResult with scores |beta_j|
    """
    _check_d(d, ds.p)
    ds.require_events()
    sds = ds.X.std(axis=0)
    zero_variance = [int(j) for j in np.flatnonzero(~(sds > 0))]
    for j in zero_variance:
        logger.warning(f"Screening column {ds.feature_names[j]} has zero variance; score set to 0")

    def score(j: int) -> tuple:
        if j in zero_variance:
            return 0.0, True
        try:
            fit = fit_mple(ds.select_columns([j]))
        except (NumericalError, DegenerateDataError) as e:
            logger.warning(f"Marginal fit for {ds.feature_names[j]} failed: {e}")
            return 0.0, False
        if not fit.converged:
            return 0.0, False
        return float(abs(fit.beta[0])), True

    results = JobScheduler(n_jobs=n_jobs, name="screening").map(score, range(ds.p))
    scores = np.array([r[0] for r in results])
    not_converged = [j for j, r in enumerate(results) if not r[1]]
    for j in not_converged:
        logger.warning(f"Marginal Cox fit for {ds.feature_names[j]} did not converge; score set to 0")

    kept, rule, size = _select(scores, d, ds.n, cutoff)
    logger.info(f"Marginal Cox screening kept {len(kept)} of {ds.p} columns")
    return ScreenResult(
        scores=scores,
        kept=kept,
        threshold_rule=rule,
        d=size,
        method="marginal_cox",
        feature_names=ds.feature_names,
        cutoff=cutoff,
        zero_variance=zero_variance,
        not_converged=not_converged,
    )


def concordance_screen(
    ds: SurvivalDataset,
    d: Optional[int] = None,
    cutoff: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> ScreenResult:
    """
    Screening by |C_j - 0.5| with column j used as the risk score.

    Args:
        ds: Dataset
        d: Number of columns to keep
        cutoff: Keep every column scoring at least this instead of top-d
        n_jobs: Workers

    Returns:
        ScreenResult with concordance-based scores
    """
    _check_d(d, ds.p)
    ds.require_events()

    def score(j: int) -> float:
        return abs(c_index(ds, ds.X[:, j]) - 0.5)

    scores = np.asarray(JobScheduler(n_jobs=n_jobs, name="screening").map(score, range(ds.p)), dtype=float)
    kept, rule, size = _select(scores, d, ds.n, cutoff)
    logger.info(f"Concordance screening kept {len(kept)} of {ds.p} columns")
    return ScreenResult(
        scores=scores,
        kept=kept,
        threshold_rule=rule,
        d=size,
        method="concordance",
        feature_names=ds.feature_names,
        cutoff=cutoff,
    )
