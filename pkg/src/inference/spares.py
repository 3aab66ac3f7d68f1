"""
Split-select-refit inference for high-dimensional coefficients.

Each resample splits the rows into two disjoint halves. A variable selector
runs on one half; on the other half every coefficient j is re-estimated from
a low-dimensional fit on the selected columns plus j. The refit estimates are
averaged over resamples, and their standard errors come from the covariance
between the inclusion indicators I_bi (subject i in the refit half of
resample b) and the refit estimates:

    se_j = sqrt( sum_i cov_b(I_bi, beta_j^b)^2 ).

The refit family is least squares, Cox partial likelihood or censored
quantile regression; the quantile family fused over a grid of levels gives
piecewise-constant coefficient functions of tau.

File: hdsurv/src/inference/spares.py
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator
from scipy.stats import norm
from sklearn.linear_model import LassoCV
from sklearn.model_selection import KFold

from src.config import settings
from src.cox.coxnet import cross_validate
from src.cox.partial_likelihood import dependent_columns, fit_mple
from src.cox.penalties import PenaltyKind, PenaltySpec
from src.cox.screening import default_d, marginal_cox_screen, top_d
from src.data.records import RegressionDataset, SurvivalDataset, standardize
from src.errors import (
    ConfigError,
    DegenerateDataError,
    DegenerateResampleError,
    DimensionError,
    EstimabilityError,
    NumericalError,
    RankDeficiencyError,
)
from src.inference.cqr import QuantileGrid, fit_cqr
from src.models.base import ResultBase
from src.nonparam.step_function import StepFunction
from src.scheduler.jobs import JobScheduler
from src.utils.metrics import metrics_collector

logger = logging.getLogger(__name__)

Dataset = Union[RegressionDataset, SurvivalDataset]
Selector = Callable[[Any], Sequence[int]]

Z_975 = float(norm.ppf(0.975))


class FamilyKind(str, Enum):
    """Low-dimensional refit model."""
    LINEAR = "linear"
    COX = "cox"
    CQR = "cqr"


class SeCorrection(str, Enum):
    """Standard-error variants."""
    NONE = "none"
    SUBSAMPLE = "subsample"
    FINITE_B = "finite_b"


class RefitFamily(BaseModel):
    """
    Refit model for the partial regressions.

    Attributes:
        kind: linear, cox or cqr
        taus: Quantile levels solved sequentially (cqr only); the reported
            coefficient is the one at the last level
    """
    kind: FamilyKind
    taus: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_levels(self) -> "RefitFamily":
        if self.kind == FamilyKind.CQR:
            if not self.taus:
                raise ValueError("cqr family requires quantile levels")
            levels = np.asarray(self.taus, dtype=float)
            if not (levels[0] > 0 and levels[-1] < 1) or np.any(np.diff(levels) <= 0):
                raise ValueError("cqr levels must be strictly increasing inside (0, 1)")
        elif self.taus is not None:
            raise ValueError(f"{self.kind.value} family takes no quantile levels")
        return self

    @classmethod
    def linear(cls) -> "RefitFamily":
        return cls(kind=FamilyKind.LINEAR)

    @classmethod
    def cox(cls) -> "RefitFamily":
        return cls(kind=FamilyKind.COX)

    @classmethod
    def cqr(cls, tau: float, grid: Optional[QuantileGrid] = None) -> "RefitFamily":
        """Quantile family at level tau, reached through the grid levels below it."""
        grid = grid or QuantileGrid.regular()
        below = [t for t in grid.taus if t < tau - 1e-12]
        return cls(kind=FamilyKind.CQR, taus=below + [float(tau)])

    @property
    def n_levels(self) -> int:
        return len(self.taus) if self.kind == FamilyKind.CQR else 1

    def check_data(self, data: Dataset) -> None:
        expected = RegressionDataset if self.kind == FamilyKind.LINEAR else SurvivalDataset
        if not isinstance(data, expected):
            raise ConfigError(
                f"{self.kind.value} family needs a {expected.__name__}, got {type(data).__name__}",
                field="family",
            )


def _refit_columns(data: Dataset, columns: List[int], family: RefitFamily) -> np.ndarray:
    """
    Coefficients of every column in `columns` from one low-dimensional fit.

    Returns:
        Array (n_levels, len(columns))
    """
    if len(columns) >= data.n:
        raise DimensionError(f"Refit on {len(columns)} columns needs more than {data.n} rows")
    X = data.X[:, columns]
    if family.kind == FamilyKind.LINEAR:
        collinear = dependent_columns(X)
        if collinear:
            names = [data.feature_names[columns[k]] for k in collinear]
            raise RankDeficiencyError(f"Collinear covariates: {names}", columns=[columns[k] for k in collinear])
        Z = np.column_stack([np.ones(data.n), X])
        coefficients = np.linalg.solve(Z.T @ Z, Z.T @ data.y)
        return coefficients[None, 1:]

    subset = data.select_columns(columns)
    if family.kind == FamilyKind.COX:
        return fit_mple(subset).beta[None, :]

    fit = fit_cqr(subset, QuantileGrid(tuple(family.taus)))
    if not fit.estimable.all():
        first = fit.grid.taus[int(np.argmin(fit.estimable))]
        raise EstimabilityError(f"Quantile level {first} is not estimable on this sample")
    return fit.coefficients[:, 1:]


def partial_regression(
    data: Dataset,
    selected: Sequence[int],
    j: int,
    family: Optional[RefitFamily] = None,
) -> float:
    """
    Coefficient of column j from the fit on columns selected + {j}.

    Args:
        data: Refit half (RegressionDataset for the linear family)
        selected: Selected column indices
        j: Target column
        family: Refit model (default linear)

    Returns:
        The coefficient of j (at the last quantile level for cqr)

    Raises:
        DimensionError: Too many columns for the rows available
        RankDeficiencyError: The columns are collinear
    """
    family = family or RefitFamily.linear()
    family.check_data(data)
    columns = sorted(set(int(k) for k in selected) | {int(j)})
    coefficients = _refit_columns(data, columns, family)
    return float(coefficients[-1, columns.index(int(j))])


def _all_partial_regressions(data: Dataset, selected: List[int], family: RefitFamily) -> np.ndarray:
    """Refit estimates for every column: shape (n_levels, p)."""
    out = np.zeros((family.n_levels, data.p))
    if selected:
        out[:, selected] = _refit_columns(data, selected, family)
    chosen = set(selected)
    for j in range(data.p):
        if j in chosen:
            continue
        columns = sorted(chosen | {j})
        out[:, j] = _refit_columns(data, columns, family)[:, columns.index(j)]
    return out


class FixedSelector:
    """Always returns the same support (oracle or user-supplied)."""

    def __init__(self, indices: Sequence[int]) -> None:
        self.indices = sorted(set(int(j) for j in indices))

    def __call__(self, data: Dataset) -> List[int]:
        return list(self.indices)


class ScreenSelector:
    """Top-d marginal screening (|correlation| for linear data, univariate Cox otherwise)."""

    def __init__(self, d: Optional[int] = None) -> None:
        self.d = d

    def __call__(self, data: Dataset) -> List[int]:
        d = min(self.d or default_d(data.n), data.p)
        if isinstance(data, RegressionDataset):
            Xc = data.X - data.X.mean(axis=0)
            yc = data.y - data.y.mean()
            norms = np.linalg.norm(Xc, axis=0) * np.linalg.norm(yc)
            scores = np.divide(np.abs(Xc.T @ yc), norms, out=np.zeros(data.p), where=norms > 0)
            return top_d(scores, d)
        return marginal_cox_screen(data, d=d, n_jobs=1).kept


class LassoSelector:
    """
    Lasso at the cross-validated tuning parameter.

    Least squares uses scikit-learn's LassoCV; survival data use the
    penalized Cox path with partial-likelihood CV.
    """

    def __init__(self, k: Optional[int] = None, seed: int = 0, n_etas: Optional[int] = None) -> None:
        self.k = k
        self.seed = seed
        self.n_etas = n_etas

    def __call__(self, data: Dataset) -> List[int]:
        k = min(self.k or settings.CV_FOLDS, data.n)
        if isinstance(data, RegressionDataset):
            folds = KFold(n_splits=k, shuffle=True, random_state=self.seed)
            model = LassoCV(cv=folds).fit(data.X, data.y)
            return [int(j) for j in np.flatnonzero(model.coef_)]
        path = cross_validate(
            standardize(data), PenaltySpec(kind=PenaltyKind.LASSO), k=k, seed=self.seed,
            n_etas=self.n_etas, n_jobs=1,
        )
        return [int(j) for j in np.flatnonzero(path.selected_beta)]


@dataclass
class ResampleInference(ResultBase):
    """
    Aggregated split-refit estimates.

    inclusion[b, i] is True when subject i was in the refit half of
    resample b; per_resample[b] holds that resample's refit estimates.
    """
    estimates: np.ndarray
    ses: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_values: np.ndarray
    B: int
    inclusion: np.ndarray
    per_resample: np.ndarray
    feature_names: Tuple[str, ...] = ()
    se_correction: str = SeCorrection.NONE.value
    skipped: int = 0
    degenerate: List[int] = field(default_factory=list)
    tau: Optional[float] = None

    def to_tidy(self) -> pd.DataFrame:
        """Table (j, feature, estimate, se, ci_lower, ci_upper, p)."""
        p = self.estimates.size
        table = pd.DataFrame({
            "j": np.arange(p),
            "feature": list(self.feature_names) if self.feature_names else [f"x{j + 1}" for j in range(p)],
            "estimate": self.estimates,
            "se": self.ses,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "p": self.p_values,
        })
        if self.tau is not None:
            table.insert(0, "tau", self.tau)
        return table

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimates": self.estimates.tolist(),
            "ses": self.ses.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "p_values": self.p_values.tolist(),
            "B": self.B,
            "feature_names": list(self.feature_names),
            "se_correction": self.se_correction,
            "skipped": self.skipped,
            "degenerate": list(self.degenerate),
            "tau": self.tau,
        }


def aggregate(
    inclusion: np.ndarray,
    per_resample: np.ndarray,
    n_refit: Optional[int] = None,
    se_correction: Union[SeCorrection, str] = SeCorrection.NONE,
    feature_names: Sequence[str] = (),
) -> ResampleInference:
    """
    Average refit estimates and attach delta-method standard errors.

    Args:
        inclusion: (B, n) refit-half indicators
        per_resample: (B, p) refit estimates
        n_refit: Refit half size (default floor(n/2)); used by the corrections
        se_correction: none (sum of squared covariances), subsample (scaled by
            n(n-1)/(n-n1)^2 for half-sampling) or finite_b (subsample minus the
            Monte-Carlo noise term n n1 / ((n-n1) B^2) sum_b (beta^b - beta)^2)
        feature_names: Column names

    Returns:
        ResampleInference
    """
    correction = SeCorrection(se_correction)
    inclusion = np.asarray(inclusion, dtype=bool)
    per_resample = np.asarray(per_resample, dtype=float)
    B, n = inclusion.shape
    if B < 2:
        raise ValueError(f"Aggregation needs at least 2 resamples, got {B}")
    if per_resample.shape[0] != B:
        raise DimensionError(f"{per_resample.shape[0]} estimate rows for {B} resamples")
    n1 = n // 2 if n_refit is None else n_refit

    estimates = per_resample.mean(axis=0)
    I = inclusion.astype(float)
    centered_I = I - I.mean(axis=0)
    centered_beta = per_resample - estimates
    covariance = centered_I.T @ centered_beta / (B - 1)
    variance = np.sum(covariance ** 2, axis=0)
    if correction != SeCorrection.NONE:
        variance = variance * n * (n - 1) / (n - n1) ** 2
    if correction == SeCorrection.FINITE_B:
        noise = n * n1 / ((n - n1) * B ** 2) * np.sum(centered_beta ** 2, axis=0)
        variance = np.maximum(variance - noise, 0.0)
    ses = np.sqrt(variance)

    degenerate = [int(j) for j in np.flatnonzero(ses == 0)]
    with np.errstate(divide="ignore", invalid="ignore"):
        p_values = np.where(ses > 0, 2.0 * norm.sf(np.abs(estimates) / ses), 0.0)
    p_values[(ses == 0) & (estimates == 0)] = 1.0
    if degenerate:
        logger.warning(f"Zero standard error for {len(degenerate)} coefficients")

    return ResampleInference(
        estimates=estimates,
        ses=ses,
        ci_lower=estimates - Z_975 * ses,
        ci_upper=estimates + Z_975 * ses,
        p_values=p_values,
        B=B,
        inclusion=inclusion,
        per_resample=per_resample,
        feature_names=tuple(feature_names),
        se_correction=correction.value,
        degenerate=degenerate,
    )


def _run_resamples(
    data: Dataset,
    selector: Selector,
    family: RefitFamily,
    B: int,
    seed: Optional[int],
    n_jobs: Optional[int],
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Draw B half-splits, select on one half and refit on the other.

    Returns:
        (inclusion (B', n), estimates (B', n_levels, p), skipped count)
    """
    if B < 2:
        raise ValueError(f"B must be >= 2, got {B}")
    family.check_data(data)
    n = data.n
    n1 = n // 2
    limit = n1 - 2
    survival = isinstance(data, SurvivalDataset)

    def one_resample(b: int, rng: np.random.Generator) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        order = rng.permutation(n)
        refit_idx, select_idx = np.sort(order[:n1]), np.sort(order[n1:])
        refit_half, select_half = data.subset(refit_idx), data.subset(select_idx)
        if survival and (refit_half.n_events == 0 or select_half.n_events == 0):
            raise DegenerateResampleError(f"Resample {b}: a half holds no events")
        try:
            selected = sorted(set(int(j) for j in selector(select_half)))
        except DegenerateDataError as e:
            raise DegenerateResampleError(f"Resample {b}: selection failed ({e})") from e
        if len(selected) > limit:
            logger.warning(f"Resample {b} skipped: {len(selected)} variables selected, limit is {limit}")
            metrics_collector.increment("resamples_skipped")
            return None
        try:
            estimates = _all_partial_regressions(refit_half, selected, family)
        except (NumericalError, DegenerateDataError, DimensionError) as e:
            raise DegenerateResampleError(f"Resample {b}: refit failed ({e})") from e
        inclusion = np.zeros(n, dtype=bool)
        inclusion[refit_idx] = True
        return inclusion, estimates

    outcomes = JobScheduler(n_jobs=n_jobs, name="resamples").map_seeded(one_resample, B, seed, raise_errors=True)
    kept = [o.value for o in outcomes if o.ok and o.value is not None]
    skipped = B - len(kept)
    if len(kept) < 2:
        raise DegenerateResampleError(f"Only {len(kept)} of {B} resamples were usable")
    if skipped:
        logger.warning(f"{skipped} of {B} resamples skipped")
    inclusion = np.vstack([k[0] for k in kept])
    estimates = np.stack([k[1] for k in kept])
    return inclusion, estimates, skipped


def spares_fit(
    data: Dataset,
    selector: Optional[Selector] = None,
    family: Optional[RefitFamily] = None,
    B: int = 100,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    se_correction: Union[SeCorrection, str] = SeCorrection.NONE,
) -> ResampleInference:
    """
    Split-select-refit estimates, standard errors, CIs and p-values for every column.

    Args:
        data: RegressionDataset (linear family) or SurvivalDataset
        selector: Callable mapping a half dataset to selected indices
            (default LassoSelector())
        family: Refit model (default linear for RegressionDataset, Cox otherwise)
        B: Number of resamples (>= 2)
        seed: Master seed
        n_jobs: Resample workers
        se_correction: Standard-error variant

    Returns:
        ResampleInference over the usable resamples

    Raises:
        DegenerateResampleError: Fewer than two resamples were usable
    """
    if family is None:
        family = RefitFamily.linear() if isinstance(data, RegressionDataset) else RefitFamily.cox()
    selector = selector or LassoSelector()
    inclusion, estimates, skipped = _run_resamples(data, selector, family, B, seed, n_jobs)
    result = aggregate(inclusion, estimates[:, -1, :], data.n // 2, se_correction, data.feature_names)
    result.skipped = skipped
    if family.kind == FamilyKind.CQR:
        result.tau = family.taus[-1]
    logger.info(f"Split-refit inference over {result.B} resamples ({family.kind.value} refits)")
    return result


@dataclass
class FusedCqrInference(ResultBase):
    """Per-level resample inference for quantile coefficients."""
    grid: QuantileGrid
    per_tau: List[ResampleInference]
    feature_names: Tuple[str, ...] = ()

    @property
    def estimates(self) -> np.ndarray:
        """(m, p) aggregated coefficients, one row per level."""
        return np.vstack([r.estimates for r in self.per_tau])

    def coefficient_function(self, j: int) -> StepFunction:
        """Piecewise-constant beta_j(tau) = beta_j(tau_k) on [tau_k, tau_{k+1})."""
        column = self.estimates[:, j]
        return StepFunction(np.asarray(self.grid.taus), column, left_value=float(column[0]))

    def to_tidy(self) -> pd.DataFrame:
        return pd.concat([r.to_tidy() for r in self.per_tau], ignore_index=True)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "taus": list(self.grid.taus),
            "per_tau": [r.to_dict() for r in self.per_tau],
            "feature_names": list(self.feature_names),
        }


def fused_hdcqr(
    ds: SurvivalDataset,
    selector: Optional[Selector] = None,
    grid: Optional[QuantileGrid] = None,
    B: int = 100,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    se_correction: Union[SeCorrection, str] = SeCorrection.NONE,
) -> FusedCqrInference:
    """
    Split-refit inference for censored quantile coefficients over a grid.

    Each resample solves the sequential quantile program once on the refit
    half, so all levels share the same splits and selections. Resamples with
    a non-estimable level are redrawn and eventually skipped.

    Args:
        ds: Survival dataset with positive times
        selector: Selection on the other half (default LassoSelector())
        grid: Quantile levels (default QuantileGrid.regular())
        B: Number of resamples
        seed: Master seed
        n_jobs: Resample workers
        se_correction: Standard-error variant

    Returns:
        FusedCqrInference
    """
    grid = grid or QuantileGrid.regular()
    family = RefitFamily(kind=FamilyKind.CQR, taus=list(grid.taus))
    selector = selector or LassoSelector()
    inclusion, estimates, skipped = _run_resamples(ds, selector, family, B, seed, n_jobs)
    per_tau = []
    for k, tau in enumerate(grid.taus):
        result = aggregate(inclusion, estimates[:, k, :], ds.n // 2, se_correction, ds.feature_names)
        result.skipped = skipped
        result.tau = tau
        per_tau.append(result)
    return FusedCqrInference(grid=grid, per_tau=per_tau, feature_names=ds.feature_names)
