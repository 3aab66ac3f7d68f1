"""
Censored quantile regression by sequential martingale estimating equations.

For a grid 0 < tau_1 < ... < tau_m = tau_U the coefficients of the
tau-th conditional quantile of log T are estimated one level at a time.
At level tau_k the estimating equation

    sum_i z_i [ N_i(z_i'b) - sum_{r<k} I(log Y_i >= z_i'b_r) (H(tau_{r+1}) - H(tau_r)) ] = 0,

with N_i(t) = I(log Y_i <= t, event) and H(u) = -log(1 - u), is the
subgradient condition of

    sum_{events} |log Y_i - z_i'b|  +  d_k'b,
    d_k = sum_{events} z_i - 2 sum_i z_i c_ik,

which is solved as a linear program. tau_0 = 0 with every subject at risk.
z_i carries an explicit intercept.

File: hdsurv/src/inference/cqr.py
"""
import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.aft.simplex import solve_lp
from src.config import settings
from src.data.records import SurvivalDataset
from src.errors import ConfigError, DegenerateDataError, EstimabilityError, UnboundedError
from src.models.base import ResultBase, record_fit
from src.nonparam.step_function import StepFunction

logger = logging.getLogger(__name__)


def cumulative_hazard_transform(tau: np.ndarray) -> np.ndarray:
    """H(u) = -log(1 - u)."""
    return -np.log1p(-np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class QuantileGrid:
    """Increasing quantile levels in (0, 1); the last one is the estimability bound."""
    taus: Tuple[float, ...]

    def __post_init__(self) -> None:
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or taus.size == 0:
            raise ConfigError("Quantile grid needs at least one level", field="taus")
        if not (taus[0] > 0 and taus[-1] < 1):
            raise ConfigError("Quantile levels must lie in (0, 1)", field="taus")
        if np.any(np.diff(taus) <= 0):
            raise ConfigError("Quantile levels must be strictly increasing", field="taus")
        object.__setattr__(self, "taus", tuple(float(t) for t in taus))

    @classmethod
    def regular(
        cls,
        lower: Optional[float] = None,
        upper: Optional[float] = None,
        step: Optional[float] = None,
    ) -> "QuantileGrid":
        """Evenly spaced grid (defaults from settings: 0.05 to 0.7 by 0.05)."""
        lower = settings.CQR_TAU_LOWER if lower is None else lower
        upper = settings.CQR_TAU_UPPER if upper is None else upper
        step = settings.CQR_TAU_STEP if step is None else step
        count = int(round((upper - lower) / step)) + 1
        return cls(tuple(np.round(lower + step * np.arange(count), 12)))

    @property
    def tau_upper(self) -> float:
        return self.taus[-1]

    @property
    def H_values(self) -> np.ndarray:
        return cumulative_hazard_transform(np.asarray(self.taus))

    def __len__(self) -> int:
        return len(self.taus)


@dataclass
class CqrFit(ResultBase):
    """Quantile coefficient paths; column 0 is the intercept."""
    grid: QuantileGrid
    coefficients: np.ndarray
    estimable: np.ndarray
    feature_names: Tuple[str, ...] = ()

    @property
    def names(self) -> List[str]:
        return ["(intercept)"] + list(self.feature_names)

    def coefficient_function(self, j: int) -> StepFunction:
        """Piecewise-constant b_j(tau) = b_j(tau_k) on [tau_k, tau_{k+1})."""
        column = self.coefficients[:, j]
        return StepFunction(np.asarray(self.grid.taus), column, left_value=float(column[0]))

    def predict_quantile(self, X: np.ndarray, tau: float) -> np.ndarray:
        """Predicted tau-th quantile of log T."""
        k = int(np.searchsorted(self.grid.taus, tau, side="right")) - 1
        k = min(max(k, 0), len(self.grid) - 1)
        row = self.coefficients[k]
        return row[0] + np.asarray(X, dtype=float) @ row[1:]

    def to_tidy(self) -> pd.DataFrame:
        """Long table (tau, coefficient, value, estimable)."""
        m, q = self.coefficients.shape
        return pd.DataFrame({
            "tau": np.repeat(self.grid.taus, q),
            "coefficient": np.tile(np.asarray(self.names, dtype=object), m),
            "value": self.coefficients.reshape(-1),
            "estimable": np.repeat(self.estimable, q),
        })

    def to_dict(self) -> Dict[str, Any]:
        return {
            "taus": list(self.grid.taus),
            "coefficients": self.coefficients.tolist(),
            "estimable": self.estimable.tolist(),
            "names": self.names,
        }


def _step(Z: np.ndarray, y: np.ndarray, event: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Solve min sum_{events} |y_i - z_i'b| + d'b for one grid level."""
    q = Z.shape[1]
    Ze, ye = Z[event], y[event]
    m = ye.size
    d = Ze.sum(axis=0) - 2.0 * Z.T @ weights
    c = np.concatenate([d, np.ones(2 * m)])
    A_eq = np.hstack([Ze, np.eye(m), -np.eye(m)])
    result = solve_lp(c, A_eq=A_eq, b_eq=ye, free=range(q))
    return result.x[:q]


def fit_cqr(ds: SurvivalDataset, grid: Optional[QuantileGrid] = None) -> CqrFit:
    """
    Sequential censored quantile regression over a grid of levels.

    Covariates are centered and scaled internally and coefficients are
    returned on the original scale.

    Args:
        ds: Dataset with strictly positive times
        grid: Quantile levels (default QuantileGrid.regular())

    Returns:
        CqrFit; levels past the first estimability failure are flagged and
        carry the last estimable row

    Raises:
        DegenerateDataError: No events, non-positive times or a constant column
    """
    grid = grid or QuantileGrid.regular()
    start_time = time.perf_counter()
    ds.require_events()
    if np.any(ds.time <= 0):
        raise DegenerateDataError("Quantile regression of log T needs strictly positive times")

    means = ds.X.mean(axis=0)
    sds = ds.X.std(axis=0)
    constant = [ds.feature_names[j] for j in np.flatnonzero(~(sds > 0))]
    if constant:
        raise DegenerateDataError(f"constant column {', '.join(constant)}")
    Z = np.column_stack([np.ones(ds.n), (ds.X - means) / sds])
    y = np.log(ds.time)

    m, q = len(grid), Z.shape[1]
    standardized = np.full((m, q), np.nan)
    estimable = np.zeros(m, dtype=bool)
    compensator = np.zeros(ds.n)
    at_risk = np.ones(ds.n, dtype=bool)
    previous_H = 0.0
    for k, (tau, H) in enumerate(zip(grid.taus, grid.H_values)):
        compensator += at_risk * (H - previous_H)
        previous_H = H
        try:
            b = _step(Z, y, ds.event, compensator)
        except UnboundedError:
            logger.warning(f"Quantile level {tau:.3g} is not estimable (unbounded program); stopping")
            break
        if np.max(np.abs(b)) > settings.CQR_BOUND:
            logger.warning(f"Quantile level {tau:.3g} exceeds the coefficient bound; stopping")
            break
        standardized[k] = b
        estimable[k] = True
        # Points on the fitted hyperplane stay at risk
        at_risk = y >= Z @ b - 1e-10 * (1.0 + np.abs(y))

    # Original scale: slope b_j / sd_j, intercept b_0 - sum b_j mean_j / sd_j
    coefficients = standardized.copy()
    coefficients[:, 1:] = standardized[:, 1:] / sds
    coefficients[:, 0] = standardized[:, 0] - coefficients[:, 1:] @ means
    last = None
    for k in range(m):
        if estimable[k]:
            last = coefficients[k].copy()
        elif last is not None:
            coefficients[k] = last

    converged = bool(estimable.all())
    record_fit("cqr", converged, start_time)
    logger.debug(f"CQR estimable at {int(estimable.sum())} of {m} levels")
    return CqrFit(grid=grid, coefficients=coefficients, estimable=estimable, feature_names=ds.feature_names)


def cqr_coefficient(ds: SurvivalDataset, j: int, taus: Sequence[float]) -> np.ndarray:
    """
    Coefficient of column j at each requested level, from one sequential fit
    whose grid ends at max(taus).

    Raises:
        EstimabilityError: A requested level is not estimable
    """
    grid = QuantileGrid(tuple(taus))
    fit = fit_cqr(ds, grid)
    if not fit.estimable.all():
        raise EstimabilityError(f"Quantile levels from {grid.taus[int(np.argmin(fit.estimable))]} not estimable")
    return fit.coefficients[:, j + 1]
