"""
Accelerated failure time estimation with the Dantzig selector.

log T = X'beta + error, fitted by alternating Buckley-James imputation of
censored log times with an l1-minimal Dantzig linear program on the centered
design.

File: hdsurv/src/aft/dantzig.py
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from sklearn.linear_model import RidgeCV

from src.aft.simplex import solve_lp
from src.config import settings
from src.cox.coxnet import stratified_folds
from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError
from src.models.base import ResultBase, record_fit
from src.scheduler.jobs import JobScheduler

logger = logging.getLogger(__name__)


def center(X: np.ndarray) -> np.ndarray:
    """Apply P_n = I - 11'/n: subtract column means."""
    X = np.asarray(X, dtype=float)
    return X - X.mean(axis=0)


def _residual_masses(residual: np.ndarray, event: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Kaplan-Meier point masses of the residual distribution.

    The largest residual is treated as an event so that the masses sum to one.
    """
    order = np.lexsort((~event, residual))
    e, d = residual[order], event[order].copy()
    d[-1] = True
    n = e.size
    at_risk = n - np.arange(n)
    factors = np.where(d, 1.0 - 1.0 / at_risk, 1.0)
    survival = np.cumprod(factors)
    previous = np.concatenate(([1.0], survival[:-1]))
    mass = np.where(d, previous - survival, 0.0)
    return e, mass


def buckley_james_impute(ds: SurvivalDataset, beta: np.ndarray) -> np.ndarray:
    """
    Buckley-James imputed log times T*(beta).

    Events keep log Y. A censored subject gets log Y plus the mean residual
    excess beyond its own residual under the Kaplan-Meier distribution of
    residuals log Y - X'beta.

    Args:
        ds: Dataset with positive times
        beta: Coefficients (p,)

    Returns:
        Imputed log times (n,)

    Raises:
        DegenerateDataError: No events
        DimensionError: beta length differs from p
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != ds.p:
        raise DimensionError(f"beta has {beta.size} entries, dataset has {ds.p} columns")
    if ds.n_events == 0:
        raise DegenerateDataError("Buckley-James imputation needs at least one event")
    if np.any(ds.time <= 0):
        raise DegenerateDataError("Log-time models need strictly positive times")

    log_time = np.log(ds.time)
    residual = log_time - ds.X @ beta
    imputed = log_time.copy()
    censored = np.flatnonzero(~ds.event)
    if censored.size == 0:
        return imputed

    e, mass = _residual_masses(residual, ds.event)
    for i in censored:
        beyond = e > residual[i]
        tail = mass[beyond].sum()
        if tail > 0:
            imputed[i] += float(mass[beyond] @ (e[beyond] - residual[i])) / tail
    return imputed


def dantzig_linear(
    X: np.ndarray,
    Y: np.ndarray,
    eta_q: float,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Dantzig selector: minimize sum w_j |b_j| subject to ||X'(Y - Xb)||_inf <= eta_q.

    Args:
        X: Design (n, p)
        Y: Outcome (n,)
        eta_q: Constraint level (>= 0)
        weights: Non-negative objective weights (default all ones)

    Returns:
        Coefficients (p,)
    """
    if eta_q < 0:
        raise ValueError(f"eta_q must be >= 0, got {eta_q}")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.shape[0] != Y.size:
        raise DimensionError(f"X has {X.shape[0]} rows, Y has {Y.size}")
    p = X.shape[1]
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.size != p:
        raise DimensionError(f"weights have {w.size} entries, X has {p} columns")

    G = X.T @ X
    r = X.T @ Y
    # b = u - v with u, v >= 0
    A_ub = np.vstack([np.hstack([G, -G]), np.hstack([-G, G])])
    b_ub = np.concatenate([r + eta_q, eta_q - r])
    result = solve_lp(np.concatenate([w, w]), A_ub=A_ub, b_ub=b_ub)
    return result.x[:p] - result.x[p:]


@dataclass
class DantzigFit(ResultBase):
    """Dantzig-selector AFT fit."""
    beta: np.ndarray
    eta_q: float
    iterations: int
    converged: bool
    imputed_outcomes: np.ndarray
    intercept: float = 0.0
    constraint_residual: float = 0.0
    weights: Optional[np.ndarray] = None
    feature_names: Tuple[str, ...] = ()
    warnings: List[str] = field(default_factory=list)

    def predict_log_time(self, X: np.ndarray) -> np.ndarray:
        """Predicted log survival time intercept + X'beta."""
        return self.intercept + np.asarray(X, dtype=float) @ self.beta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "eta_q": self.eta_q,
            "iterations": self.iterations,
            "converged": self.converged,
            "constraint_residual": self.constraint_residual,
            "weights": None if self.weights is None else self.weights.tolist(),
            "feature_names": list(self.feature_names),
            "warnings": list(self.warnings),
        }


def dantzig_aft(
    ds: SurvivalDataset,
    eta_q: float,
    weights: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> DantzigFit:
    """
    Iterate Buckley-James imputation and the Dantzig program to a fixed point.

    Args:
        ds: Dataset
        eta_q: Constraint level
        weights: Optional adaptive weights
        tol: Sup-norm change stopping rule (default settings.DANTZIG_TOL)
        max_iter: Outer iteration cap (default settings.DANTZIG_MAX_ITER)

    Returns:
        DantzigFit; converged is False when the cap is hit
    """
    tol = settings.DANTZIG_TOL if tol is None else tol
    max_iter = settings.DANTZIG_MAX_ITER if max_iter is None else max_iter
    start_time = time.perf_counter()
    ds.require_events()

    Xc = center(ds.X)
    beta = np.zeros(ds.p)
    converged = False
    iterations = 0
    imputed = np.log(ds.time)
    while iterations < max_iter:
        iterations += 1
        imputed = buckley_james_impute(ds, beta)
        new_beta = dantzig_linear(Xc, imputed - imputed.mean(), eta_q, weights)
        change = float(np.max(np.abs(new_beta - beta), initial=0.0))
        beta = new_beta
        if ds.n_events == ds.n or change <= tol:
            converged = True
            break

    warnings: List[str] = []
    if not converged:
        logger.warning(f"Dantzig AFT iteration did not settle in {max_iter} steps (eta_q={eta_q:.4g})")
        warnings.append("not_converged")

    yc = imputed - imputed.mean()
    residual = float(np.max(np.abs(Xc.T @ (yc - Xc @ beta)), initial=0.0))
    fit = DantzigFit(
        beta=beta,
        eta_q=float(eta_q),
        iterations=iterations,
        converged=converged,
        imputed_outcomes=imputed,
        intercept=float(imputed.mean() - ds.X.mean(axis=0) @ beta),
        constraint_residual=residual,
        weights=None if weights is None else np.asarray(weights, dtype=float),
        feature_names=ds.feature_names,
        warnings=warnings,
    )
    record_fit("dantzig_aft", converged, start_time)
    return fit


def adaptive_dantzig_weights(ds: SurvivalDataset) -> np.ndarray:
    """
    Weights w_j = 1 / (|b0_j| + 1/sqrt(n)) from a ridge fit to imputed outcomes at beta = 0.

    The ridge penalty is chosen by leave-one-out CV over a log grid.
    """
    imputed = buckley_james_impute(ds, np.zeros(ds.p))
    ridge = RidgeCV(alphas=np.logspace(-3, 3, 25)).fit(ds.X, imputed)
    return 1.0 / (np.abs(ridge.coef_) + 1.0 / np.sqrt(ds.n))


@dataclass
class DantzigCV(ResultBase):
    """Cross-validated choice of eta_q."""
    etas: np.ndarray
    errors: np.ndarray
    selected_eta: float

    def to_dict(self) -> Dict[str, Any]:
        return {"etas": self.etas.tolist(), "errors": self.errors.tolist(), "selected_eta": self.selected_eta}


def cv_eta_q(
    ds: SurvivalDataset,
    k: Optional[int] = None,
    seed: Optional[int] = None,
    n_etas: int = 20,
    eta_min_ratio: float = 0.01,
    weights: Optional[np.ndarray] = None,
    n_jobs: Optional[int] = None,
) -> DantzigCV:
    """
    K-fold CV for eta_q on imputed-outcome squared error.

    Held-out rows are scored against their imputed log times under the
    training-fold coefficients.

    Args:
        ds: Dataset
        k: Folds (default settings.CV_FOLDS, capped at n)
        seed: Fold seed
        n_etas: Grid length
        eta_min_ratio: Smallest / largest eta
        weights: Optional adaptive weights
        n_jobs: Fold workers

    Returns:
        DantzigCV with the error-minimizing eta
    """
    k = min(settings.CV_FOLDS if k is None else k, ds.n)
    if k < 2:
        raise ValueError(f"Cross-validation needs k >= 2, got {k}")
    ds.require_events()

    start = buckley_james_impute(ds, np.zeros(ds.p))
    top = float(np.max(np.abs(center(ds.X).T @ (start - start.mean())), initial=0.0))
    top = top if top > 0 else 1.0
    etas = top * np.logspace(0.0, np.log10(eta_min_ratio), n_etas)
    folds = stratified_folds(ds.event, k, np.random.default_rng(seed))

    def run_fold(f: int) -> np.ndarray:
        train = ds.subset(np.flatnonzero(folds != f))
        test = np.flatnonzero(folds == f)
        errors = np.full(etas.size, np.nan)
        if train.n_events == 0 or test.size == 0:
            return errors
        for e, eta in enumerate(etas):
            fit = dantzig_aft(train, eta, weights=weights)
            target = buckley_james_impute(ds, fit.beta)[test]
            errors[e] = np.sum((target - fit.predict_log_time(ds.X[test])) ** 2)
        return errors

    per_fold = np.vstack(JobScheduler(n_jobs=n_jobs, name="dantzig_cv").map(run_fold, range(k)))
    errors = np.nansum(per_fold, axis=0) / ds.n
    selected = float(etas[int(np.argmin(errors))])
    logger.info(f"Dantzig CV selected eta_q={selected:.4g} ({k} folds)")
    return DantzigCV(etas=etas, errors=errors, selected_eta=selected)
