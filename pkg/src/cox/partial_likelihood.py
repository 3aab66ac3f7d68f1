"""
Cox partial likelihood with Breslow ties.

CoxObjective sorts the data once; every evaluation afterwards is a handful of
reverse cumulative sums, so value, gradient and Hessian cost O(n p) and
O(n p^2) respectively. The same object serves the Newton MPLE below, the
proximal solver, boosting (gradient in the linear predictor) and the Cox
network loss.

File: hdsurv/src/cox/partial_likelihood.py
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from src.config import settings
from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError, RankDeficiencyError
from src.models.base import FitStatus, ResultBase, record_fit
from src.nonparam.step_function import StepFunction

logger = logging.getLogger(__name__)


class CoxObjective:
    """
    Negative log partial likelihood l(beta) of one dataset.

    Risk sets are R(t) = {j: Y_j >= t}; tied event times share a risk set
    (Breslow).
    """

    def __init__(self, time: np.ndarray, event: np.ndarray, X: Optional[np.ndarray] = None) -> None:
        """
        Initialize the objective.

        Args:
            time: Observed times, shape (n,)
            event: Event indicators, shape (n,)
            X: Covariates, shape (n, p); may be omitted for linear-predictor use
        """
        self.time = np.asarray(time, dtype=float)
        self.event = np.asarray(event, dtype=bool)
        self.n = self.time.shape[0]
        self.X = None if X is None else np.asarray(X, dtype=float)
        if self.X is not None and self.X.shape[0] != self.n:
            raise DimensionError(f"X has {self.X.shape[0]} rows, expected {self.n}")

        self.order = np.argsort(self.time, kind="stable")
        sorted_time = self.time[self.order]
        # Position in sorted order where each subject's risk set starts
        self.first = np.searchsorted(sorted_time, sorted_time, side="left")
        self.sorted_event = self.event[self.order]
        # Last sorted position sharing each subject's time
        self.last = np.searchsorted(sorted_time, sorted_time, side="right") - 1
        self.n_events = int(self.sorted_event.sum())

    @classmethod
    def from_dataset(cls, ds: SurvivalDataset) -> "CoxObjective":
        return cls(ds.time, ds.event, ds.X)

    @property
    def p(self) -> int:
        return 0 if self.X is None else int(self.X.shape[1])

    def _linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape[0] != self.p:
            raise DimensionError(f"beta has length {beta.shape[0]}, expected {self.p}")
        return self.X @ beta

    @staticmethod
    def _reverse_cumsum(values: np.ndarray) -> np.ndarray:
        return np.cumsum(values[::-1], axis=0)[::-1]

    def _risk_sums(self, eta_sorted: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        shift = float(np.max(eta_sorted)) if eta_sorted.size else 0.0
        w = np.exp(eta_sorted - shift)
        s0 = self._reverse_cumsum(w)[self.first]
        return w, s0, shift

    def _event_weights(self, s0: np.ndarray) -> np.ndarray:
        """c(Y_k) = sum over events i with Y_i <= Y_k of 1 / S0_i, in sorted order."""
        inv = np.where(self.sorted_event, 1.0 / s0, 0.0)
        return np.cumsum(inv)[self.last]

    def value_eta(self, eta: np.ndarray) -> float:
        """
        l as a function of the per-subject linear predictor.

        Args:
            eta: Linear predictor, shape (n,)

        Returns:
            Negative log partial likelihood (+inf for non-finite input)
        """
        eta = np.asarray(eta, dtype=float)
        if not np.all(np.isfinite(eta)):
            return float("inf")
        eta_sorted = eta[self.order]
        _, s0, shift = self._risk_sums(eta_sorted)
        log_s0 = np.log(s0) + shift
        return float(-np.sum(eta_sorted[self.sorted_event] - log_s0[self.sorted_event]))

    def gradient_eta(self, eta: np.ndarray) -> np.ndarray:
        """
        Gradient of l with respect to each subject's linear predictor.

        Returns:
            Array (n,) in the original subject order
        """
        eta_sorted = np.asarray(eta, dtype=float)[self.order]
        w, s0, _ = self._risk_sums(eta_sorted)
        grad_sorted = w * self._event_weights(s0) - self.sorted_event
        grad = np.empty(self.n)
        grad[self.order] = grad_sorted
        return grad

    def value(self, beta: np.ndarray) -> float:
        beta = np.asarray(beta, dtype=float)
        if not np.all(np.isfinite(beta)):
            return float("inf")
        return self.value_eta(self._linear_predictor(beta))

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        return self.X.T @ self.gradient_eta(self._linear_predictor(beta))

    def value_and_gradient(self, beta: np.ndarray) -> Tuple[float, np.ndarray]:
        eta = self._linear_predictor(beta)
        return self.value_eta(eta), self.X.T @ self.gradient_eta(eta)

    def hessian(self, beta: np.ndarray) -> np.ndarray:
        """
        Hessian of l: X^T diag(w c) X - sum over events of mean_i mean_i^T.

        Returns:
            Symmetric PSD matrix (p, p)
        """
        eta_sorted = self._linear_predictor(beta)[self.order]
        Xs = self.X[self.order]
        w, s0, _ = self._risk_sums(eta_sorted)
        c = self._event_weights(s0)
        s1 = self._reverse_cumsum(w[:, None] * Xs)[self.first]
        means = (s1 / s0[:, None])[self.sorted_event]
        H = (Xs * (w * c)[:, None]).T @ Xs - means.T @ means
        return (H + H.T) / 2.0

    def baseline_chf(self, beta: np.ndarray) -> StepFunction:
        """
        Breslow cumulative baseline hazard at beta.

        Returns:
            StepFunction with knots at distinct event times
        """
        eta = self._linear_predictor(beta) if self.p else np.zeros(self.n)
        sorted_time = self.time[self.order]
        risk = self._reverse_cumsum(np.exp(eta[self.order]))[self.first]
        event_times, idx = np.unique(sorted_time[self.sorted_event], return_index=True)
        deaths = np.bincount(
            np.searchsorted(event_times, sorted_time[self.sorted_event]), minlength=event_times.size
        )
        denominators = risk[self.sorted_event][idx]
        return StepFunction(event_times, np.cumsum(deaths / denominators), left_value=0.0)


def neg_log_partial_likelihood(ds: SurvivalDataset, beta: np.ndarray) -> float:
    """
    Negative log partial likelihood with Breslow ties.

    Args:
        ds: Dataset
        beta: Coefficients, length p

    Returns:
        l(beta); +inf only when beta has non-finite entries
    """
    return CoxObjective.from_dataset(ds).value(beta)


def score_and_hessian(ds: SurvivalDataset, beta: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Analytic gradient and Hessian of the negative log partial likelihood.

    Args:
        ds: Dataset
        beta: Coefficients

    Returns:
        {"gradient": (p,), "hessian": (p, p)}
    """
    objective = CoxObjective.from_dataset(ds)
    return {"gradient": objective.gradient(beta), "hessian": objective.hessian(beta)}


@dataclass
class CoxFit(ResultBase):
    """Fitted Cox model (unpenalized or penalized)."""
    beta: np.ndarray
    neg_log_pl: float
    score_norm: float
    iterations: int
    converged: bool
    baseline_chf: StepFunction
    feature_names: Tuple[str, ...] = ()
    separation_suspected: bool = False
    penalty: Optional[Dict[str, Any]] = None
    objective_trace: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def status(self) -> FitStatus:
        return FitStatus.from_flag(self.converged)

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": self.beta.tolist(),
            "feature_names": list(self.feature_names),
            "neg_log_pl": self.neg_log_pl,
            "score_norm": self.score_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status.value,
            "separation_suspected": self.separation_suspected,
            "baseline_chf": self.baseline_chf.to_dict(),
            "penalty": self.penalty,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CoxFit":
        return cls(
            beta=np.asarray(data["beta"], dtype=float),
            neg_log_pl=float(data["neg_log_pl"]),
            score_norm=float(data["score_norm"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            baseline_chf=StepFunction.from_dict(data["baseline_chf"]),
            feature_names=tuple(data.get("feature_names", ())),
            separation_suspected=bool(data.get("separation_suspected", False)),
            penalty=data.get("penalty"),
            warnings=list(data.get("warnings", [])),
        )


def dependent_columns(X: np.ndarray, tol: float = 1e-10) -> List[int]:
    """Indices of columns that are linear combinations of earlier pivots (after centering)."""
    Xc = X - X.mean(axis=0)
    if Xc.shape[1] == 0:
        return []
    _, R, pivots = linalg.qr(Xc, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * scale))
    return sorted(int(j) for j in pivots[rank:])


def fit_mple(
    ds: SurvivalDataset,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    beta0: Optional[np.ndarray] = None,
) -> CoxFit:
    """
    Maximum partial likelihood by Newton's method with step halving.

    Args:
        ds: Dataset with p < number of events
        tol: Gradient sup-norm tolerance (default settings.NEWTON_TOL)
        max_iter: Iteration cap (default settings.NEWTON_MAX_ITER)
        beta0: Starting point (default zero)

    Returns:
        CoxFit; converged=False when the cap is hit or the line search stalls

    Raises:
        DegenerateDataError: p >= number of events (use the penalized solver)
        RankDeficiencyError: Covariate columns are collinear
    """
    tol = settings.NEWTON_TOL if tol is None else tol
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter
    start_time = time.perf_counter()

    ds.require_events()
    if ds.p >= ds.n_events:
        raise DegenerateDataError(
            f"p={ds.p} >= {ds.n_events} events: the unpenalized partial likelihood is "
            f"over-parameterized; use the penalized solver (coxnet) instead"
        )
    collinear = dependent_columns(ds.X)
    if collinear:
        raise RankDeficiencyError(
            f"Collinear covariates: {[ds.feature_names[j] for j in collinear]}", columns=collinear
        )

    objective = CoxObjective.from_dataset(ds)
    beta = np.zeros(ds.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    value = objective.value(beta)
    trace = [value]
    converged = False
    separation = False
    iterations = 0

    while iterations < max_iter:
        gradient = objective.gradient(beta)
        if np.max(np.abs(gradient), initial=0.0) <= tol:
            converged = True
            break
        iterations += 1
        hessian = objective.hessian(beta)
        try:
            step = linalg.solve(hessian, gradient, assume_a="pos", check_finite=False)
        except (ValueError, linalg.LinAlgError):
            step = linalg.lstsq(hessian, gradient)[0]

        scale = 1.0
        for _ in range(settings.NEWTON_MAX_HALVINGS + 1):
            candidate = beta - scale * step
            candidate_value = objective.value(candidate)
            if candidate_value <= value + 1e-12 * max(1.0, abs(value)):
                break
            scale /= 2.0
        else:
            logger.warning(f"Newton line search stalled at iteration {iterations}")
            break

        beta, value = candidate, candidate_value
        trace.append(value)
        if np.max(np.abs(beta), initial=0.0) > settings.SEPARATION_BOUND:
            separation = True
            logger.warning(
                f"Coefficient magnitude exceeds {settings.SEPARATION_BOUND}: "
                f"monotone likelihood (separation) suspected"
            )
            break

    score_norm = float(np.max(np.abs(objective.gradient(beta)), initial=0.0))
    converged = converged or score_norm <= tol
    if not converged:
        logger.warning(f"Cox MPLE did not converge in {iterations} iterations (score norm {score_norm:.3g})")

    warnings = ["separation_suspected"] if separation else []
    fit = CoxFit(
        beta=beta,
        neg_log_pl=value,
        score_norm=score_norm,
        iterations=iterations,
        converged=converged,
        baseline_chf=objective.baseline_chf(beta),
        feature_names=ds.feature_names,
        separation_suspected=separation,
        objective_trace=trace,
        warnings=warnings,
    )
    record_fit("cox_mple", converged, start_time)
    return fit


def predict_survival(fit: CoxFit, X: np.ndarray, times: np.ndarray) -> np.ndarray:
    """
    Absolute survival S(t | x) = exp(-Lambda0(t) exp(x' beta)).

    Args:
        fit: Fitted model
        X: Covariates, shape (m, p)
        times: Evaluation times, shape (k,)

    Returns:
        Array (m, k)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    chf0 = np.asarray(fit.baseline_chf(np.asarray(times, dtype=float))).reshape(1, -1)
    risk = np.exp(X @ fit.beta).reshape(-1, 1)
    return np.exp(-chf0 * risk)
