"""
Penalized Cox regression: proximal-gradient solver, regularization paths and
cross-validation.

The solver minimizes l(beta) + eta * Pen(beta), with l the negative log
partial likelihood summed over the full sample (no 1/n factor). SCAD goes
through local linear approximation (a short sequence of weighted lasso
problems); the kernel elastic net keeps its quadratic part in the smooth term.

File: hdsurv/src/cox/coxnet.py
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.config import settings
from src.cox.partial_likelihood import CoxFit, CoxObjective
from src.cox.penalties import (
    PROX_KINDS,
    PenaltyKind,
    PenaltySpec,
    lla_weights,
    prox,
    scaled_penalty,
)
from src.data.records import SurvivalDataset
from src.errors import UnsupportedPenaltyError
from src.models.base import ResultBase, record_fit
from src.scheduler.jobs import JobScheduler

logger = logging.getLogger(__name__)


@dataclass
class ProxProblem:
    """Smooth part f and proximal part g of a composite objective."""
    smooth: Callable[[np.ndarray], Tuple[float, np.ndarray]]
    penalty: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]


def _problem(objective: CoxObjective, spec: PenaltySpec) -> ProxProblem:
    quad = None
    prox_spec = spec
    if spec.kind == PenaltyKind.KERNEL_ELASTIC_NET:
        quad = spec.eta * (1.0 - spec.alpha) * spec.sigma_array
        prox_spec = PenaltySpec(kind=PenaltyKind.LASSO, eta=spec.eta * spec.alpha) if spec.alpha > 0 else None

    def smooth(beta: np.ndarray) -> Tuple[float, np.ndarray]:
        value, gradient = objective.value_and_gradient(beta)
        if quad is not None:
            qb = quad @ beta
            value += float(beta @ qb)
            gradient = gradient + 2.0 * qb
        return value, gradient

    if prox_spec is None:
        return ProxProblem(smooth, lambda b: 0.0, lambda z, step: z)
    return ProxProblem(
        smooth,
        lambda b: scaled_penalty(prox_spec, b),
        lambda z, step: prox(prox_spec, z, step),
    )


def mfista(
    problem: ProxProblem,
    beta0: np.ndarray,
    tol: float,
    max_iter: int,
    lipschitz: float = 1.0,
) -> Tuple[np.ndarray, List[float], bool, int]:
    """
    Monotone accelerated proximal gradient with backtracking.

    Args:
        problem: Composite objective
        beta0: Starting point
        tol: Fixed-point residual tolerance
        max_iter: Iteration cap
        lipschitz: Initial Lipschitz estimate

    Returns:
        (solution, objective trace, converged, iterations)
    """
    x = np.asarray(beta0, dtype=float).copy()
    fx, _ = problem.smooth(x)
    objective_x = fx + problem.penalty(x)
    trace = [objective_x]
    y = x.copy()
    t = 1.0
    L = lipschitz
    converged = False
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        fy, gy = problem.smooth(y)
        while True:
            z = problem.prox(y - gy / L, 1.0 / L)
            diff = z - y
            fz, _ = problem.smooth(z)
            if fz <= fy + gy @ diff + 0.5 * L * (diff @ diff) + 1e-12 * max(1.0, abs(fy)):
                break
            L *= 2.0
        objective_z = fz + problem.penalty(z)

        x_prev = x
        if objective_z <= objective_x:
            x, objective_x = z, objective_z
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        trace.append(objective_x)

        if np.max(np.abs(x - x_prev), initial=0.0) <= tol:
            _, gx = problem.smooth(x)
            residual = problem.prox(x - gx / L, 1.0 / L) - x
            if np.max(np.abs(residual), initial=0.0) <= tol:
                converged = True
                break
            # Restart momentum from the current iterate
            y, t = x.copy(), 1.0

    return x, trace, converged, iterations


def _solve(
    objective: CoxObjective,
    spec: PenaltySpec,
    beta0: np.ndarray,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, List[float], bool, int]:
    if spec.kind != PenaltyKind.SCAD:
        return mfista(_problem(objective, spec), beta0, tol, max_iter)

    beta = beta0.copy()
    trace: List[float] = []
    converged = False
    total = 0
    for outer in range(settings.LLA_MAX_ITER):
        weighted = PenaltySpec(kind=PenaltyKind.ADAPTIVE_LASSO, eta=spec.eta, weights=lla_weights(spec, beta))
        new_beta, _, inner_ok, used = mfista(_problem(objective, weighted), beta, tol, max_iter)
        total += used
        trace.append(objective.value(new_beta) + scaled_penalty(spec, new_beta))
        change = np.max(np.abs(new_beta - beta), initial=0.0)
        beta = new_beta
        if change <= tol and inner_ok:
            converged = True
            break
    logger.debug(f"SCAD local linear approximation used {outer + 1} outer steps")
    return beta, trace, converged, total


def penalized_objective(ds: SurvivalDataset, spec: PenaltySpec, beta: np.ndarray) -> float:
    """l(beta) + eta * Pen(beta), the quantity fit_penalized minimizes."""
    return CoxObjective.from_dataset(ds).value(beta) + scaled_penalty(spec, beta)


def fit_penalized(
    ds: SurvivalDataset,
    spec: PenaltySpec,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    beta0: Optional[np.ndarray] = None,
    objective: Optional[CoxObjective] = None,
    quiet: bool = False,
) -> CoxFit:
    """
    Fit a penalized Cox model at one tuning parameter.

    Args:
        ds: Dataset (standardized columns recommended)
        spec: Penalty specification
        tol: Convergence tolerance on coefficient changes (default settings.PROX_TOL)
        max_iter: Iteration cap (default settings.PROX_MAX_ITER)
        beta0: Warm start
        objective: Pre-built objective for ds (reused along paths)
        quiet: Log per-fit warnings at debug level (path fits)

    Returns:
        CoxFit with exact zeros for sparsity-inducing penalties

    Raises:
        UnsupportedPenaltyError: fused_lasso
    """
    if spec.kind not in PROX_KINDS:
        raise UnsupportedPenaltyError(f"{spec.kind.value} cannot be optimized by the penalized solver")
    tol = settings.PROX_TOL if tol is None else tol
    max_iter = settings.PROX_MAX_ITER if max_iter is None else max_iter
    spec.check_dimension(ds.p)
    start_time = time.perf_counter()
    ds.require_events()

    warnings: List[str] = []
    log = logger.debug if quiet else logger.warning
    if not ds.standardized:
        log("Penalized fit on unstandardized covariates; penalties act on raw scales")
        warnings.append("unstandardized_input")

    objective = objective or CoxObjective.from_dataset(ds)
    start = np.zeros(ds.p) if beta0 is None else np.asarray(beta0, dtype=float)
    beta, trace, converged, iterations = _solve(objective, spec, start, tol, max_iter)
    if not converged:
        log(f"Penalized solver ({spec.kind.value}, eta={spec.eta:.4g}) hit {iterations} iterations")

    gradient = objective.gradient(beta)
    fit = CoxFit(
        beta=beta,
        neg_log_pl=objective.value(beta),
        score_norm=float(np.max(np.abs(gradient), initial=0.0)),
        iterations=iterations,
        converged=converged,
        baseline_chf=objective.baseline_chf(beta),
        feature_names=ds.feature_names,
        penalty={"kind": spec.kind.value, "eta": spec.eta, "alpha": spec.alpha},
        objective_trace=trace,
        warnings=warnings,
    )
    record_fit(f"coxnet_{spec.kind.value}", converged, start_time)
    return fit


def eta_max(ds: SurvivalDataset, spec: PenaltySpec, objective: Optional[CoxObjective] = None) -> float:
    """
    Smallest eta with an all-zero solution, max_j |grad_j l(0)| for the lasso.

    For ridge the lasso value is used to anchor the grid.
    """
    objective = objective or CoxObjective.from_dataset(ds)
    gradient = np.abs(objective.gradient(np.zeros(ds.p)))
    kind = spec.kind
    if kind == PenaltyKind.ADAPTIVE_LASSO:
        w = spec.weight_array
        positive = w > 0
        value = float(np.max(gradient[positive] / w[positive], initial=0.0))
    elif kind == PenaltyKind.GROUP_LASSO:
        value = float(max(np.linalg.norm(gradient[g]) for g in spec.groups))
    elif kind in (PenaltyKind.ELASTIC_NET, PenaltyKind.KERNEL_ELASTIC_NET) and spec.alpha > 0:
        value = float(np.max(gradient, initial=0.0)) / spec.alpha
    else:
        value = float(np.max(gradient, initial=0.0))
    return value if value > 0 else 1.0


def eta_grid(eta_start: float, n_etas: int, eta_min_ratio: float) -> np.ndarray:
    """Log-spaced decreasing grid from eta_start down to eta_start * eta_min_ratio."""
    return eta_start * np.logspace(0.0, np.log10(eta_min_ratio), n_etas)


@dataclass
class PathFit(ResultBase):
    """Coefficient path over a decreasing grid of tuning parameters."""
    etas: np.ndarray
    betas: np.ndarray
    dfs: np.ndarray
    objectives: np.ndarray
    converged: np.ndarray
    penalty: Dict[str, Any]
    feature_names: Tuple[str, ...] = ()
    cv_scores: Optional[np.ndarray] = None
    cv_se: Optional[np.ndarray] = None
    selected_eta: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def selected_index(self) -> Optional[int]:
        if self.selected_eta is None:
            return None
        return int(np.argmin(np.abs(self.etas - self.selected_eta)))

    @property
    def selected_beta(self) -> Optional[np.ndarray]:
        index = self.selected_index
        return None if index is None else self.betas[index]

    def to_tidy(self) -> pd.DataFrame:
        """Long table (eta, j, feature, beta_j) for plotting."""
        k, p = self.betas.shape
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(p))
        return pd.DataFrame({
            "eta": np.repeat(self.etas, p),
            "j": np.tile(np.arange(p), k),
            "feature": np.tile(np.asarray(names, dtype=object), k),
            "beta_j": self.betas.reshape(-1),
        })

    def to_dict(self) -> Dict[str, Any]:
        return {
            "etas": self.etas.tolist(),
            "betas": self.betas.tolist(),
            "dfs": self.dfs.tolist(),
            "objectives": self.objectives.tolist(),
            "converged": self.converged.tolist(),
            "penalty": self.penalty,
            "feature_names": list(self.feature_names),
            "cv_scores": None if self.cv_scores is None else self.cv_scores.tolist(),
            "cv_se": None if self.cv_se is None else self.cv_se.tolist(),
            "selected_eta": self.selected_eta,
            "warnings": list(self.warnings),
        }


def fit_path(
    ds: SurvivalDataset,
    spec: PenaltySpec,
    n_etas: Optional[int] = None,
    eta_min_ratio: Optional[float] = None,
    etas: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> PathFit:
    """
    Warm-started regularization path.

    Args:
        ds: Dataset
        spec: Penalty (its eta is ignored; the grid supplies etas)
        n_etas: Grid length (default settings.N_ETAS)
        eta_min_ratio: Smallest / largest eta (default settings.ETA_MIN_RATIO)
        etas: Explicit decreasing grid (overrides n_etas/eta_min_ratio)
        tol: Solver tolerance
        max_iter: Solver iteration cap

    Returns:
        PathFit
    """
    n_etas = settings.N_ETAS if n_etas is None else n_etas
    eta_min_ratio = settings.ETA_MIN_RATIO if eta_min_ratio is None else eta_min_ratio
    objective = CoxObjective.from_dataset(ds)
    if etas is None:
        etas = eta_grid(eta_max(ds, spec, objective), n_etas, eta_min_ratio)
    etas = np.asarray(etas, dtype=float)

    beta = np.zeros(ds.p)
    betas, objectives, flags = [], [], []
    warnings: List[str] = []
    for eta in etas:
        step_spec = spec.with_eta(eta)
        fit = fit_penalized(ds, step_spec, tol=tol, max_iter=max_iter, beta0=beta, objective=objective, quiet=True)
        beta = fit.beta
        betas.append(beta.copy())
        objectives.append(objective.value(beta) + scaled_penalty(step_spec, beta))
        flags.append(fit.converged)
        warnings.extend(w for w in fit.warnings if w not in warnings)

    for warning in warnings:
        logger.warning(f"{spec.kind.value} path: {warning}")
    betas_arr = np.vstack(betas) if betas else np.empty((0, ds.p))
    logger.info(f"Fitted {spec.kind.value} path with {len(etas)} etas on n={ds.n}, p={ds.p}")
    return PathFit(
        etas=etas,
        betas=betas_arr,
        dfs=np.count_nonzero(betas_arr, axis=1),
        objectives=np.asarray(objectives),
        converged=np.asarray(flags, dtype=bool),
        penalty={"kind": spec.kind.value, "alpha": spec.alpha},
        feature_names=ds.feature_names,
        warnings=warnings,
    )


def stratified_folds(event: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Fold labels dealing events and censorings round-robin after shuffling.

    Args:
        event: Event indicators
        k: Number of folds
        rng: Generator

    Returns:
        Fold label per subject in {0..k-1}
    """
    event = np.asarray(event, dtype=bool)
    folds = np.empty(event.size, dtype=int)
    events = rng.permutation(np.flatnonzero(event))
    censored = rng.permutation(np.flatnonzero(~event))
    folds[events] = np.arange(events.size) % k
    folds[censored] = (np.arange(censored.size) + events.size) % k
    return folds


def cross_validate(
    ds: SurvivalDataset,
    spec: PenaltySpec,
    k: Optional[int] = None,
    seed: Optional[int] = None,
    n_etas: Optional[int] = None,
    eta_min_ratio: Optional[float] = None,
    n_jobs: Optional[int] = None,
    tol: Optional[float] = None,
) -> PathFit:
    """
    K-fold cross-validated partial-likelihood deviance along the path.

    The score of fold f at eta is 2 [l_full(beta_f) - l_train(beta_f)]
    (the held-out contribution of the partial likelihood); scores are summed
    over folds. A fold fits the grid point eta at eta * n_train / n.

    Args:
        ds: Dataset
        spec: Penalty
        k: Number of folds (default settings.CV_FOLDS)
        seed: Seed for the fold assignment
        n_etas: Grid length
        eta_min_ratio: Grid ratio
        n_jobs: Fold workers (default settings.THREADS)
        tol: Solver tolerance

    Returns:
        Full-data PathFit carrying cv_scores, cv_se and selected_eta
    """
    k = settings.CV_FOLDS if k is None else k
    if k < 2:
        raise ValueError(f"Cross-validation needs k >= 2, got {k}")
    k = min(k, ds.n)
    ds.require_events()

    path = fit_path(ds, spec, n_etas=n_etas, eta_min_ratio=eta_min_ratio, tol=tol)
    folds = stratified_folds(ds.event, k, np.random.default_rng(seed))
    if k > ds.n_events:
        logger.warning(f"{k} folds but only {ds.n_events} events: some folds hold no events")
        path.warnings.append("event_free_folds")

    full = CoxObjective.from_dataset(ds)

    def run_fold(f: int) -> np.ndarray:
        train_idx = np.flatnonzero(folds != f)
        train = ds.subset(train_idx)
        if train.n_events == 0:
            return np.zeros(len(path.etas))
        # eta scales with the training share of the rows
        fold_path = fit_path(train, spec, etas=path.etas * (train.n / ds.n), tol=tol)
        train_objective = CoxObjective.from_dataset(train)
        return np.array([
            2.0 * (full.value(beta) - train_objective.value(beta)) for beta in fold_path.betas
        ])

    scheduler = JobScheduler(n_jobs=n_jobs, name="cv_folds")
    per_fold = np.vstack(scheduler.map(run_fold, range(k)))
    path.cv_scores = per_fold.sum(axis=0)
    path.cv_se = per_fold.std(axis=0, ddof=1) * np.sqrt(k) if k > 1 else np.zeros(len(path.etas))
    path.selected_eta = float(path.etas[int(np.argmin(path.cv_scores))])
    logger.info(f"Cross-validation selected eta={path.selected_eta:.4g} ({k} folds)")
    return path


def adaptive_weights(
    ds: SurvivalDataset,
    k: Optional[int] = None,
    seed: Optional[int] = None,
    n_etas: int = 30,
    floor: float = 1e-8,
) -> np.ndarray:
    """
    Adaptive-lasso weights w_j = 1 / |beta_ridge_j| with the ridge eta chosen by CV.

    Args:
        ds: Dataset
        k: CV folds
        seed: Fold seed
        n_etas: Ridge grid length
        floor: Lower bound on |beta_ridge_j|

    Returns:
        Weights (p,)
    """
    ridge = cross_validate(ds, PenaltySpec(kind=PenaltyKind.RIDGE), k=k, seed=seed, n_etas=n_etas)
    beta = ridge.selected_beta
    return 1.0 / np.maximum(np.abs(beta), floor)
