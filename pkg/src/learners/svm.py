"""
Survival support vector machines.

The decision function f(x) = sum_k alpha_k K(x_k, x) + a lives in the span
of the training points. Three objectives share one solver:

    rank:        1/2 ||f||^2 + gamma * sum_{comparable (i, j)} max(0, m - (f(x_j) - f(x_i)))
    regression:  1/2 ||f||^2 + gamma * sum_i [ max(0, y_i - f_i - e) + delta_i max(0, f_i - y_i - e) ]
    hybrid:      mix * rank loss + (1 - mix) * regression loss

with y = log T, comparable pairs delta_i = 1 and Y_i < Y_j, margin m and
tube half-width e. Higher f means longer survival. Rank fits carry no
intercept.

Optimization is full-batch kernel subgradient descent with step
c / sqrt(t) and iterate averaging; the averaged iterate is checkpointed and
the best checkpoint is returned.

File: hdsurv/src/learners/svm.py
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from src.config import settings
from src.data.records import SurvivalDataset
from src.errors import ConfigError, DegenerateDataError
from src.models.base import ResultBase, record_fit

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    LINEAR = "linear"
    RBF = "rbf"


class SvmMode(str, Enum):
    RANK = "rank"
    REGRESSION = "regression"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice; an RBF bandwidth of None is resolved from the data at fit time."""
    kind: KernelKind = KernelKind.LINEAR
    bandwidth: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"RBF bandwidth must be > 0, got {self.bandwidth}", field="bandwidth")

    @classmethod
    def rbf(cls, bandwidth: Optional[float] = None) -> "KernelSpec":
        return cls(KernelKind.RBF, bandwidth)

    def resolve(self, X: np.ndarray) -> "KernelSpec":
        if self.kind == KernelKind.RBF and self.bandwidth is None:
            return KernelSpec(KernelKind.RBF, median_bandwidth(X))
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "bandwidth": self.bandwidth}


def median_bandwidth(X: np.ndarray) -> float:
    """Median pairwise Euclidean distance (1.0 when all points coincide)."""
    distances = pdist(np.asarray(X, dtype=float))
    positive = distances[distances > 0]
    return float(np.median(positive)) if positive.size else 1.0


def gram_matrix(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Kernel matrix K[a, b] = K(A_a, B_b).

    Linear: <a, b>. RBF: exp(-||a - b||^2 / (2 h^2)).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if kernel.kind == KernelKind.LINEAR:
        return A @ B.T
    if kernel.bandwidth is None:
        raise ConfigError("RBF kernel needs a resolved bandwidth", field="bandwidth")
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * kernel.bandwidth ** 2))


def comparable_pairs(time: np.ndarray, event: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j) with event_i and time_i < time_j."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    earlier = event[:, None] & (time[:, None] < time[None, :])
    i, j = np.nonzero(earlier)
    return i, j


def rank_hinge(scores: np.ndarray, pairs: Tuple[np.ndarray, np.ndarray], margin: float = 1.0) -> np.ndarray:
    """Per-pair loss max(0, margin - (f_j - f_i))."""
    i, j = pairs
    return np.maximum(0.0, margin - (scores[j] - scores[i]))


def regression_hinge(
    predictions: np.ndarray,
    log_time: np.ndarray,
    event: np.ndarray,
    epsilon: float = 0.0,
) -> np.ndarray:
    """Per-point loss: underestimation always, overestimation only for events."""
    residual = log_time - predictions
    under = np.maximum(0.0, residual - epsilon)
    over = np.where(event, np.maximum(0.0, -residual - epsilon), 0.0)
    return under + over


@dataclass
class SvmModel(ResultBase):
    """Fitted kernel expansion."""
    kernel: KernelSpec
    mode: SvmMode
    gamma: float
    dual_coefficients: np.ndarray
    support: np.ndarray
    intercept: Optional[float] = None
    mix: float = 1.0
    margin: float = 1.0
    epsilon: float = 0.0
    epochs: int = 0
    objective_trace: List[float] = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        values = gram_matrix(self.kernel, X, self.support) @ self.dual_coefficients
        return values + (self.intercept or 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel.to_dict(),
            "mode": self.mode.value,
            "gamma": self.gamma,
            "dual_coefficients": self.dual_coefficients.tolist(),
            "support": self.support.tolist(),
            "intercept": self.intercept,
            "mix": self.mix,
            "margin": self.margin,
            "epsilon": self.epsilon,
            "epochs": self.epochs,
            "objective_trace": list(self.objective_trace),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SvmModel":
        kernel = data["kernel"]
        return cls(
            kernel=KernelSpec(KernelKind(kernel["kind"]), kernel.get("bandwidth")),
            mode=SvmMode(data["mode"]),
            gamma=float(data["gamma"]),
            dual_coefficients=np.asarray(data["dual_coefficients"], dtype=float),
            support=np.asarray(data["support"], dtype=float),
            intercept=data.get("intercept"),
            mix=float(data.get("mix", 1.0)),
            margin=float(data.get("margin", 1.0)),
            epsilon=float(data.get("epsilon", 0.0)),
            epochs=int(data.get("epochs", 0)),
            objective_trace=list(data.get("objective_trace", [])),
        )


def predict(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """Decision values f(X); rank models give scores only (higher = longer survival)."""
    return model.decision_function(X)


def _objective(
    K: np.ndarray,
    alpha: np.ndarray,
    intercept: float,
    gamma: float,
    mix: float,
    pairs: Tuple[np.ndarray, np.ndarray],
    log_time: np.ndarray,
    event: np.ndarray,
    margin: float,
    epsilon: float,
) -> float:
    f = K @ alpha
    value = 0.5 * float(alpha @ f)
    if mix > 0:
        value += gamma * mix * float(rank_hinge(f, pairs, margin).sum())
    if mix < 1:
        value += gamma * (1.0 - mix) * float(regression_hinge(f + intercept, log_time, event, epsilon).sum())
    return value


def svm_objective(model: SvmModel, ds: SurvivalDataset) -> float:
    """Objective of a fitted model on a dataset (all comparable pairs, no cap)."""
    K = gram_matrix(model.kernel, model.support, model.support)
    norm_sq = float(model.dual_coefficients @ K @ model.dual_coefficients)
    f = predict(model, ds.X)
    value = 0.5 * norm_sq
    if model.mix > 0:
        value += model.gamma * model.mix * float(rank_hinge(f, comparable_pairs(ds.time, ds.event), model.margin).sum())
    if model.mix < 1:
        losses = regression_hinge(f, np.log(ds.time), ds.event, model.epsilon)
        value += model.gamma * (1.0 - model.mix) * float(losses.sum())
    return value


def _fit(
    ds: SurvivalDataset,
    kernel: KernelSpec,
    gamma: float,
    mix: float,
    mode: SvmMode,
    margin: float,
    epsilon: float,
    epochs: Optional[int],
    seed: Optional[int],
) -> SvmModel:
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}", field="gamma")
    if not 0.0 <= mix <= 1.0:
        raise ConfigError(f"mix must lie in [0, 1], got {mix}", field="mix")
    epochs = settings.SVM_EPOCHS if epochs is None else epochs
    start_time = time.perf_counter()

    kernel = kernel.resolve(ds.X)
    K = gram_matrix(kernel, ds.X, ds.X)
    n = ds.n

    pairs: Tuple[np.ndarray, np.ndarray] = (np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    if mix > 0:
        pairs = comparable_pairs(ds.time, ds.event)
        if pairs[0].size == 0:
            raise DegenerateDataError("No comparable pairs: need an event before some later time")
        if pairs[0].size > settings.SVM_MAX_PAIRS:
            logger.info(f"Subsampling {settings.SVM_MAX_PAIRS} of {pairs[0].size} comparable pairs")
            keep = np.sort(np.random.default_rng(seed).choice(pairs[0].size, settings.SVM_MAX_PAIRS, replace=False))
            pairs = (pairs[0][keep], pairs[1][keep])

    uses_regression = mix < 1
    if uses_regression:
        if np.any(ds.time <= 0):
            raise DegenerateDataError("Log-time targets need strictly positive times")
        log_time = np.log(ds.time)
    else:
        log_time = np.zeros(n)

    loss_terms = mix * pairs[0].size + (1.0 - mix) * n
    scale = max(float(np.max(np.diag(K))), 1e-12)
    step0 = min(1.0, 1.0 / (gamma * loss_terms * scale))

    alpha = np.zeros(n)
    intercept = float(log_time.mean()) if uses_regression else 0.0
    avg_alpha, avg_intercept = alpha.copy(), intercept
    best = (np.inf, avg_alpha.copy(), avg_intercept)
    trace: List[float] = []
    i_idx, j_idx = pairs

    for t in range(1, epochs + 1):
        f = K @ alpha
        coef = np.zeros(n)
        coef_intercept = 0.0
        if mix > 0:
            active = (f[j_idx] - f[i_idx]) < margin
            rank_coef = np.bincount(i_idx[active], minlength=n) - np.bincount(j_idx[active], minlength=n)
            coef += mix * rank_coef
        if uses_regression:
            residual = log_time - (f + intercept)
            over = ds.event & (-residual > epsilon)
            reg_coef = over.astype(float) - (residual > epsilon).astype(float)
            coef += (1.0 - mix) * reg_coef
            coef_intercept = (1.0 - mix) * float(reg_coef.sum())

        step = step0 / np.sqrt(t)
        alpha = (1.0 - step) * alpha - step * gamma * coef
        if uses_regression:
            intercept -= step * gamma * coef_intercept
        avg_alpha += (alpha - avg_alpha) / t
        avg_intercept += (intercept - avg_intercept) / t

        if t % settings.SVM_CHECKPOINT == 0 or t == epochs:
            value = _objective(K, avg_alpha, avg_intercept, gamma, mix, pairs, log_time, ds.event, margin, epsilon)
            if value < best[0]:
                best = (value, avg_alpha.copy(), avg_intercept)
            trace.append(best[0])

    model = SvmModel(
        kernel=kernel,
        mode=mode,
        gamma=float(gamma),
        dual_coefficients=best[1],
        support=ds.X.copy(),
        intercept=float(best[2]) if uses_regression else None,
        mix=float(mix),
        margin=float(margin),
        epsilon=float(epsilon),
        epochs=epochs,
        objective_trace=trace,
    )
    record_fit(f"svm_{mode.value}", True, start_time)
    logger.debug(f"{mode.value} SVM objective {trace[-1] if trace else float('nan'):.6g} after {epochs} epochs")
    return model


def fit_rank_svm(
    ds: SurvivalDataset,
    kernel: Optional[KernelSpec] = None,
    gamma: float = 1.0,
    margin: float = 1.0,
    epochs: Optional[int] = None,
    seed: Optional[int] = None,
) -> SvmModel:
    """
    Ranking SVM over comparable pairs.

    Raises:
        DegenerateDataError: No comparable pairs
    """
    return _fit(ds, kernel or KernelSpec(), gamma, 1.0, SvmMode.RANK, margin, 0.0, epochs, seed)


def fit_regression_svm(
    ds: SurvivalDataset,
    kernel: Optional[KernelSpec] = None,
    gamma: float = 1.0,
    epsilon: float = 0.0,
    epochs: Optional[int] = None,
) -> SvmModel:
    """Censoring-aware regression SVM on log times with an intercept."""
    return _fit(ds, kernel or KernelSpec(), gamma, 0.0, SvmMode.REGRESSION, 1.0, epsilon, epochs, None)


def fit_hybrid_svm(
    ds: SurvivalDataset,
    kernel: Optional[KernelSpec] = None,
    gamma: float = 1.0,
    mix: float = 0.5,
    margin: float = 1.0,
    epsilon: float = 0.0,
    epochs: Optional[int] = None,
    seed: Optional[int] = None,
) -> SvmModel:
    """Weighted combination mix * rank loss + (1 - mix) * regression loss."""
    return _fit(ds, kernel or KernelSpec(), gamma, mix, SvmMode.HYBRID, margin, epsilon, epochs, seed)
