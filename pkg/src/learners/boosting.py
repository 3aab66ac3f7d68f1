"""
Gradient boosting with the Cox partial-likelihood loss.

F_0 = 0; each step fits a depth-limited least-squares regression tree to the
negative gradient of the negative log partial likelihood with respect to the
current per-subject predictions and adds it with weight w_m.

File: hdsurv/src/learners/boosting.py
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from src.cox.partial_likelihood import CoxObjective
from src.data.records import SurvivalDataset
from src.errors import ConfigError, DimensionError
from src.models.base import ResultBase, record_fit

logger = logging.getLogger(__name__)

# Step halvings tried before a step is dropped
MAX_HALVINGS = 30


@dataclass
class BoostFit(ResultBase):
    """Staged additive model F_M(x) = baseline + sum w_m f_m(x)."""
    baseline: float
    learners: List[DecisionTreeRegressor]
    weights: np.ndarray
    tree_depth: int
    n_features: int
    loss_trace: List[float] = field(default_factory=list)

    @property
    def m_steps(self) -> int:
        return len(self.learners)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": self.baseline,
            "m_steps": self.m_steps,
            "weights": self.weights.tolist(),
            "tree_depth": self.tree_depth,
            "n_features": self.n_features,
            "loss_trace": list(self.loss_trace),
            "learners": [
                {
                    "children_left": learner.tree_.children_left.tolist(),
                    "children_right": learner.tree_.children_right.tolist(),
                    "feature": learner.tree_.feature.tolist(),
                    "threshold": learner.tree_.threshold.tolist(),
                    "value": learner.tree_.value.reshape(-1).tolist(),
                }
                for learner in self.learners
            ],
        }


def predict_boost(fit: BoostFit, X: np.ndarray, m: Optional[int] = None) -> np.ndarray:
    """
    Boosted log-risk predictions.

    Args:
        fit: Boosted model
        X: Covariates (n_rows, p)
        m: Use only the first m learners (default all)

    Returns:
        F_m(X)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != fit.n_features:
        raise DimensionError(f"Model expects {fit.n_features} covariates, got {X.shape[1]}")
    m = fit.m_steps if m is None else m
    out = np.full(X.shape[0], fit.baseline)
    for learner, w in zip(fit.learners[:m], fit.weights[:m]):
        out += w * learner.predict(X)
    return out


def boost_fit(
    ds: SurvivalDataset,
    M: int = 100,
    w: float = 0.1,
    tree_depth: int = 2,
    seed: Optional[int] = None,
) -> BoostFit:
    """
    Boost regression trees on Cox pseudo-residuals.

    A step that would raise the training loss is halved until it does not, so
    the loss trace never increases and every w_m stays in (0, w].

    Args:
        ds: Training data
        M: Number of boosting steps (0 gives the baseline-only model)
        w: Step size in (0, 1]
        tree_depth: Depth of each regression tree
        seed: Tie-breaking seed for the trees

    Returns:
        BoostFit with the training loss after every step
    """
    start_time = time.perf_counter()
    if M < 0:
        raise ConfigError(f"Number of boosting steps must be >= 0, got {M}", field="M")
    if not 0.0 < w <= 1.0:
        raise ConfigError(f"Step size must lie in (0, 1], got {w}", field="w")
    if tree_depth < 1:
        raise ConfigError(f"Tree depth must be >= 1, got {tree_depth}", field="tree_depth")

    objective = CoxObjective(ds.time, ds.event)
    rng = np.random.default_rng(seed)
    F = np.zeros(ds.n)
    loss = objective.value_eta(F)
    trace = [loss]
    learners: List[DecisionTreeRegressor] = []
    weights: List[float] = []

    for m in range(M):
        pseudo_residual = -objective.gradient_eta(F)
        learner = DecisionTreeRegressor(
            max_depth=tree_depth, random_state=int(rng.integers(0, 2**31 - 1))
        )
        learner.fit(ds.X, pseudo_residual)
        step = learner.predict(ds.X)

        w_m = w
        candidate = objective.value_eta(F + w_m * step)
        for _ in range(MAX_HALVINGS):
            if candidate <= loss:
                break
            w_m /= 2.0
            candidate = objective.value_eta(F + w_m * step)
        if candidate > loss:
            logger.warning(f"Boosting stalled at step {m}: no descent along the fitted tree")
            break
        if w_m < w:
            logger.debug(f"Step {m} shortened to {w_m}")

        F = F + w_m * step
        loss = candidate
        learners.append(learner)
        weights.append(w_m)
        trace.append(loss)

    fit = BoostFit(
        baseline=0.0,
        learners=learners,
        weights=np.asarray(weights, dtype=float),
        tree_depth=tree_depth,
        n_features=ds.p,
        loss_trace=trace,
    )
    duration_ms = record_fit("boost", True, start_time)
    logger.info(f"Boosted {fit.m_steps} trees in {duration_ms}ms, training loss {loss:.4f}")
    return fit
