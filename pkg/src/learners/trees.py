"""
Survival trees by recursive partitioning.

At every node each candidate covariate is scanned over all midpoints between
its sorted unique values. The split with the largest statistic is taken when
its asymptotic chi-square p-value is below alpha_stop and both children keep
at least min_events events; otherwise the node becomes terminal and stores
its Kaplan-Meier and Nelson-Aalen curves. Observations with x <= threshold
go left.

File: hdsurv/src/learners/trees.py
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError
from src.nonparam.estimators import kaplan_meier, nelson_aalen
from src.nonparam.logrank import logrank_split_scan
from src.nonparam.step_function import StepFunction

logger = logging.getLogger(__name__)


class SplitCriterion(str, Enum):
    """Split statistic: log-rank, or between-group contrast of null-model residuals."""
    LOGRANK = "logrank"
    MARTINGALE = "martingale"
    DEVIANCE = "deviance"


class TreeOptions(BaseModel):
    """Growth controls."""
    min_events: int = Field(default=5, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=0)
    alpha_stop: float = Field(default=0.05, gt=0, le=1)
    criterion: SplitCriterion = SplitCriterion.LOGRANK
    mtry: Optional[int] = Field(default=None, ge=1)


@dataclass
class TreeNode:
    """Split node (feature set) or terminal node (curves set)."""
    n_node: int
    events_node: int
    depth: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    survival: Optional[StepFunction] = None
    chf: Optional[StepFunction] = None

    @property
    def is_terminal(self) -> bool:
        return self.feature is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_node": self.n_node,
            "events_node": self.events_node,
            "depth": self.depth,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "survival": None if self.survival is None else self.survival.to_dict(),
            "chf": None if self.chf is None else self.chf.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TreeNode":
        curves = {
            key: None if data.get(key) is None else StepFunction.from_dict(data[key])
            for key in ("survival", "chf")
        }
        return cls(
            n_node=int(data["n_node"]),
            events_node=int(data["events_node"]),
            depth=int(data["depth"]),
            feature=data.get("feature"),
            threshold=data.get("threshold"),
            left=data.get("left"),
            right=data.get("right"),
            statistic=data.get("statistic"),
            p_value=data.get("p_value"),
            **curves,
        )


@dataclass
class SurvivalTree:
    """Node arena; node 0 is the root."""
    nodes: List[TreeNode]
    options: TreeOptions
    n_features: int
    feature_names: Tuple[str, ...] = ()

    @property
    def terminals(self) -> List[int]:
        return [k for k, node in enumerate(self.nodes) if node.is_terminal]

    def terminal_index(self, x: np.ndarray) -> int:
        """Route one covariate vector to its terminal node."""
        k = 0
        node = self.nodes[0]
        while not node.is_terminal:
            k = node.left if x[node.feature] <= node.threshold else node.right
            node = self.nodes[k]
        return k

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Terminal node index for every row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionError(f"Tree expects {self.n_features} covariates, got {X.shape[1]}")
        return np.array([self.terminal_index(row) for row in X], dtype=int)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [node.to_dict() for node in self.nodes],
            "options": self.options.model_dump(mode="json"),
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SurvivalTree":
        return cls(
            nodes=[TreeNode.from_dict(node) for node in data["nodes"]],
            options=TreeOptions(**data["options"]),
            n_features=int(data["n_features"]),
            feature_names=tuple(data.get("feature_names", ())),
        )


def null_residuals(time: np.ndarray, event: np.ndarray, kind: SplitCriterion) -> np.ndarray:
    """
    Martingale residuals delta - H(Y) of the no-covariate model, or their
    deviance transform sign(r) sqrt(-2 [r + delta log(delta - r)]).
    """
    chf = nelson_aalen((time, event))
    martingale = event.astype(float) - np.asarray(chf(time), dtype=float)
    if kind == SplitCriterion.MARTINGALE:
        return martingale
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(event, np.log(np.where(event, event - martingale, 1.0)), 0.0)
    return np.sign(martingale) * np.sqrt(np.maximum(-2.0 * (martingale + event * log_term), 0.0))


def residual_split_scan(
    residual: np.ndarray, event: np.ndarray, x: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-group contrast n_L n_R / n (mean_L - mean_R)^2 / s^2 for every midpoint split.

    Returns:
        (thresholds, statistics, left_events, right_events)
    """
    order = np.argsort(x, kind="stable")
    xs, rs = x[order], residual[order]
    boundary = np.flatnonzero(xs[1:] > xs[:-1])
    n = xs.size
    if boundary.size == 0:
        empty = np.empty(0)
        return empty, empty, empty.astype(int), empty.astype(int)
    variance = float(np.var(rs, ddof=1)) if n > 1 else 0.0
    n_left = boundary + 1.0
    n_right = n - n_left
    left_sum = np.cumsum(rs)[boundary]
    mean_left = left_sum / n_left
    mean_right = (rs.sum() - left_sum) / n_right
    if variance > 0:
        statistics = n_left * n_right / n * (mean_left - mean_right) ** 2 / variance
    else:
        statistics = np.zeros(boundary.size)
    left_events = np.cumsum(event[order])[boundary]
    return (xs[boundary] + xs[boundary + 1]) / 2.0, statistics, left_events, int(event.sum()) - left_events


def _best_split(
    time: np.ndarray,
    event: np.ndarray,
    X: np.ndarray,
    residual: Optional[np.ndarray],
    features: Sequence[int],
    options: TreeOptions,
) -> Optional[Tuple[int, float, float]]:
    """Best admissible (feature, threshold, statistic) over the candidate features."""
    best: Optional[Tuple[int, float, float]] = None
    for j in features:
        if options.criterion == SplitCriterion.LOGRANK:
            scan = logrank_split_scan(time, event, X[:, j])
            thresholds, statistics = scan.thresholds, scan.statistics
            left_events, right_events = scan.left_events, scan.right_events
        else:
            thresholds, statistics, left_events, right_events = residual_split_scan(residual, event, X[:, j])
        admissible = (left_events >= options.min_events) & (right_events >= options.min_events)
        if not admissible.any():
            continue
        candidates = np.flatnonzero(admissible)
        k = int(candidates[np.argmax(statistics[candidates])])
        if best is None or statistics[k] > best[2]:
            best = (int(j), float(thresholds[k]), float(statistics[k]))
    return best


def grow_tree(
    ds: SurvivalDataset,
    options: Optional[TreeOptions] = None,
    rng: Optional[np.random.Generator] = None,
) -> SurvivalTree:
    """
    Grow a survival tree.

    Args:
        ds: Training data (bootstrap samples may repeat rows)
        options: Growth controls; options.mtry < p draws a random feature
            subset at every split from rng
        rng: Generator for feature subsets

    Returns:
        SurvivalTree

    Raises:
        DegenerateDataError: Fewer than 2 * min_events events
    """
    options = options or TreeOptions()
    if ds.n_events < 2 * options.min_events:
        raise DegenerateDataError(
            f"Tree growing needs at least {2 * options.min_events} events, got {ds.n_events}"
        )
    rng = rng or np.random.default_rng(0)
    p = ds.p
    mtry = p if options.mtry is None else min(options.mtry, p)
    residual = None
    if options.criterion != SplitCriterion.LOGRANK:
        residual = null_residuals(ds.time, ds.event, options.criterion)

    nodes: List[TreeNode] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        time, event = ds.time[rows], ds.event[rows]
        index = len(nodes)
        node = TreeNode(n_node=int(rows.size), events_node=int(event.sum()), depth=depth)
        nodes.append(node)

        split = None
        can_split = options.max_depth is None or depth < options.max_depth
        if can_split and node.events_node >= 2 * options.min_events:
            features = range(p) if mtry >= p else np.sort(rng.choice(p, mtry, replace=False))
            node_residual = None if residual is None else residual[rows]
            split = _best_split(time, event, ds.X[rows], node_residual, features, options)

        if split is not None:
            feature, threshold, statistic = split
            p_value = float(stats.chi2.sf(statistic, df=1))
            if p_value < options.alpha_stop:
                node.feature, node.threshold = feature, threshold
                node.statistic, node.p_value = statistic, p_value
                goes_left = ds.X[rows, feature] <= threshold
                node.left = grow(rows[goes_left], depth + 1)
                node.right = grow(rows[~goes_left], depth + 1)
                return index

        node.survival = kaplan_meier((time, event))
        node.chf = nelson_aalen((time, event))
        return index

    grow(np.arange(ds.n), 0)
    tree = SurvivalTree(nodes=nodes, options=options, n_features=p, feature_names=ds.feature_names)
    logger.debug(f"Grew tree with {len(tree.terminals)} terminal nodes")
    return tree


def predict_tree(tree: SurvivalTree, x: np.ndarray) -> Dict[str, StepFunction]:
    """Survival and cumulative hazard curves of the terminal node reached by x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != tree.n_features:
        raise DimensionError(f"Tree expects {tree.n_features} covariates, got {x.size}")
    node = tree.nodes[tree.terminal_index(x)]
    return {"survival": node.survival, "chf": node.chf}
