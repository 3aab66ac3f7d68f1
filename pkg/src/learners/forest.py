"""
Bagged survival trees and random survival forests.

Both ensembles share one code path: B trees grown on bootstrap resamples of
size n, each split drawing `mtry` candidate features (bagging is mtry = p).
Survival predictions average the per-tree Kaplan-Meier curves and hazard
predictions average the per-tree Nelson-Aalen curves on the union knot grid.
Mortality, the ensemble risk score, sums the ensemble cumulative hazard over
the distinct training event times; the out-of-bag error is one minus the
concordance of mortality computed only from trees that did not see a subject.

File: hdsurv/src/learners/forest.py
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.data.records import SurvivalDataset
from src.errors import ConfigError, DegenerateDataError, DegenerateResampleError, DimensionError
from src.learners.trees import SurvivalTree, TreeOptions, grow_tree
from src.models.base import ResultBase, record_fit
from src.nonparam.concordance import c_index
from src.nonparam.step_function import StepFunction, average
from src.scheduler.jobs import JobScheduler

logger = logging.getLogger(__name__)


@dataclass
class Forest(ResultBase):
    """Tree ensemble with its out-of-bag bookkeeping."""
    trees: List[SurvivalTree]
    mtry: int
    oob_indices: List[np.ndarray]
    seed: Optional[int]
    event_times: np.ndarray
    bootstrap: bool = True
    oob_c_index: Optional[float] = None

    @property
    def b(self) -> int:
        return len(self.trees)

    @property
    def oob_error(self) -> Optional[float]:
        return None if self.oob_c_index is None else 1.0 - self.oob_c_index

    def to_dict(self) -> Dict[str, Any]:
        return {
            "b": self.b,
            "mtry": self.mtry,
            "seed": self.seed,
            "bootstrap": self.bootstrap,
            "oob_c_index": self.oob_c_index,
            "event_times": self.event_times.tolist(),
            "oob_indices": [idx.tolist() for idx in self.oob_indices],
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Forest":
        return cls(
            trees=[SurvivalTree.from_dict(tree) for tree in data["trees"]],
            mtry=int(data["mtry"]),
            oob_indices=[np.asarray(idx, dtype=int) for idx in data["oob_indices"]],
            seed=data.get("seed"),
            event_times=np.asarray(data["event_times"], dtype=float),
            bootstrap=bool(data.get("bootstrap", True)),
            oob_c_index=data.get("oob_c_index"),
        )


def _tree_mortality(tree: SurvivalTree, X: np.ndarray, event_times: np.ndarray) -> np.ndarray:
    """Per-row sum of one tree's cumulative hazard over the event times."""
    terminal = tree.apply(X)
    out = np.empty(terminal.size)
    for k in np.unique(terminal):
        out[terminal == k] = float(np.sum(tree.nodes[k].chf(event_times)))
    return out


def mortality(forest: Forest, X: np.ndarray) -> np.ndarray:
    """
    Ensemble mortality for every row of X.

    Args:
        forest: Fitted forest
        X: Covariate matrix (n_rows, p)

    Returns:
        Risk scores; higher means shorter expected survival
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = np.zeros(X.shape[0])
    for tree in forest.trees:
        total += _tree_mortality(tree, X, forest.event_times)
    return total / forest.b


def oob_concordance(forest: Forest, ds: SurvivalDataset) -> Optional[float]:
    """
    Concordance of out-of-bag mortality on the training data.

    Subjects that every tree saw are dropped. Returns None when no comparable
    pair remains.
    """
    sums = np.zeros(ds.n)
    counts = np.zeros(ds.n)
    for tree, oob in zip(forest.trees, forest.oob_indices):
        if oob.size == 0:
            continue
        sums[oob] += _tree_mortality(tree, ds.X[oob], forest.event_times)
        counts[oob] += 1
    scored = np.flatnonzero(counts > 0)
    if scored.size < 2:
        logger.warning("Too few out-of-bag subjects to score the forest")
        return None
    try:
        return c_index(ds.subset(scored), sums[scored] / counts[scored])
    except DegenerateDataError as e:
        logger.warning(f"Out-of-bag concordance undefined: {e}")
        return None


def forest_survival(forest: Forest, x: np.ndarray) -> StepFunction:
    """Pointwise mean of the per-tree survival curves at x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return average([tree.nodes[tree.terminal_index(x)].survival for tree in forest.trees])


def forest_chf(forest: Forest, x: np.ndarray) -> StepFunction:
    """Pointwise mean of the per-tree cumulative hazards at x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return average([tree.nodes[tree.terminal_index(x)].chf for tree in forest.trees])


def _fit_forest(
    ds: SurvivalDataset,
    B: int,
    mtry: int,
    tree_opts: Optional[TreeOptions],
    seed: Optional[int],
    n_jobs: Optional[int],
    bootstrap: bool,
    name: str,
) -> Forest:
    start_time = time.perf_counter()
    if B < 1:
        raise ConfigError(f"Number of trees must be positive, got {B}", field="B")
    if not 1 <= mtry <= ds.p:
        raise ConfigError(f"mtry must lie in [1, {ds.p}], got {mtry}", field="mtry")
    options = (tree_opts or TreeOptions()).model_copy(update={"mtry": mtry})
    if ds.n_events < 2 * options.min_events:
        raise DegenerateDataError(
            f"Forest needs at least {2 * options.min_events} events, got {ds.n_events}"
        )

    def one_tree(index: int, rng: np.random.Generator):
        if bootstrap:
            rows = np.sort(rng.integers(0, ds.n, size=ds.n))
        else:
            rows = np.arange(ds.n)
        sample = ds.subset(rows)
        if sample.n_events < 2 * options.min_events:
            raise DegenerateResampleError(f"Bootstrap sample {index} has {sample.n_events} events")
        tree = grow_tree(sample, options, rng)
        return tree, np.setdiff1d(np.arange(ds.n), rows)

    outcomes = JobScheduler(n_jobs=n_jobs, name="trees").map_seeded(one_tree, B, seed, raise_errors=True)
    grown = [outcome.value for outcome in outcomes if outcome.value is not None]
    if not grown:
        raise DegenerateDataError("Every bootstrap sample was degenerate")
    if len(grown) < B:
        logger.warning(f"{B - len(grown)} of {B} trees skipped")

    forest = Forest(
        trees=[tree for tree, _ in grown],
        mtry=mtry,
        oob_indices=[oob for _, oob in grown],
        seed=seed,
        event_times=np.unique(ds.time[ds.event]),
        bootstrap=bootstrap,
    )
    if bootstrap:
        forest.oob_c_index = oob_concordance(forest, ds)
    duration_ms = record_fit(name, True, start_time)
    logger.info(
        f"{name} grew {forest.b} trees (mtry={mtry}) in {duration_ms}ms, "
        f"OOB C-index {forest.oob_c_index}"
    )
    return forest


def bagging_fit(
    ds: SurvivalDataset,
    B: int = 100,
    tree_opts: Optional[TreeOptions] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    bootstrap: bool = True,
) -> Forest:
    """
    Bagged survival trees (every feature is a split candidate).

    Args:
        ds: Training data
        B: Number of trees
        tree_opts: Growth controls for each tree
        seed: Master seed; fixed seeds give identical forests for any n_jobs
        n_jobs: Worker count
        bootstrap: False grows every tree on the full data

    Returns:
        Forest
    """
    return _fit_forest(ds, B, ds.p, tree_opts, seed, n_jobs, bootstrap, "bagging")


def rsf_fit(
    ds: SurvivalDataset,
    B: int = 100,
    mtry: Optional[int] = None,
    tree_opts: Optional[TreeOptions] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    bootstrap: bool = True,
) -> Forest:
    """
    Random survival forest.

    Args:
        ds: Training data
        B: Number of trees
        mtry: Features drawn per split (default floor(sqrt(p)))
        tree_opts: Growth controls for each tree
        seed: Master seed
        n_jobs: Worker count
        bootstrap: False grows every tree on the full data

    Returns:
        Forest
    """
    mtry = max(1, int(math.sqrt(ds.p))) if mtry is None else mtry
    return _fit_forest(ds, B, mtry, tree_opts, seed, n_jobs, bootstrap, "rsf")


def forest_curves(forest: Forest, X: np.ndarray, grid: Sequence[float]) -> np.ndarray:
    """Ensemble survival for each row of X evaluated on a time grid (n_rows, len(grid))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != forest.trees[0].n_features:
        raise DimensionError(f"Forest expects {forest.trees[0].n_features} covariates, got {X.shape[1]}")
    grid = np.asarray(grid, dtype=float)
    return np.vstack([np.asarray(forest_survival(forest, row)(grid)).reshape(-1) for row in X])
