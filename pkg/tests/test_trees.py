# File: hdsurv/tests/test_trees.py

from itertools import product

import numpy as np
import pytest

from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, DimensionError
from src.learners.trees import (
    SplitCriterion,
    SurvivalTree,
    TreeOptions,
    grow_tree,
    null_residuals,
    predict_tree,
)
from src.nonparam.estimators import kaplan_meier
from src.nonparam.logrank import logrank_arrays
from tests.conftest import simulate_cox


def nested_signal_dataset():
    """
    Three binary covariates with nested effects: x1 = 1 fails first; among
    x1 = 0, x2 = 1 fails next; among x1 = x2 = 0, x3 splits once more. Every
    cell sharing a scale has identical times, so the null splits score zero.
    """
    X, time = [], []
    for x1, x2, x3 in product([0, 1], repeat=3):
        if x1 == 1:
            scale = 0.01
        elif x2 == 1:
            scale = 1.0
        else:
            scale = 100.0 if x3 == 1 else 10000.0
        X.extend([[x1, x2, x3]] * 10)
        time.extend(scale * np.arange(1, 11))
    time = np.asarray(time, dtype=float)
    return SurvivalDataset(time=time, event=np.ones(time.size, dtype=bool), X=np.asarray(X, dtype=float))


def separated_dataset(n=200, seed=3):
    """Binary covariate 0 switches the hazard from 1 to 5; three noise columns."""
    rng = np.random.default_rng(seed)
    group = rng.permutation(np.repeat([0.0, 1.0], n // 2))
    X = np.column_stack([group, rng.normal(size=(n, 3))])
    T = rng.exponential(1.0 / np.where(group == 1, 5.0, 1.0))
    C = rng.exponential(5.0, size=n)
    return SurvivalDataset(time=np.minimum(T, C), event=T <= C, X=X)


class TestGrowTree:
    """Tests for recursive partitioning."""

    def test_nested_signals_give_four_terminals(self):
        """Test the three-split, four-terminal shape of nested binary signals."""
        tree = grow_tree(nested_signal_dataset())
        assert len(tree.terminals) == 4
        root = tree.nodes[0]
        assert root.feature == 0
        assert root.threshold == 0.5
        second = tree.nodes[root.left]
        assert second.feature == 1
        third = tree.nodes[second.left]
        assert third.feature == 2
        assert tree.nodes[root.right].is_terminal
        assert tree.nodes[second.right].is_terminal

    def test_separating_covariate_at_root(self):
        """Test that the root splits on the covariate driving the hazard."""
        tree = grow_tree(separated_dataset())
        assert tree.nodes[0].feature == 0

    def test_null_covariate_rarely_splits(self):
        """Test that pure noise splits at about the nominal rate."""
        splits = 0
        for seed in range(40):
            rng = np.random.default_rng(100 + seed)
            group = rng.permutation(np.repeat([0.0, 1.0], 25))
            ds = SurvivalDataset(
                time=rng.exponential(1.0, size=50), event=np.ones(50, dtype=bool), X=group[:, None]
            )
            tree = grow_tree(ds, TreeOptions(alpha_stop=0.05))
            splits += len(tree.terminals) > 1
        assert splits <= 6

    def test_terminal_min_events(self):
        """Test that every terminal keeps at least min_events events."""
        ds = simulate_cox(300, [1.0, -1.0, 0.5, 0.0], seed=4)
        tree = grow_tree(ds, TreeOptions(min_events=8, alpha_stop=0.2))
        assert len(tree.terminals) > 1
        for k in tree.terminals:
            assert tree.nodes[k].events_node >= 8
        assert len(tree.nodes) == 2 * len(tree.terminals) - 1

    def test_training_subjects_partitioned(self):
        """Test that each training subject reaches exactly one terminal."""
        ds = simulate_cox(200, [1.0, -1.0, 0.0], seed=5)
        tree = grow_tree(ds)
        reached = tree.apply(ds.X)
        assert set(reached.tolist()) <= set(tree.terminals)
        for k in tree.terminals:
            assert np.sum(reached == k) == tree.nodes[k].n_node
        assert sum(tree.nodes[k].n_node for k in tree.terminals) == ds.n

    def test_split_statistic_matches_logrank(self):
        """Test that the stored root statistic equals a direct two-group log-rank test."""
        ds = separated_dataset(seed=6)
        root = grow_tree(ds).nodes[0]
        direct = logrank_arrays(ds.time, ds.event, ds.X[:, root.feature] <= root.threshold)
        assert root.statistic == pytest.approx(direct.statistic, rel=1e-10)
        assert root.p_value == pytest.approx(direct.p_value, rel=1e-8, abs=1e-300)

    @pytest.mark.parametrize("criterion", [SplitCriterion.MARTINGALE, SplitCriterion.DEVIANCE])
    def test_residual_criteria(self, criterion):
        """Test that residual-based criteria also find the separating covariate."""
        tree = grow_tree(separated_dataset(seed=7), TreeOptions(criterion=criterion))
        assert tree.nodes[0].feature == 0

    def test_martingale_residuals_sum_to_zero(self):
        """Test the null-model martingale residual identity."""
        ds = simulate_cox(80, [0.5], seed=8)
        residual = null_residuals(ds.time, ds.event, SplitCriterion.MARTINGALE)
        assert residual.sum() == pytest.approx(0.0, abs=1e-10)
        deviance = null_residuals(ds.time, ds.event, SplitCriterion.DEVIANCE)
        assert np.all(np.sign(deviance) == np.sign(residual))

    def test_too_few_events(self, toy_dataset):
        """Test the root event requirement."""
        with pytest.raises(DegenerateDataError):
            grow_tree(toy_dataset)


class TestPredictTree:
    """Tests for routing and terminal curves."""

    def test_single_node_returns_root_km(self):
        """Test that a depth-0 tree predicts the overall Kaplan-Meier curve."""
        ds = simulate_cox(60, [1.0, 0.0], seed=9)
        tree = grow_tree(ds, TreeOptions(max_depth=0))
        expected = kaplan_meier(ds)
        for x in ([0.0, 0.0], [5.0, -5.0]):
            curve = predict_tree(tree, x)["survival"]
            assert np.array_equal(curve.knots, expected.knots)
            assert np.array_equal(curve.values, expected.values)

    def test_hand_traced_routing(self):
        """Test routing through the nested tree, including the boundary rule."""
        tree = grow_tree(nested_signal_dataset())
        assert np.allclose(predict_tree(tree, [0, 0, 1])["survival"].knots, 100.0 * np.arange(1, 11))
        assert np.allclose(predict_tree(tree, [0, 1, 0])["survival"].knots, np.arange(1, 11))
        assert np.allclose(predict_tree(tree, [0.5, 0.0, 0.0])["survival"].knots, 10000.0 * np.arange(1, 11))
        assert np.allclose(predict_tree(tree, [0.51, 0.0, 0.0])["survival"].knots, 0.01 * np.arange(1, 11))

    def test_chf_is_nelson_aalen(self):
        """Test that the terminal hazard is non-decreasing from zero."""
        tree = grow_tree(nested_signal_dataset())
        chf = predict_tree(tree, [1, 0, 0])["chf"]
        assert chf.left_value == 0.0
        assert np.all(np.diff(chf.values) >= 0)
        assert chf.values[-1] == pytest.approx(sum(1.0 / k for k in range(1, 11)), rel=1e-12)

    def test_dimension_mismatch(self):
        """Test that a wrong covariate length is rejected."""
        tree = grow_tree(nested_signal_dataset())
        with pytest.raises(DimensionError):
            predict_tree(tree, [0.0, 1.0])

    def test_serialization(self):
        """Test that a restored tree routes and predicts identically."""
        ds = simulate_cox(150, [1.0, -1.0], seed=10)
        tree = grow_tree(ds)
        restored = SurvivalTree.from_dict(tree.to_dict())
        assert np.array_equal(restored.apply(ds.X), tree.apply(ds.X))
        x = ds.X[0]
        assert np.array_equal(predict_tree(restored, x)["survival"].values, predict_tree(tree, x)["survival"].values)
