# File: hdsurv/tests/test_forest.py

import numpy as np
import pytest

from src.data.records import SurvivalDataset
from src.errors import ConfigError
from src.learners.forest import (
    Forest,
    bagging_fit,
    forest_chf,
    forest_survival,
    mortality,
    rsf_fit,
)
from src.learners.trees import TreeOptions, predict_tree
from src.nonparam.concordance import c_index
from tests.conftest import simulate_cox


def simulate_three_signals(n, seed):
    """Three equally strong signals among six covariates."""
    return simulate_cox(n, [1.0, -1.0, 1.0, 0.0, 0.0, 0.0], seed=seed)


class TestBagging:
    """Tests for bagged survival trees."""

    def test_without_bootstrap_equals_single_tree(self):
        """Test that identical trees average to the single tree."""
        ds = simulate_cox(120, [1.0, -1.0], seed=21)
        forest = bagging_fit(ds, B=3, seed=1, bootstrap=False)
        x = ds.X[3]
        single = predict_tree(forest.trees[0], x)["survival"]
        ensemble = forest_survival(forest, x)
        assert np.array_equal(ensemble.knots, single.knots)
        assert np.allclose(ensemble.values, single.values, atol=1e-12)

    def test_ensemble_within_tree_range(self):
        """Test that the ensemble curve lies between the per-tree curves."""
        ds = simulate_cox(150, [1.0, -1.0], seed=22)
        forest = bagging_fit(ds, B=10, seed=2)
        x = np.array([0.3, -0.2])
        grid = np.linspace(0.0, np.quantile(ds.time, 0.95), 50)
        per_tree = np.vstack([predict_tree(tree, x)["survival"](grid) for tree in forest.trees])
        ensemble = np.asarray(forest_survival(forest, x)(grid))
        assert np.all(ensemble >= per_tree.min(axis=0) - 1e-12)
        assert np.all(ensemble <= per_tree.max(axis=0) + 1e-12)

    def test_bagging_lowers_integrated_squared_error(self):
        """Test ensemble ISE against the mean single-tree ISE on known survival curves."""
        ds = simulate_cox(200, [1.0, 0.0], seed=23)
        forest = bagging_fit(ds, B=20, seed=3)
        grid = np.linspace(0.0, 2.0, 81)
        points = np.array([[-1.0, 0.0], [0.0, 0.5], [1.0, -0.5]])
        ensemble_ise, tree_ise = 0.0, 0.0
        for x in points:
            truth = np.exp(-grid * np.exp(x[0]))
            ensemble_ise += np.mean((np.asarray(forest_survival(forest, x)(grid)) - truth) ** 2)
            tree_ise += np.mean(
                [np.mean((np.asarray(predict_tree(t, x)["survival"](grid)) - truth) ** 2) for t in forest.trees]
            )
        assert ensemble_ise < tree_ise

    def test_invalid_tree_count(self, cox_dataset):
        """Test the B precondition."""
        with pytest.raises(ConfigError):
            bagging_fit(cox_dataset, B=0)


class TestRandomSurvivalForest:
    """Tests for random survival forests."""

    def test_full_mtry_matches_bagging(self):
        """Test that mtry = p follows the bagging path exactly."""
        ds = simulate_cox(100, [1.0, -1.0, 0.0], seed=24)
        bagged = bagging_fit(ds, B=5, seed=4)
        forest = rsf_fit(ds, B=5, mtry=3, seed=4)
        assert forest.to_dict() == bagged.to_dict()

    def test_deterministic_across_workers(self):
        """Test that the forest does not depend on the worker count."""
        ds = simulate_three_signals(120, seed=25)
        one = rsf_fit(ds, B=6, mtry=2, seed=5, n_jobs=1)
        two = rsf_fit(ds, B=6, mtry=2, seed=5, n_jobs=2)
        assert one.to_dict() == two.to_dict()

    def test_out_of_bag_fraction(self):
        """Test that about 36.8% of subjects are out of bag per tree."""
        ds = simulate_cox(200, [1.0, -1.0], seed=26)
        forest = rsf_fit(ds, B=50, mtry=1, seed=6)
        fraction = np.mean([oob.size for oob in forest.oob_indices]) / ds.n
        assert fraction == pytest.approx(0.368, abs=0.03)

    def test_oob_concordance_beats_single_tree(self):
        """Test forest OOB concordance against a single tree scored on held-out data."""
        ds = simulate_three_signals(400, seed=27)
        train, test = ds.subset(np.arange(300)), ds.subset(np.arange(300, 400))
        forest = rsf_fit(train, B=50, mtry=2, seed=7)
        single = bagging_fit(train, B=1, seed=7, bootstrap=False)
        single_c = c_index(test, mortality(single, test.X))
        assert forest.oob_c_index > 0.65
        assert forest.oob_c_index > single_c
        assert forest.oob_error == pytest.approx(1.0 - forest.oob_c_index)

    def test_mortality_orders_risk(self):
        """Test that higher linear risk gives higher mortality."""
        ds = simulate_cox(200, [1.5], seed=28)
        forest = rsf_fit(ds, B=20, seed=8)
        scores = mortality(forest, np.array([[-1.5], [0.0], [1.5]]))
        assert scores[0] < scores[2]

    def test_chf_non_decreasing(self):
        """Test the ensemble cumulative hazard shape."""
        ds = simulate_cox(150, [1.0, -1.0], seed=29)
        chf = forest_chf(rsf_fit(ds, B=10, seed=9), ds.X[0])
        assert chf.left_value == 0.0
        assert np.all(np.diff(chf.values) >= -1e-12)

    def test_serialization(self):
        """Test that a restored forest gives identical mortality."""
        ds = simulate_cox(100, [1.0, -1.0], seed=30)
        forest = rsf_fit(ds, B=4, mtry=1, seed=10)
        restored = Forest.from_dict(forest.to_dict())
        assert np.array_equal(mortality(restored, ds.X), mortality(forest, ds.X))
        assert restored.oob_c_index == forest.oob_c_index

    def test_invalid_mtry(self, cox_dataset):
        """Test that mtry above p is rejected."""
        with pytest.raises(ConfigError):
            rsf_fit(cox_dataset, B=2, mtry=4)

    def test_min_events_respected(self):
        """Test that tree options flow into every tree."""
        ds = SurvivalDataset(
            time=np.arange(1.0, 61.0), event=np.ones(60, dtype=bool), X=np.arange(60.0)[:, None]
        )
        forest = rsf_fit(ds, B=5, tree_opts=TreeOptions(min_events=10), seed=11)
        for tree in forest.trees:
            assert all(tree.nodes[k].events_node >= 10 for k in tree.terminals)
