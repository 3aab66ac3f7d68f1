# File: hdsurv/tests/test_svm.py

import numpy as np
import pytest

from src.data.records import SurvivalDataset
from src.errors import ConfigError, DegenerateDataError
from src.learners.svm import (
    KernelSpec,
    SvmModel,
    comparable_pairs,
    fit_hybrid_svm,
    fit_rank_svm,
    fit_regression_svm,
    gram_matrix,
    predict,
    rank_hinge,
    regression_hinge,
    svm_objective,
)
from src.nonparam.concordance import c_index


def simulate_sine_risk(n, seed):
    """Survival driven by sin(2x): no monotone trend in x."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3.0, 3.0, size=n)
    T = np.exp(-1.5 * np.sin(2.0 * x) + 0.3 * rng.normal(size=n))
    C = rng.exponential(8.0, size=n)
    return SurvivalDataset(time=np.minimum(T, C), event=T <= C, X=x[:, None])


def simulate_log_linear(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    T = np.exp(0.5 + 1.5 * x + 0.3 * rng.normal(size=n))
    C = np.exp(rng.uniform(1.0, 4.0, size=n))
    return SurvivalDataset(time=np.minimum(T, C), event=T <= C, X=x[:, None])


class TestKernels:
    """Tests for kernel construction."""

    def test_rbf_gram_is_psd(self):
        """Test symmetry and a jittered Cholesky factorization."""
        X = np.random.default_rng(0).normal(size=(30, 3))
        K = gram_matrix(KernelSpec.rbf(1.2), X, X)
        assert np.allclose(K, K.T)
        np.linalg.cholesky(K + 1e-10 * np.eye(30))
        assert np.allclose(np.diag(K), 1.0)

    def test_linear_gram(self):
        """Test the inner-product kernel."""
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        assert np.array_equal(gram_matrix(KernelSpec(), A, A), A @ A.T)

    def test_invalid_bandwidth(self):
        """Test that a non-positive bandwidth is rejected."""
        with pytest.raises(ConfigError):
            KernelSpec.rbf(0.0)

    def test_median_bandwidth_resolved(self):
        """Test that the default RBF bandwidth is the median pairwise distance."""
        X = np.array([[0.0], [1.0], [3.0]])
        assert KernelSpec.rbf().resolve(X).bandwidth == pytest.approx(2.0)


class TestLosses:
    """Tests for the hinge losses."""

    def test_rank_slack_semantics(self):
        """Test zero loss beyond the margin and the exact hinge value inside it."""
        scores = np.array([0.0, 1.5, 0.4, -1.0])
        pairs = (np.array([0, 0, 0]), np.array([1, 2, 3]))
        assert rank_hinge(scores, pairs, margin=1.0).tolist() == pytest.approx([0.0, 0.6, 2.0])

    def test_rank_shift_invariance(self):
        """Test that adding a constant to every score leaves the rank loss unchanged."""
        rng = np.random.default_rng(1)
        scores = rng.normal(size=12)
        pairs = comparable_pairs(rng.uniform(size=12), rng.uniform(size=12) < 0.6)
        assert np.allclose(rank_hinge(scores + 7.3, pairs), rank_hinge(scores, pairs))

    def test_regression_censored_one_sided(self):
        """Test that censored over-predictions cost nothing however large."""
        log_time = np.array([2.0, 2.0])
        event = np.array([False, False])
        assert regression_hinge(np.array([3.0, 4.0]), log_time, event).tolist() == [0.0, 0.0]
        assert regression_hinge(np.array([30.0, 40.0]), log_time, event).tolist() == [0.0, 0.0]
        assert regression_hinge(np.array([1.5]), np.array([2.0]), np.array([False]))[0] == 0.5

    def test_comparable_pairs(self, toy_dataset):
        """Test the pair set of the three-subject example."""
        i, j = comparable_pairs(toy_dataset.time, toy_dataset.event)
        assert list(zip(i.tolist(), j.tolist())) == [(0, 1), (0, 2)]


class TestRankSvm:
    """Tests for the ranking SVM."""

    def test_two_separable_points(self):
        """Test that an event before a later survivor is ranked correctly."""
        ds = SurvivalDataset(time=[1.0, 2.0], event=[True, False], X=[[0.0], [1.0]])
        model = fit_rank_svm(ds, gamma=1.0)
        scores = predict(model, ds.X)
        assert scores[1] > scores[0]
        assert c_index(ds, -scores) == 1.0
        assert model.intercept is None

    def test_duplicated_points(self):
        """Test that duplicating the data with gamma / 4 leaves the decision function unchanged."""
        ds = simulate_sine_risk(25, seed=2)
        doubled = SurvivalDataset(
            time=np.concatenate([ds.time, ds.time]),
            event=np.concatenate([ds.event, ds.event]),
            X=np.vstack([ds.X, ds.X]),
        )
        base = fit_rank_svm(ds, gamma=0.4, epochs=200)
        dup = fit_rank_svm(doubled, gamma=0.1, epochs=200)
        grid = np.linspace(-3, 3, 13)[:, None]
        assert np.allclose(predict(base, grid), predict(dup, grid), atol=1e-6)

    def test_rbf_beats_linear_on_nonlinear_risk(self):
        """Test held-out concordance on a sine-shaped risk."""
        train, test = simulate_sine_risk(120, seed=3), simulate_sine_risk(200, seed=4)
        linear = fit_rank_svm(train, KernelSpec(), gamma=1.0)
        rbf = fit_rank_svm(train, KernelSpec.rbf(0.5), gamma=1.0)
        linear_c = c_index(test, -predict(linear, test.X))
        rbf_c = c_index(test, -predict(rbf, test.X))
        assert rbf_c > linear_c
        assert rbf_c > 0.65

    def test_objective_trace_non_increasing(self):
        """Test the checkpointed objective sequence."""
        model = fit_rank_svm(simulate_sine_risk(40, seed=5), KernelSpec.rbf(), gamma=1.0, epochs=500)
        trace = np.asarray(model.objective_trace)
        assert trace.size == 5
        assert np.all(np.diff(trace) <= 1e-8)

    def test_no_comparable_pairs(self):
        """Test that fully censored data cannot be ranked."""
        ds = SurvivalDataset(time=[1.0, 2.0, 3.0], event=[False, False, False], X=np.eye(3))
        with pytest.raises(DegenerateDataError):
            fit_rank_svm(ds)

    def test_invalid_gamma(self, toy_dataset):
        """Test the regularization precondition."""
        with pytest.raises(ConfigError):
            fit_rank_svm(toy_dataset, gamma=0.0)


class TestRegressionSvm:
    """Tests for the censoring-aware regression SVM."""

    def test_constant_outcome(self):
        """Test that a constant log time is reproduced exactly."""
        rng = np.random.default_rng(6)
        ds = SurvivalDataset(time=np.full(10, np.e), event=np.ones(10, dtype=bool), X=rng.normal(size=(10, 2)))
        model = fit_regression_svm(ds, gamma=1.0)
        assert np.allclose(predict(model, rng.normal(size=(4, 2))), 1.0, atol=1e-12)

    def test_beats_intercept_only(self):
        """Test held-out absolute error against the training mean log time."""
        train, test = simulate_log_linear(100, seed=7), simulate_log_linear(200, seed=8)
        model = fit_regression_svm(train, gamma=1.0)
        events = test.event
        target = np.log(test.time[events])
        model_mae = np.mean(np.abs(predict(model, test.X[events]) - target))
        baseline_mae = np.mean(np.abs(np.log(train.time).mean() - target))
        assert model_mae < baseline_mae

    def test_serialization(self):
        """Test that a restored model predicts identically."""
        ds = simulate_log_linear(30, seed=9)
        model = fit_regression_svm(ds, KernelSpec.rbf(), gamma=0.5, epochs=100)
        restored = SvmModel.from_dict(model.to_dict())
        assert np.array_equal(predict(restored, ds.X), predict(model, ds.X))
        assert restored.intercept == model.intercept


class TestHybridSvm:
    """Tests for the mixed objective."""

    def test_endpoints(self):
        """Test that mix = 1 and mix = 0 reproduce the pure fits."""
        ds = simulate_log_linear(40, seed=10)
        rank = fit_rank_svm(ds, gamma=0.5, epochs=150)
        regression = fit_regression_svm(ds, gamma=0.5, epochs=150)
        hybrid_rank = fit_hybrid_svm(ds, gamma=0.5, mix=1.0, epochs=150)
        hybrid_regression = fit_hybrid_svm(ds, gamma=0.5, mix=0.0, epochs=150)
        assert np.allclose(hybrid_rank.dual_coefficients, rank.dual_coefficients, atol=1e-12)
        assert hybrid_rank.intercept is None
        assert np.allclose(hybrid_regression.dual_coefficients, regression.dual_coefficients, atol=1e-12)
        assert hybrid_regression.intercept == pytest.approx(regression.intercept, abs=1e-12)

    def test_mixed_objective_sanity(self):
        """Test that the mixed optimum is not far below the pure optima."""
        ds = simulate_log_linear(60, seed=11)
        rank = svm_objective(fit_rank_svm(ds, gamma=0.5), ds)
        regression = svm_objective(fit_regression_svm(ds, gamma=0.5), ds)
        hybrid = svm_objective(fit_hybrid_svm(ds, gamma=0.5, mix=0.5), ds)
        assert hybrid >= 0.5 * min(rank, regression)
        assert np.isfinite(hybrid)

    def test_invalid_mix(self, toy_dataset):
        """Test the mix range."""
        with pytest.raises(ConfigError):
            fit_hybrid_svm(toy_dataset, mix=1.5)
