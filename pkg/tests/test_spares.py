# File: hdsurv/tests/test_spares.py

import numpy as np
import pytest
from pydantic import ValidationError

from src.cox.partial_likelihood import fit_mple
from src.data.records import RegressionDataset, SurvivalDataset
from src.errors import ConfigError, DegenerateResampleError, RankDeficiencyError
from src.inference.cqr import QuantileGrid
from src.inference.spares import (
    FixedSelector,
    LassoSelector,
    RefitFamily,
    ScreenSelector,
    aggregate,
    fused_hdcqr,
    partial_regression,
    spares_fit,
)
from src.utils.metrics import metrics_collector


def simulate_linear(n, beta, seed, sigma=1.0):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.normal(size=(n, beta.size))
    return RegressionDataset(X=X, y=X @ beta + sigma * rng.normal(size=n))


def simulate_location_shift(n, seed, slope=0.8):
    """log T = slope * x1 + N(0, 0.5^2), x2 pure noise, no censoring."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    log_t = slope * X[:, 0] + 0.5 * rng.normal(size=n)
    return SurvivalDataset(time=np.exp(log_t), event=np.ones(n, dtype=bool), X=X)


def ols_with_intercept(X, y):
    Z = np.column_stack([np.ones(len(y)), X])
    return np.linalg.lstsq(Z, y, rcond=None)[0][1:]


class TestRefitFamily:
    """Tests for refit family construction."""

    def test_cqr_levels_end_at_tau(self):
        """Test that the quantile family walks the default grid up to tau."""
        family = RefitFamily.cqr(0.3)
        assert family.taus == pytest.approx([0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
        assert family.n_levels == 6

    def test_invalid_combinations(self):
        """Test that levels are required for cqr and rejected otherwise."""
        with pytest.raises(ValidationError):
            RefitFamily(kind="cqr")
        with pytest.raises(ValidationError):
            RefitFamily(kind="cox", taus=[0.5])
        with pytest.raises(ValidationError):
            RefitFamily(kind="cqr", taus=[0.4, 0.2])


class TestPartialRegression:
    """Tests for the low-dimensional refit."""

    def test_simple_regression_slope(self):
        """Test the closed-form slope on centered data."""
        ds = simulate_linear(30, [1.5], seed=1)
        x = ds.X[:, 0] - ds.X[:, 0].mean()
        y = ds.y - ds.y.mean()
        assert partial_regression(ds, [], 0) == pytest.approx((x @ y) / (x @ x), abs=1e-12)

    def test_target_inside_selection(self):
        """Test that j in S gives the joint coefficient of j."""
        ds = simulate_linear(40, [1.0, -0.5, 0.2], seed=2)
        joint = ols_with_intercept(ds.X[:, [0, 1]], ds.y)
        assert partial_regression(ds, [0, 1], 1) == pytest.approx(joint[1], abs=1e-10)

    def test_normal_equations_oracle(self):
        """Test a random 20x3 instance against an independent least-squares solve."""
        ds = simulate_linear(20, [0.3, 0.0, -1.0], seed=3)
        expected = ols_with_intercept(ds.X[:, [0, 1, 2]], ds.y)
        assert partial_regression(ds, [0, 2], 1) == pytest.approx(expected[1], abs=1e-10)

    def test_collinear_columns(self):
        """Test that duplicated information is reported with column indices."""
        rng = np.random.default_rng(4)
        x = rng.normal(size=15)
        ds = RegressionDataset(X=np.column_stack([x, 2.0 * x]), y=rng.normal(size=15))
        with pytest.raises(RankDeficiencyError) as exc_info:
            partial_regression(ds, [0], 1)
        assert len(exc_info.value.columns) == 1

    def test_cox_family(self, cox_dataset):
        """Test that the Cox refit is the partial-likelihood estimate."""
        expected = fit_mple(cox_dataset.select_columns([0, 2])).beta
        value = partial_regression(cox_dataset, [2], 0, RefitFamily.cox())
        assert value == pytest.approx(expected[0], abs=1e-10)

    def test_family_data_mismatch(self, cox_dataset):
        """Test that the linear family refuses survival data."""
        with pytest.raises(ConfigError):
            partial_regression(cox_dataset, [], 0, RefitFamily.linear())


class TestAggregate:
    """Tests for the resample aggregation and standard errors."""

    def test_hand_instance(self):
        """Test B=2, n=4: covariances -1, -1, 1, 1 give se = 2."""
        inclusion = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=bool)
        result = aggregate(inclusion, np.array([[1.0], [3.0]]))
        assert result.estimates[0] == pytest.approx(2.0)
        assert result.ses[0] == pytest.approx(2.0)
        assert result.ci_lower[0] == pytest.approx(2.0 - 1.959964 * 2.0, abs=1e-5)
        assert result.p_values[0] == pytest.approx(0.317311, abs=1e-6)

    def test_literal_two_pass_covariance(self):
        """Test the vectorized SE against explicit loops over subjects and resamples."""
        rng = np.random.default_rng(5)
        B, n, p = 30, 12, 4
        inclusion = rng.uniform(size=(B, n)) < 0.5
        per_resample = rng.normal(size=(B, p))
        result = aggregate(inclusion, per_resample)
        for j in range(p):
            beta_bar = sum(per_resample[b, j] for b in range(B)) / B
            total = 0.0
            for i in range(n):
                inc_bar = sum(float(inclusion[b, i]) for b in range(B)) / B
                cov = sum(
                    (float(inclusion[b, i]) - inc_bar) * (per_resample[b, j] - beta_bar) for b in range(B)
                ) / (B - 1)
                total += cov ** 2
            assert result.ses[j] == pytest.approx(np.sqrt(total), abs=1e-12)

    def test_constant_estimates(self):
        """Test zero SEs and the degenerate p-value convention."""
        rng = np.random.default_rng(6)
        inclusion = rng.uniform(size=(5, 8)) < 0.5
        per_resample = np.tile([0.5, 0.0], (5, 1))
        result = aggregate(inclusion, per_resample)
        assert np.all(result.ses == 0.0)
        assert result.p_values.tolist() == [0.0, 1.0]
        assert result.degenerate == [0, 1]

    def test_p_value_matches_interval(self):
        """Test that p < 0.05 exactly when the 95% interval excludes zero."""
        rng = np.random.default_rng(7)
        inclusion = rng.uniform(size=(40, 20)) < 0.5
        per_resample = rng.normal(loc=np.linspace(-1, 1, 25), scale=2.0, size=(40, 25))
        per_resample += 3.0 * inclusion[:, :1]
        result = aggregate(inclusion, per_resample)
        excludes = (result.ci_lower > 0) | (result.ci_upper < 0)
        assert np.array_equal(result.p_values < 0.05, excludes)

    def test_corrections(self):
        """Test the half-sampling scale factor and the finite-B subtraction."""
        rng = np.random.default_rng(8)
        inclusion = rng.uniform(size=(25, 10)) < 0.5
        per_resample = rng.normal(size=(25, 3))
        plain = aggregate(inclusion, per_resample, n_refit=5)
        scaled = aggregate(inclusion, per_resample, n_refit=5, se_correction="subsample")
        corrected = aggregate(inclusion, per_resample, n_refit=5, se_correction="finite_b")
        assert np.allclose(scaled.ses ** 2, plain.ses ** 2 * 10 * 9 / 25)
        assert np.all(corrected.ses <= scaled.ses)
        assert np.all(corrected.ses >= 0)
        assert corrected.se_correction == "finite_b"

    def test_needs_two_resamples(self):
        """Test that one resample has no covariance."""
        with pytest.raises(ValueError):
            aggregate(np.ones((1, 4), dtype=bool), np.zeros((1, 2)))


class TestSparesFit:
    """Tests for split-select-refit inference."""

    def test_oracle_selector_linear(self):
        """Test estimates, inclusion bookkeeping and interval shape."""
        ds = simulate_linear(100, [1.0, -1.0, 0, 0, 0, 0, 0, 0], seed=9)
        result = spares_fit(ds, FixedSelector([0, 1]), B=20, seed=3)
        assert result.B == 20
        assert result.inclusion.shape == (20, 100)
        assert np.all(result.inclusion.sum(axis=1) == 50)
        assert result.per_resample.shape == (20, 8)
        assert abs(result.estimates[0] - 1.0) < 0.3
        assert abs(result.estimates[1] + 1.0) < 0.3
        assert np.all(result.ses > 0)
        assert np.allclose(result.ci_upper - result.estimates, result.estimates - result.ci_lower)

    def test_reproducible(self):
        """Test bitwise equality for a fixed seed and any worker count."""
        ds = simulate_linear(60, [1.0, 0.0, 0.5], seed=10)
        first = spares_fit(ds, FixedSelector([0]), B=8, seed=21, n_jobs=1)
        second = spares_fit(ds, FixedSelector([0]), B=8, seed=21, n_jobs=2)
        assert np.array_equal(first.inclusion, second.inclusion)
        assert np.array_equal(first.per_resample, second.per_resample)
        assert np.array_equal(first.ses, second.ses)
        other = spares_fit(ds, FixedSelector([0]), B=8, seed=22)
        assert not np.array_equal(first.inclusion, other.inclusion)

    def test_oversized_selection_skipped(self):
        """Test that one oversized selection is skipped and counted."""
        ds = simulate_linear(40, [1.0] + [0.0] * 29, seed=11)
        calls = []

        def selector(half):
            calls.append(1)
            return list(range(30)) if len(calls) == 1 else [0]

        result = spares_fit(ds, selector, B=6, seed=1, n_jobs=1)
        assert result.B == 5
        assert result.skipped == 1
        assert metrics_collector.get_metrics()["counters"]["resamples_skipped"] == 1

    def test_all_skipped(self):
        """Test that a selector that always oversizes leaves nothing to aggregate."""
        ds = simulate_linear(40, [0.0] * 30, seed=12)
        with pytest.raises(DegenerateResampleError):
            spares_fit(ds, lambda half: list(range(30)), B=4, seed=1)

    def test_cox_family_default(self, cox_dataset):
        """Test that survival data default to Cox refits."""
        result = spares_fit(cox_dataset, FixedSelector([0, 1]), B=10, seed=4)
        assert abs(result.estimates[0] - 1.0) < 0.4
        assert abs(result.estimates[1] + 1.0) < 0.4
        table = result.to_tidy()
        assert list(table.columns) == ["j", "feature", "estimate", "se", "ci_lower", "ci_upper", "p"]
        assert len(table) == 3
        assert "estimates" in result.to_dict()

    def test_b_must_exceed_one(self):
        """Test the resample count precondition."""
        ds = simulate_linear(20, [1.0], seed=13)
        with pytest.raises(ValueError):
            spares_fit(ds, FixedSelector([0]), B=1, seed=0)


class TestSelectors:
    """Tests for built-in selection procedures."""

    def test_screen_linear(self):
        """Test that marginal correlation keeps the strong columns."""
        ds = simulate_linear(200, [2.0, -2.0, 0, 0, 0, 0], seed=14, sigma=0.5)
        assert ScreenSelector(d=2)(ds) == [0, 1]

    def test_screen_cox(self, cox_dataset):
        """Test univariate Cox screening on survival data."""
        assert ScreenSelector(d=2)(cox_dataset) == [0, 1]

    def test_lasso_linear(self):
        """Test that the CV lasso includes the signals."""
        ds = simulate_linear(150, [2.0, -1.5, 0, 0, 0, 0, 0, 0], seed=15)
        selected = LassoSelector(k=5, seed=0)(ds)
        assert {0, 1} <= set(selected)


class TestFusedHdcqr:
    """Tests for quantile split-refit inference over a grid."""

    def test_single_level_matches_spares_fit(self):
        """Test that a one-level grid equals the quantile family at that level."""
        ds = simulate_location_shift(60, seed=16)
        fused = fused_hdcqr(ds, FixedSelector([0]), QuantileGrid((0.3,)), B=4, seed=1)
        single = spares_fit(ds, FixedSelector([0]), RefitFamily(kind="cqr", taus=[0.3]), B=4, seed=1)
        assert np.array_equal(fused.per_tau[0].estimates, single.estimates)
        assert np.array_equal(fused.per_tau[0].ses, single.ses)
        assert single.tau == pytest.approx(0.3)

    def test_location_shift_is_flat(self):
        """Test that a constant effect gives near-constant coefficients across levels."""
        ds = simulate_location_shift(200, seed=17)
        grid = QuantileGrid.regular(0.1, 0.5, 0.1)
        fused = fused_hdcqr(ds, FixedSelector([0]), grid, B=10, seed=2)
        slopes = fused.estimates[:, 0]
        assert np.all(np.abs(slopes - 0.8) < 0.3)
        assert np.ptp(slopes) < 0.4
        step = fused.coefficient_function(0)
        assert step(0.25) == slopes[1]
        table = fused.to_tidy()
        assert len(table) == 5 * 2
        assert table["tau"].iloc[0] == pytest.approx(0.1)

    def test_heteroscedastic_slope_grows(self):
        """Test that an effect widening the upper quantiles gives increasing coefficients."""
        rng = np.random.default_rng(18)
        n = 300
        x = rng.uniform(0.0, 2.0, size=n)
        log_t = 0.5 * x + (0.3 + 0.6 * x) * rng.normal(size=n)
        ds = SurvivalDataset(time=np.exp(log_t), event=np.ones(n, dtype=bool), X=x[:, None])
        grid = QuantileGrid.regular(0.1, 0.6, 0.1)
        fused = fused_hdcqr(ds, FixedSelector([0]), grid, B=8, seed=3)
        slope = np.polyfit(np.asarray(grid.taus), fused.estimates[:, 0], 1)[0]
        assert slope > 0


@pytest.mark.slow
class TestSparesCalibration:
    """Monte-Carlo calibration studies."""

    def test_null_type_one_error(self):
        """Test the rejection rate of a null coefficient over 200 replicates (n=200, p=500)."""
        beta = np.zeros(500)
        beta[:5] = 1.0
        rejections = 0
        for rep in range(200):
            ds = simulate_linear(200, beta, seed=1000 + rep)
            result = spares_fit(ds, FixedSelector(range(5)), B=50, seed=rep, se_correction="finite_b")
            rejections += int(result.p_values[10] < 0.05)
        assert 0.02 <= rejections / 200 <= 0.09

    def test_oracle_selector_recovery(self):
        """Test that signal estimates lie within a few standard errors of the truth (n=500, p=1000)."""
        beta = np.zeros(1000)
        beta[:5] = [1.0, -1.0, 0.5, -0.5, 0.8]
        ds = simulate_linear(500, beta, seed=19)
        result = spares_fit(ds, FixedSelector(range(5)), B=30, seed=5, se_correction="subsample")
        assert np.all(np.abs(result.estimates[:5] - beta[:5]) <= 3.0 * result.ses[:5])
