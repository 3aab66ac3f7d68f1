# File: hdsurv/tests/test_aft.py

import numpy as np
import pytest
from scipy.optimize import linprog

from src.aft.dantzig import (
    adaptive_dantzig_weights,
    buckley_james_impute,
    center,
    cv_eta_q,
    dantzig_aft,
    dantzig_linear,
)
from src.aft.simplex import solve_lp
from src.data.records import SurvivalDataset
from src.errors import DegenerateDataError, InfeasibleError, UnboundedError


def simulate_aft(n, beta, seed, sigma=0.5, censor=True):
    """log T = X beta + sigma * N(0, 1) with uniform censoring on the time scale."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.normal(size=(n, beta.size))
    T = np.exp(X @ beta + sigma * rng.normal(size=n))
    C = rng.uniform(0.0, 4.0 * np.median(T), size=n) if censor else np.full(n, np.inf)
    return SurvivalDataset(time=np.minimum(T, C), event=T <= C, X=X)


def km_tail_mean_oracle(residual, event, i):
    """Mean excess over residual i from a plain product-limit loop."""
    order = sorted(range(len(residual)), key=lambda k: (residual[k], not event[k]))
    surv, masses = 1.0, {}
    for pos, k in enumerate(order):
        at_risk = len(order) - pos
        is_event = event[k] or pos == len(order) - 1
        if is_event:
            new = surv * (1.0 - 1.0 / at_risk)
            masses[k] = surv - new
            surv = new
    beyond = [k for k in masses if residual[k] > residual[i]]
    total = sum(masses[k] for k in beyond)
    return sum(masses[k] * (residual[k] - residual[i]) for k in beyond) / total


class TestSolveLp:
    """Tests for the dense simplex core."""

    def test_textbook_maximization(self):
        """Test max 3x + 5y on the classic three-constraint polytope."""
        result = solve_lp([-3.0, -5.0], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
        assert np.allclose(result.x, [2.0, 6.0])
        assert result.objective == pytest.approx(-36.0)

    def test_matches_linprog(self):
        """Test random bounded feasible programs against scipy's HiGHS."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = rng.normal(size=(6, 4))
            x0 = rng.uniform(0, 1, size=4)
            b = A @ x0 + rng.uniform(0.1, 1.0, size=6)
            A_box = np.vstack([A, np.eye(4)])
            b_box = np.concatenate([b, np.full(4, 10.0)])
            c = rng.normal(size=4)
            ours = solve_lp(c, A_ub=A_box, b_ub=b_box)
            reference = linprog(c, A_ub=A_box, b_ub=b_box, bounds=[(0, None)] * 4, method="highs")
            assert ours.objective == pytest.approx(reference.fun, abs=1e-7)
            assert np.all(A_box @ ours.x <= b_box + 1e-7)

    def test_equality_constraints(self):
        """Test a system with a unique equality-feasible point."""
        result = solve_lp([1.0, 1.0], A_eq=[[1, 1], [1, -1]], b_eq=[1.0, 0.2])
        assert np.allclose(result.x, [0.6, 0.4])

    def test_redundant_equality(self):
        """Test that a duplicated equality row is dropped."""
        result = solve_lp([1.0, 0.0], A_eq=[[1, 1], [2, 2]], b_eq=[1.0, 2.0])
        assert np.allclose(result.x, [0.0, 1.0])

    def test_infeasible(self):
        """Test x <= 1 together with x >= 2."""
        with pytest.raises(InfeasibleError):
            solve_lp([1.0], A_ub=[[1.0], [-1.0]], b_ub=[1.0, -2.0])

    def test_unbounded(self):
        """Test an objective that decreases along a ray."""
        with pytest.raises(UnboundedError):
            solve_lp([-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0])

    def test_free_variable(self):
        """Test min |x - 3| written with a free x."""
        result = solve_lp([0.0, 1.0], A_ub=[[1, -1], [-1, -1]], b_ub=[3.0, -3.0], free=[0])
        assert result.x[0] == pytest.approx(3.0)
        assert result.objective == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_cycling_example(self):
        """Test Beale's program, which cycles under the plain largest-coefficient rule."""
        c = [-0.75, 20.0, -0.5, 6.0]
        A = [[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]]
        result = solve_lp(c, A_ub=A, b_ub=[0.0, 0.0, 1.0])
        assert result.objective == pytest.approx(-1.25)


class TestCenter:
    """Tests for the centering projector."""

    def test_idempotent(self):
        """Test that centering twice equals centering once."""
        X = np.random.default_rng(0).normal(3.0, 2.0, size=(15, 4))
        once = center(X)
        assert np.max(np.abs(center(once) - once)) < 1e-12
        assert np.allclose(once.mean(axis=0), 0.0)


class TestBuckleyJamesImpute:
    """Tests for Buckley-James imputation."""

    def test_events_unchanged(self):
        """Test that observed events keep log Y exactly."""
        ds = simulate_aft(40, [0.5, -0.5], seed=1)
        imputed = buckley_james_impute(ds, np.array([0.3, 0.1]))
        assert np.array_equal(imputed[ds.event], np.log(ds.time[ds.event]))

    def test_two_point_example(self):
        """Test the hand computation with all mass at residual zero."""
        ds = SurvivalDataset(time=[1.0, np.exp(-1.0)], event=[True, False], X=np.zeros((2, 1)))
        imputed = buckley_james_impute(ds, np.zeros(1))
        assert imputed[1] == pytest.approx(-1.0 + 1.0)

    def test_matches_product_limit_oracle(self):
        """Test a 5-point instance at beta = 0 against a direct loop."""
        time = np.array([2.0, 0.5, 3.0, 1.5, 4.0])
        event = np.array([True, False, True, False, True])
        ds = SurvivalDataset(time=time, event=event, X=np.zeros((5, 1)))
        imputed = buckley_james_impute(ds, np.zeros(1))
        log_time = np.log(time)
        for i in np.flatnonzero(~event):
            expected = log_time[i] + km_tail_mean_oracle(log_time, event, i)
            assert imputed[i] == pytest.approx(expected, rel=1e-12)

    def test_censored_shift_right(self):
        """Test that censored imputations never fall below log Y."""
        ds = simulate_aft(80, [1.0, 0.0, -0.5], seed=2)
        imputed = buckley_james_impute(ds, np.array([0.8, 0.1, -0.2]))
        assert np.all(imputed[~ds.event] >= np.log(ds.time[~ds.event]))

    def test_all_censored(self):
        """Test that data without events cannot be imputed."""
        ds = SurvivalDataset(time=[1.0, 2.0], event=[False, False], X=np.zeros((2, 1)))
        with pytest.raises(DegenerateDataError):
            buckley_james_impute(ds, np.zeros(1))


class TestDantzigLinear:
    """Tests for the Dantzig selector program."""

    def test_large_eta_gives_zero(self):
        """Test that the origin is optimal once it is feasible."""
        rng = np.random.default_rng(5)
        X, Y = rng.normal(size=(30, 4)), rng.normal(size=30)
        eta = np.max(np.abs(X.T @ Y))
        assert np.allclose(dantzig_linear(X, Y, eta), 0.0)

    def test_single_column_closed_form(self):
        """Test sign(x'y) max(0, |x'y| - eta) / ||x||^2."""
        rng = np.random.default_rng(6)
        x, y = rng.normal(size=25), rng.normal(size=25) + 0.0
        y = y + 2.0 * x
        xy, xx = x @ y, x @ x
        for eta in (0.0, 0.3 * abs(xy), 0.9 * abs(xy)):
            expected = np.sign(xy) * max(0.0, abs(xy) - eta) / xx
            assert dantzig_linear(x[:, None], y, eta)[0] == pytest.approx(expected, abs=1e-9)

    def test_two_dimensional_grid_oracle(self):
        """Test l1-minimality against a brute-force grid of feasible points."""
        rng = np.random.default_rng(7)
        X = rng.normal(size=(20, 2)) / np.sqrt(20)
        Y = X @ np.array([0.8, -0.5]) + 0.1 * rng.normal(size=20)
        eta = 0.4 * np.max(np.abs(X.T @ Y))
        beta = dantzig_linear(X, Y, eta)
        G, r = X.T @ X, X.T @ Y
        assert np.max(np.abs(r - G @ beta)) <= eta + 1e-7

        axis = np.arange(-1.5, 1.5 + 1e-9, 2e-3)
        A, B = np.meshgrid(axis, axis, indexing="ij")
        grid = np.column_stack([A.ravel(), B.ravel()])
        feasible = np.max(np.abs(r[None, :] - grid @ G), axis=1) <= eta
        best = np.min(np.abs(grid[feasible]).sum(axis=1))
        assert np.abs(beta).sum() <= best + 1e-9
        assert best - np.abs(beta).sum() < 1e-2

    def test_equal_weights_are_invariant(self):
        """Test that a constant weight vector changes nothing."""
        rng = np.random.default_rng(8)
        X, Y = rng.normal(size=(30, 5)), rng.normal(size=30)
        eta = 0.5 * np.max(np.abs(X.T @ Y))
        assert np.array_equal(dantzig_linear(X, Y, eta), dantzig_linear(X, Y, eta, weights=np.full(5, 2.5)))

    def test_negative_eta(self):
        """Test that the constraint level must be non-negative."""
        with pytest.raises(ValueError):
            dantzig_linear(np.eye(2), np.ones(2), -1.0)


class TestDantzigAft:
    """Tests for the iterated AFT Dantzig fit."""

    def test_no_censoring_single_step(self):
        """Test that complete data need one program."""
        ds = simulate_aft(50, [1.0, 0.0], seed=9, censor=False)
        fit = dantzig_aft(ds, 1.0)
        assert fit.converged
        assert fit.iterations == 1
        assert np.array_equal(fit.imputed_outcomes, np.log(ds.time))

    def test_constraint_holds(self):
        """Test the returned constraint residual."""
        ds = simulate_aft(80, [1.0, -0.5, 0.0], seed=10)
        fit = dantzig_aft(ds, 5.0)
        assert fit.constraint_residual <= fit.eta_q + 1e-6

    def test_signal_recovered_at_fixed_eta(self):
        """Test that a strong coefficient stays active."""
        ds = simulate_aft(100, [1.0, 0.0, 0.0, 0.0, 0.0], seed=11)
        fit = dantzig_aft(ds, 10.0)
        assert fit.beta[0] > 0.5
        prediction = fit.predict_log_time(ds.X)
        assert prediction.shape == (100,)
        assert "beta" in fit.to_dict()

    def test_adaptive_weights(self):
        """Test that the signal column gets the smallest weight."""
        ds = simulate_aft(100, [1.0, 0.0, 0.0], seed=12)
        weights = adaptive_dantzig_weights(ds)
        assert np.all(weights > 0)
        assert int(np.argmin(weights)) == 0

    def test_cv_eta_q(self):
        """Test that CV returns a grid value deterministically."""
        ds = simulate_aft(60, [1.0, 0.0, 0.0], seed=13)
        first = cv_eta_q(ds, k=3, seed=4, n_etas=5)
        second = cv_eta_q(ds, k=3, seed=4, n_etas=5)
        assert first.selected_eta in first.etas
        assert np.array_equal(first.errors, second.errors)

    @pytest.mark.slow
    def test_selection_in_fifty_dimensions(self):
        """Test that the true signal is selected at the CV choice (n = 200, p = 50)."""
        beta = np.zeros(50)
        beta[0] = 1.0
        ds = simulate_aft(200, beta, seed=14)
        choice = cv_eta_q(ds, k=5, seed=0, n_etas=10)
        fit = dantzig_aft(ds, choice.selected_eta)
        assert fit.beta[0] != 0.0
