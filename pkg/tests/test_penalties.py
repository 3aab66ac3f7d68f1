# File: hdsurv/tests/test_penalties.py

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import trapezoid

from src.cox.penalties import (
    PenaltyKind,
    PenaltySpec,
    penalty_value,
    prox,
    rbf_column_kernel,
    scad_derivative,
    scad_value,
)
from src.errors import DimensionError, UnsupportedPenaltyError


def _grid_penalty(spec, points):
    """eta * Pen (SCAD value already scaled) over rows of points."""
    points = np.atleast_2d(points)
    a = np.abs(points)
    if spec.kind == PenaltyKind.LASSO:
        return spec.eta * a.sum(axis=1)
    if spec.kind == PenaltyKind.RIDGE:
        return spec.eta * np.sum(points**2, axis=1)
    if spec.kind == PenaltyKind.ELASTIC_NET:
        return spec.eta * (spec.alpha * a.sum(axis=1) + (1 - spec.alpha) * np.sum(points**2, axis=1))
    if spec.kind == PenaltyKind.ADAPTIVE_LASSO:
        return spec.eta * (a @ spec.weight_array)
    if spec.kind == PenaltyKind.SCAD:
        return np.sum(scad_value(spec.eta, spec.alpha, a), axis=1)
    if spec.kind == PenaltyKind.GROUP_LASSO:
        return spec.eta * sum(np.linalg.norm(points[:, g], axis=1) for g in spec.groups)
    sigma = spec.sigma_array
    quad = np.einsum("ij,jk,ik->i", points, sigma, points)
    return spec.eta * (spec.alpha * a.sum(axis=1) + (1 - spec.alpha) * quad)


def _objective(spec, points, z, step):
    points = np.atleast_2d(points)
    return 0.5 * np.sum((points - z) ** 2, axis=1) + step * _grid_penalty(spec, points)


class TestPenaltyValue:
    """Tests for penalty evaluation."""

    def test_lasso(self):
        """Test the l1 norm."""
        assert penalty_value(PenaltySpec(kind="lasso"), [1.0, -2.0]) == 3.0

    def test_elastic_net(self):
        """Test the mixed l1/l2 value."""
        spec = PenaltySpec(kind="elastic_net", alpha=0.5)
        assert penalty_value(spec, [1.0, -2.0]) == pytest.approx(4.0)

    def test_fused_pair(self):
        """Test the fused lasso (l1, total variation) pair."""
        assert penalty_value(PenaltySpec(kind="fused_lasso"), [1.0, 3.0, 2.0]) == (6.0, 3.0)

    def test_ridge_and_group(self):
        """Test the squared l2 norm and the l2 block norm."""
        assert penalty_value(PenaltySpec(kind="ridge"), [3.0, 4.0]) == pytest.approx(25.0)
        spec = PenaltySpec(kind="group_lasso", groups=[[0, 1], [2]])
        assert penalty_value(spec, [3.0, 4.0, -1.0]) == pytest.approx(6.0)

    def test_adaptive(self):
        """Test the weighted l1 norm."""
        spec = PenaltySpec(kind="adaptive_lasso", weights=[2.0, 0.5])
        assert penalty_value(spec, [1.0, -2.0]) == pytest.approx(3.0)

    def test_scad_is_integral_of_derivative(self):
        """Test the SCAD value against numerical integration of its derivative."""
        spec = PenaltySpec(kind="scad", eta=0.7)
        for b in (0.3, 1.5, 2.5, 4.0):
            grid = np.linspace(0.0, b, 20001)
            integral = trapezoid(scad_derivative(0.7, 3.7, grid), grid)
            assert penalty_value(spec, [b]) == pytest.approx(integral, abs=1e-6)

    def test_kernel_elastic_net(self):
        """Test alpha l1 + (1 - alpha) b' Sigma b."""
        sigma = [[1.0, 0.5], [0.5, 1.0]]
        spec = PenaltySpec(kind="kernel_elastic_net", alpha=0.25, sigma=sigma)
        beta = np.array([1.0, -1.0])
        assert penalty_value(spec, beta) == pytest.approx(0.25 * 2.0 + 0.75 * 1.0)

    def test_non_negative_and_zero_at_origin(self):
        """Test non-negativity with equality at zero."""
        rng = np.random.default_rng(0)
        specs = [
            PenaltySpec(kind="lasso"),
            PenaltySpec(kind="ridge"),
            PenaltySpec(kind="elastic_net"),
            PenaltySpec(kind="scad"),
            PenaltySpec(kind="group_lasso", groups=[[0], [1, 2]]),
            PenaltySpec(kind="kernel_elastic_net", sigma=np.eye(3)),
        ]
        for spec in specs:
            assert penalty_value(spec, np.zeros(3)) == 0.0
            assert penalty_value(spec, rng.normal(size=3)) > 0.0

    def test_dimension_mismatch(self):
        """Test that weights of the wrong length are rejected."""
        with pytest.raises(DimensionError):
            penalty_value(PenaltySpec(kind="adaptive_lasso", weights=[1.0]), [1.0, 2.0])


class TestPenaltySpec:
    """Tests for specification validation."""

    def test_scad_default_alpha(self):
        """Test the conventional SCAD shape."""
        assert PenaltySpec(kind="scad").alpha == 3.7

    def test_scad_alpha_must_exceed_two(self):
        """Test the SCAD shape constraint."""
        with pytest.raises(ValidationError):
            PenaltySpec(kind="scad", alpha=2.0)

    def test_eta_positive(self):
        """Test the tuning parameter constraint."""
        with pytest.raises(ValidationError):
            PenaltySpec(kind="lasso", eta=0.0)

    def test_groups_partition(self):
        """Test that groups must partition the columns."""
        with pytest.raises(ValidationError):
            PenaltySpec(kind="group_lasso", groups=[[0, 1], [1, 2]])

    def test_sigma_psd(self):
        """Test that an indefinite sigma is rejected."""
        with pytest.raises(ValidationError):
            PenaltySpec(kind="kernel_elastic_net", sigma=[[1.0, 2.0], [2.0, 1.0]])

    def test_json_parse(self):
        """Test parsing from a JSON config."""
        spec = PenaltySpec.model_validate_json('{"kind": "elastic_net", "eta": 0.2, "alpha": 0.3}')
        assert spec.kind == PenaltyKind.ELASTIC_NET
        assert spec.eta == 0.2


class TestScadDerivative:
    """Tests for the SCAD derivative."""

    def test_first_branch(self):
        """Test |b| <= eta."""
        assert scad_derivative(1.0, 3.7, 0.5) == 1.0

    def test_second_branch(self):
        """Test eta < |b| < alpha eta."""
        assert scad_derivative(1.0, 3.7, 2.0) == pytest.approx(1.7 / 2.7)
        assert scad_derivative(1.0, 3.7, 2.0) == pytest.approx(0.6296, abs=1e-4)

    def test_flat_region(self):
        """Test |b| >= alpha eta."""
        assert scad_derivative(1.0, 3.7, 3.7) == 0.0
        assert scad_derivative(1.0, 3.7, 10.0) == 0.0

    def test_continuity(self):
        """Test agreement at the branch boundaries."""
        eps = 1e-13
        assert abs(scad_derivative(1.0, 3.7, 1.0) - scad_derivative(1.0, 3.7, 1.0 + eps)) < 1e-12
        assert abs(scad_derivative(1.0, 3.7, 3.7 - eps) - scad_derivative(1.0, 3.7, 3.7)) < 1e-12


class TestProx:
    """Tests for proximal operators."""

    def test_soft_threshold_examples(self):
        """Test lasso prox at z = 1.5 and z = 0.5 with threshold 1."""
        spec = PenaltySpec(kind="lasso", eta=1.0)
        assert prox(spec, [1.5], 1.0)[0] == pytest.approx(0.5)
        assert prox(spec, [0.5], 1.0)[0] == 0.0

    def test_group_block_threshold(self):
        """Test block soft-thresholding of (3, 4)."""
        spec = PenaltySpec(kind="group_lasso", eta=1.0, groups=[[0, 1]])
        assert np.allclose(prox(spec, [3.0, 4.0], 1.0), [2.4, 3.2])

    def test_adaptive_unit_weights_equal_lasso(self):
        """Test adaptive lasso with unit weights against lasso exactly."""
        z = np.array([1.2, -0.3, 2.5, -1.9])
        lasso = prox(PenaltySpec(kind="lasso", eta=0.7), z, 0.9)
        adaptive = prox(PenaltySpec(kind="adaptive_lasso", eta=0.7, weights=np.ones(4)), z, 0.9)
        assert np.array_equal(lasso, adaptive)

    def test_fused_unsupported(self):
        """Test that fused lasso has no proximal operator."""
        with pytest.raises(UnsupportedPenaltyError):
            prox(PenaltySpec(kind="fused_lasso"), [1.0, 2.0], 1.0)

    @pytest.mark.parametrize("spec", [
        PenaltySpec(kind="lasso", eta=0.8),
        PenaltySpec(kind="ridge", eta=0.6),
        PenaltySpec(kind="elastic_net", eta=0.9, alpha=0.3),
        PenaltySpec(kind="adaptive_lasso", eta=0.5, weights=[1.7]),
        PenaltySpec(kind="scad", eta=0.6),
        PenaltySpec(kind="scad", eta=0.5, alpha=2.5),
    ])
    def test_one_dimensional_grid_optimality(self, spec):
        """Test prox outputs against a dense 1-D grid search."""
        grid = np.arange(-3.0, 3.0 + 1e-9, 1e-3)[:, None]
        for step in (0.4, 1.0, 2.0):
            for z in (-2.7, -1.1, -0.2, 0.0, 0.45, 0.9, 1.6, 2.9):
                y = prox(spec, [z], step)
                grid_values = _objective(spec, grid, z, step)
                assert _objective(spec, y, z, step)[0] <= grid_values.min() + 1e-9
                if spec.kind != PenaltyKind.SCAD:
                    assert abs(y[0] - grid[np.argmin(grid_values), 0]) <= 2e-3

    @pytest.mark.parametrize("spec", [
        PenaltySpec(kind="group_lasso", eta=0.7, groups=[[0, 1]]),
        PenaltySpec(kind="kernel_elastic_net", eta=0.8, alpha=0.5, sigma=[[1.0, 0.6], [0.6, 1.0]]),
        PenaltySpec(kind="kernel_elastic_net", eta=0.8, alpha=0.0, sigma=[[1.0, 0.6], [0.6, 1.0]]),
    ])
    def test_two_dimensional_grid_optimality(self, spec):
        """Test prox outputs against a 2-D grid search."""
        axis = np.arange(-3.0, 3.0 + 1e-9, 1e-2)
        A, B = np.meshgrid(axis, axis, indexing="ij")
        points = np.column_stack([A.ravel(), B.ravel()])
        for z in (np.array([1.3, -0.4]), np.array([-2.2, 2.0]), np.array([0.3, 0.2])):
            y = prox(spec, z, 1.0)
            values = _objective(spec, points, z, 1.0)
            assert _objective(spec, y, z, 1.0)[0] <= values.min() + 1e-9
            assert np.max(np.abs(y - points[np.argmin(values)])) <= 3e-2

    def test_grid_penalty_agrees_with_penalty_value(self):
        """Test the vectorized helper used above against penalty_value."""
        spec = PenaltySpec(kind="kernel_elastic_net", eta=0.8, sigma=[[1.0, 0.6], [0.6, 1.0]])
        q = np.array([0.7, -1.3])
        assert _grid_penalty(spec, q)[0] == pytest.approx(spec.eta * penalty_value(spec, q))


class TestRbfColumnKernel:
    """Tests for the kernel elastic-net similarity matrix."""

    def test_psd_unit_diagonal(self):
        """Test symmetry, unit diagonal and positive semi-definiteness."""
        X = np.random.default_rng(4).normal(size=(30, 6))
        K = rbf_column_kernel(X)
        assert K.shape == (6, 6)
        assert np.allclose(np.diag(K), 1.0)
        assert np.allclose(K, K.T)
        assert np.min(np.linalg.eigvalsh(K)) > -1e-10
