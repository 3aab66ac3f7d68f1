"""
Penalty family for regularized Cox regression.

Values for every kind, proximal maps for the kinds the solver optimizes, the
SCAD derivative used for local linear approximation, and the RBF column
kernel for the kernel elastic net.

All penalties except SCAD are returned without the tuning parameter eta
(the objective multiplies them by eta). SCAD is defined through its
derivative, which already carries eta, so its value does too.

File: hdsurv/src/cox/penalties.py
"""
import logging
from enum import Enum
from typing import Any, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.spatial.distance import pdist, squareform

from src.errors import DimensionError, UnsupportedPenaltyError

logger = logging.getLogger(__name__)

SCAD_DEFAULT_ALPHA = 3.7
ELASTIC_DEFAULT_ALPHA = 0.5


class PenaltyKind(str, Enum):
    """Supported penalty families."""
    RIDGE = "ridge"
    LASSO = "lasso"
    ELASTIC_NET = "elastic_net"
    ADAPTIVE_LASSO = "adaptive_lasso"
    SCAD = "scad"
    GROUP_LASSO = "group_lasso"
    FUSED_LASSO = "fused_lasso"
    KERNEL_ELASTIC_NET = "kernel_elastic_net"


PROX_KINDS = {
    PenaltyKind.RIDGE,
    PenaltyKind.LASSO,
    PenaltyKind.ELASTIC_NET,
    PenaltyKind.ADAPTIVE_LASSO,
    PenaltyKind.SCAD,
    PenaltyKind.GROUP_LASSO,
    PenaltyKind.KERNEL_ELASTIC_NET,
}


class PenaltySpec(BaseModel):
    """
    Penalty kind and parameters.

    Attributes:
        kind: Penalty family
        eta: Tuning parameter (> 0)
        alpha: Elastic-net mix in (0, 1), or SCAD shape (> 2)
        weights: Adaptive-lasso weights (non-negative, length p)
        groups: Partition of the 0-based column indices
        sigma: Kernel elastic-net matrix (symmetric PSD, p x p)
    """
    kind: PenaltyKind
    eta: float = Field(default=1.0, gt=0)
    alpha: Optional[float] = None
    weights: Optional[List[float]] = None
    groups: Optional[List[List[int]]] = None
    sigma: Optional[List[List[float]]] = None

    @field_validator("weights", "sigma", "groups", mode="before")
    @classmethod
    def arrays_to_lists(cls, value: Any) -> Any:
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, (list, tuple)):
            return [v.tolist() if isinstance(v, np.ndarray) else v for v in value]
        return value

    @model_validator(mode="after")
    def check_parameters(self) -> "PenaltySpec":
        if self.alpha is None:
            if self.kind == PenaltyKind.SCAD:
                self.alpha = SCAD_DEFAULT_ALPHA
            elif self.kind in (PenaltyKind.ELASTIC_NET, PenaltyKind.KERNEL_ELASTIC_NET):
                self.alpha = ELASTIC_DEFAULT_ALPHA
        if self.kind == PenaltyKind.SCAD and not self.alpha > 2:
            raise ValueError(f"SCAD requires alpha > 2, got {self.alpha}")
        if self.kind == PenaltyKind.ELASTIC_NET and not 0 < self.alpha < 1:
            raise ValueError(f"elastic_net requires 0 < alpha < 1, got {self.alpha}")
        if self.kind == PenaltyKind.KERNEL_ELASTIC_NET:
            if not 0 <= self.alpha <= 1:
                raise ValueError(f"kernel_elastic_net requires 0 <= alpha <= 1, got {self.alpha}")
            if self.sigma is None:
                raise ValueError("kernel_elastic_net requires sigma")
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
                raise ValueError("sigma must be a square matrix")
            if not np.allclose(sigma, sigma.T, atol=1e-10):
                raise ValueError("sigma must be symmetric")
            if np.min(np.linalg.eigvalsh(sigma)) < -1e-8:
                raise ValueError("sigma must be positive semi-definite")
        if self.kind == PenaltyKind.ADAPTIVE_LASSO:
            if self.weights is None:
                raise ValueError("adaptive_lasso requires weights")
            if np.any(np.asarray(self.weights) < 0):
                raise ValueError("adaptive_lasso weights must be non-negative")
        if self.kind == PenaltyKind.GROUP_LASSO:
            if not self.groups:
                raise ValueError("group_lasso requires groups")
            members = sorted(j for group in self.groups for j in group)
            if members != list(range(len(members))):
                raise ValueError("groups must partition {0..p-1}")
        return self

    def with_eta(self, eta: float) -> "PenaltySpec":
        """Copy with a different tuning parameter."""
        return self.model_copy(update={"eta": float(eta)})

    @property
    def weight_array(self) -> Optional[np.ndarray]:
        return None if self.weights is None else np.asarray(self.weights, dtype=float)

    @property
    def sigma_array(self) -> Optional[np.ndarray]:
        return None if self.sigma is None else np.asarray(self.sigma, dtype=float)

    @property
    def sparse(self) -> bool:
        """Whether the penalty produces exact zeros."""
        return self.kind != PenaltyKind.RIDGE and not (
            self.kind == PenaltyKind.KERNEL_ELASTIC_NET and self.alpha == 0
        )

    def check_dimension(self, p: int) -> None:
        sizes = {
            "weights": None if self.weights is None else len(self.weights),
            "sigma": None if self.sigma is None else len(self.sigma),
            "groups": None if self.groups is None else sum(len(g) for g in self.groups),
        }
        for name, size in sizes.items():
            if size is not None and size != p:
                raise DimensionError(f"Penalty {name} has dimension {size}, coefficients have {p}")


def soft_threshold(z: np.ndarray, threshold: Union[float, np.ndarray]) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


def scad_derivative(eta: float, alpha: float, abs_beta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    SCAD derivative: eta for |b| <= eta, (alpha eta - |b|)_+ / (alpha - 1) beyond.

    Args:
        eta: Tuning parameter
        alpha: Shape (> 2)
        abs_beta: Coefficient magnitude(s)

    Returns:
        Derivative value(s), same shape as abs_beta
    """
    b = np.asarray(abs_beta, dtype=float)
    out = np.where(b <= eta, eta, np.maximum(alpha * eta - b, 0.0) / (alpha - 1.0))
    return float(out) if out.ndim == 0 else out


def scad_value(eta: float, alpha: float, abs_beta: np.ndarray) -> np.ndarray:
    """Elementwise SCAD penalty, the integral of scad_derivative from 0."""
    b = np.asarray(abs_beta, dtype=float)
    inner = eta * b
    middle = (2.0 * alpha * eta * b - b**2 - eta**2) / (2.0 * (alpha - 1.0))
    outer = np.full_like(b, eta**2 * (alpha + 1.0) / 2.0)
    return np.where(b <= eta, inner, np.where(b <= alpha * eta, middle, outer))


def penalty_value(spec: PenaltySpec, beta: np.ndarray) -> Union[float, Tuple[float, float]]:
    """
    Evaluate Pen(beta).

    Args:
        spec: Penalty specification
        beta: Coefficients

    Returns:
        Non-negative value; fused_lasso returns (sum |b_j|, sum |b_j - b_{j-1}|)
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    spec.check_dimension(beta.size)
    kind = spec.kind
    if kind == PenaltyKind.RIDGE:
        return float(beta @ beta)
    if kind == PenaltyKind.LASSO:
        return float(np.sum(np.abs(beta)))
    if kind == PenaltyKind.ELASTIC_NET:
        return float(spec.alpha * np.sum(np.abs(beta)) + (1.0 - spec.alpha) * (beta @ beta))
    if kind == PenaltyKind.ADAPTIVE_LASSO:
        return float(spec.weight_array @ np.abs(beta))
    if kind == PenaltyKind.SCAD:
        return float(np.sum(scad_value(spec.eta, spec.alpha, np.abs(beta))))
    if kind == PenaltyKind.GROUP_LASSO:
        return float(sum(np.linalg.norm(beta[group]) for group in spec.groups))
    if kind == PenaltyKind.FUSED_LASSO:
        return float(np.sum(np.abs(beta))), float(np.sum(np.abs(np.diff(beta))))
    if kind == PenaltyKind.KERNEL_ELASTIC_NET:
        quad = float(beta @ spec.sigma_array @ beta)
        return float(spec.alpha * np.sum(np.abs(beta)) + (1.0 - spec.alpha) * quad)
    raise UnsupportedPenaltyError(f"Unknown penalty kind {kind}")


def scaled_penalty(spec: PenaltySpec, beta: np.ndarray) -> float:
    """eta * Pen(beta) for every kind (SCAD already carries eta)."""
    if spec.kind == PenaltyKind.FUSED_LASSO:
        raise UnsupportedPenaltyError("fused_lasso is value-only and cannot enter the objective")
    value = penalty_value(spec, beta)
    return float(value) if spec.kind == PenaltyKind.SCAD else spec.eta * float(value)


def _scad_prox(spec: PenaltySpec, z: np.ndarray, step: float) -> np.ndarray:
    lam, a = spec.eta, spec.alpha
    mag, sign = np.abs(z), np.sign(z)
    region1 = np.minimum(np.maximum(mag - step * lam, 0.0), lam)
    denom = a - 1.0 - step
    if denom > 0:
        region2 = np.clip(((a - 1.0) * mag - step * a * lam) / denom, lam, a * lam)
    else:
        region2 = np.full_like(mag, lam)
    candidates = np.vstack([
        region1,
        region2,
        np.full_like(mag, a * lam),
        np.maximum(mag, a * lam),
        np.zeros_like(mag),
    ])
    objective = 0.5 * (candidates - mag) ** 2 + step * scad_value(lam, a, candidates)
    best = candidates[np.argmin(objective, axis=0), np.arange(mag.size)]
    return sign * best


def _kernel_prox(spec: PenaltySpec, z: np.ndarray, step: float, tol: float = 1e-12, max_sweeps: int = 1000) -> np.ndarray:
    sigma = spec.sigma_array
    quad = 2.0 * step * spec.eta * (1.0 - spec.alpha)
    l1 = step * spec.eta * spec.alpha
    if l1 == 0:
        return np.linalg.solve(np.eye(z.size) + quad * sigma, z)
    y = soft_threshold(z, l1)
    diag = 1.0 + quad * np.diag(sigma)
    for _ in range(max_sweeps):
        largest = 0.0
        for j in range(z.size):
            partial = z[j] - quad * (sigma[j] @ y - sigma[j, j] * y[j])
            new = soft_threshold(partial, l1) / diag[j]
            largest = max(largest, abs(new - y[j]))
            y[j] = new
        if largest <= tol:
            break
    return y


def prox(spec: PenaltySpec, z: np.ndarray, step: float) -> np.ndarray:
    """
    Proximal map: argmin_y 0.5 ||y - z||^2 + step * eta * Pen(y)
    (step * Pen(y) for SCAD, whose value already carries eta).

    Args:
        spec: Penalty specification
        z: Point to map
        step: Step size (> 0)

    Returns:
        Minimizer y

    Raises:
        UnsupportedPenaltyError: fused_lasso
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    spec.check_dimension(z.size)
    kind = spec.kind
    t = step * spec.eta
    if kind == PenaltyKind.LASSO:
        return soft_threshold(z, t)
    if kind == PenaltyKind.ADAPTIVE_LASSO:
        return soft_threshold(z, t * spec.weight_array)
    if kind == PenaltyKind.RIDGE:
        return z / (1.0 + 2.0 * t)
    if kind == PenaltyKind.ELASTIC_NET:
        return soft_threshold(z, t * spec.alpha) / (1.0 + 2.0 * t * (1.0 - spec.alpha))
    if kind == PenaltyKind.GROUP_LASSO:
        out = np.zeros_like(z)
        for group in spec.groups:
            norm = np.linalg.norm(z[group])
            if norm > t:
                out[group] = (1.0 - t / norm) * z[group]
        return out
    if kind == PenaltyKind.KERNEL_ELASTIC_NET:
        return _kernel_prox(spec, z, step)
    if kind == PenaltyKind.SCAD:
        return _scad_prox(spec, z, step)
    raise UnsupportedPenaltyError(
        f"{kind.value} has no proximal operator; it is available for evaluation only"
    )


def lla_weights(spec: PenaltySpec, beta: np.ndarray) -> np.ndarray:
    """
    Local linear approximation of SCAD at beta as adaptive-lasso weights.

    Returns:
        w_j = scad'(|beta_j|) / eta, so eta * sum w_j |b_j| is the tangent majorizer
    """
    return np.asarray(scad_derivative(spec.eta, spec.alpha, np.abs(beta)), dtype=float).reshape(-1) / spec.eta


def rbf_column_kernel(X: np.ndarray) -> np.ndarray:
    """
    RBF similarity between covariate columns, bandwidth by the median heuristic.

    Args:
        X: Standardized covariates (n, p)

    Returns:
        Symmetric PSD matrix (p, p) with unit diagonal
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] < 2:
        return np.ones((X.shape[1], X.shape[1]))
    distances = pdist(X.T)
    bandwidth = float(np.median(distances))
    if bandwidth <= 0:
        logger.warning("Median column distance is zero; using unit bandwidth")
        bandwidth = 1.0
    D = squareform(distances)
    return np.exp(-(D**2) / (2.0 * bandwidth**2))
