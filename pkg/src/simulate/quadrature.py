"""
Gauss-Laguerre integration over the gamma frailty.

File: hdsurv/src/simulate/quadrature.py
"""
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from src.config import settings
from src.data.records import IllnessDeathRecord
from src.errors import ConfigError
from src.scr.illness_death import IllnessDeathData, ScrParameters, conditional_log_likelihood


def gamma_laguerre_rule(shape: float, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights for the expectation over x ~ Gamma(shape, 1).

    Built with the Golub-Welsch eigenvalue method on the generalized Laguerre
    recurrence, so weights are normalized and large shapes do not overflow.

    Args:
        shape: Gamma shape (> 0)
        n_nodes: Number of nodes

    Returns:
        (nodes, weights) with sum(weights) = 1
    """
    if not shape > 0 or n_nodes < 1:
        raise ConfigError(f"Need shape > 0 and at least one node, got {shape}, {n_nodes}", field="shape")
    alpha = shape - 1.0
    j = np.arange(n_nodes, dtype=float)
    diagonal = 2.0 * j + alpha + 1.0
    off_diagonal = np.sqrt(j[1:] * (j[1:] + alpha))
    nodes, vectors = eigh_tridiagonal(diagonal, off_diagonal)
    weights = vectors[0] ** 2
    return nodes, weights / weights.sum()


def oracle_quadrature_likelihood(
    params: ScrParameters,
    record: Union[IllnessDeathRecord, IllnessDeathData],
    n_nodes: Optional[int] = None,
) -> float:
    """
    Log of the frailty-integrated likelihood of one record by numerical quadrature.

    gamma = theta * x with x ~ Gamma(1/theta, 1) gives the Gamma(1/theta, 1/theta) law.

    Args:
        params: Model parameters
        record: A single record (or one-row data)
        n_nodes: Node count (settings.QUADRATURE_NODES by default)

    Returns:
        Log-likelihood of the record
    """
    data = [record] if isinstance(record, IllnessDeathRecord) else record
    nodes, weights = gamma_laguerre_rule(1.0 / params.theta, n_nodes or settings.QUADRATURE_NODES)
    gammas = params.theta * nodes
    log_terms = conditional_log_likelihood(params, data, gammas[:, None])
    if log_terms.shape[1] != 1:
        raise ConfigError(f"Expected one record, got {log_terms.shape[1]}", field="record")
    return float(logsumexp(log_terms[:, 0], b=weights))
