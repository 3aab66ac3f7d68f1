"""
Dense two-phase simplex for small linear programs.

Solves

    minimize c'x  subject to  A_ub x <= b_ub,  A_eq x = b_eq,  x_j >= 0 (j not free)

on a full numpy tableau. Entering columns follow the most-negative reduced
cost; after a run of degenerate pivots the rule switches to Bland's
smallest-index choice until the objective moves again. Leaving-row ties go
to the smallest basic index.

File: hdsurv/src/aft/simplex.py
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.config import settings
from src.errors import ConvergenceError, DimensionError, InfeasibleError, UnboundedError
from src.models.base import ResultBase
from src.utils.metrics import metrics_collector

logger = logging.getLogger(__name__)

# Consecutive degenerate pivots before Bland's rule takes over
BLAND_AFTER = 10


@dataclass
class LPResult(ResultBase):
    """Optimal point of a linear program."""
    x: np.ndarray
    objective: float
    pivots: int
    status: str = "optimal"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x.tolist(),
            "objective": self.objective,
            "pivots": self.pivots,
            "status": self.status,
        }


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int, tol: float) -> None:
    pivot_row = T[row] / T[row, col]
    T -= np.outer(T[:, col], pivot_row)
    T[row] = pivot_row
    rhs = T[:-1, -1]
    rhs[np.abs(rhs) < tol] = 0.0
    basis[row] = col


def _simplex(T: np.ndarray, basis: np.ndarray, n_cols: int, tol: float, max_pivots: int) -> int:
    """
    Pivot until no reduced cost in the first n_cols columns is negative.

    Returns:
        Number of pivots performed

    Raises:
        UnboundedError: An improving column has no positive entry
        ConvergenceError: max_pivots reached
    """
    m = T.shape[0] - 1
    pivots = 0
    degenerate_streak = 0
    while True:
        reduced = T[m, :n_cols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return pivots
        if degenerate_streak >= BLAND_AFTER:
            col = int(candidates[0])
        else:
            col = int(candidates[np.argmin(reduced[candidates])])

        column = T[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            raise UnboundedError(f"Linear program is unbounded along column {col}")
        ratios = T[rows, -1] / column[rows]
        best = float(ratios.min())
        tied = rows[ratios <= best + tol]
        row = int(tied[np.argmin(basis[tied])])

        degenerate_streak = degenerate_streak + 1 if best <= tol else 0
        _pivot(T, basis, row, col, tol)
        pivots += 1
        if pivots >= max_pivots:
            raise ConvergenceError(f"Simplex stopped after {pivots} pivots")


def _as_matrix(A: Optional[np.ndarray], n: int) -> np.ndarray:
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != n:
        raise DimensionError(f"Constraint matrix has {A.shape[1]} columns, objective has {n}")
    return A


def _as_vector(b: Optional[np.ndarray], m: int) -> np.ndarray:
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if b.size != m:
        raise DimensionError(f"Right-hand side has {b.size} entries, constraints have {m} rows")
    return b


def solve_lp(
    c: np.ndarray,
    A_ub: Optional[np.ndarray] = None,
    b_ub: Optional[np.ndarray] = None,
    A_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    free: Optional[Sequence[int]] = None,
    tol: Optional[float] = None,
    max_pivots: Optional[int] = None,
) -> LPResult:
    """
    Solve a linear program with the two-phase simplex method.

    Args:
        c: Objective coefficients (n,)
        A_ub: Inequality matrix (m_ub, n)
        b_ub: Inequality right-hand side
        A_eq: Equality matrix (m_eq, n)
        b_eq: Equality right-hand side
        free: Indices of sign-unrestricted variables
        tol: Pivot tolerance (default settings.LP_TOL)
        max_pivots: Pivot cap over both phases (default settings.LP_MAX_PIVOTS)

    Returns:
        LPResult at an optimal vertex

    Raises:
        InfeasibleError: No point satisfies the constraints
        UnboundedError: The objective decreases without bound
        ConvergenceError: Pivot cap reached
    """
    tol = settings.LP_TOL if tol is None else tol
    max_pivots = settings.LP_MAX_PIVOTS if max_pivots is None else max_pivots
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A_ub = _as_matrix(A_ub, n)
    A_eq = _as_matrix(A_eq, n)
    b_ub = _as_vector(b_ub, A_ub.shape[0])
    b_eq = _as_vector(b_eq, A_eq.shape[0])
    free_idx = np.asarray(sorted(set(free or [])), dtype=int)

    # Free variables split into x+ - x-
    A_ub = np.hstack([A_ub, -A_ub[:, free_idx]])
    A_eq = np.hstack([A_eq, -A_eq[:, free_idx]])
    cost = np.concatenate([c, -c[free_idx]])
    nx = cost.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    n_struct = nx + m_ub

    A = np.zeros((m, n_struct))
    A[:m_ub, :nx] = A_ub
    A[:m_ub, nx:] = np.eye(m_ub)
    A[m_ub:, :nx] = A_eq
    b = np.concatenate([b_ub, b_eq])
    flipped = b < 0
    A[flipped] *= -1.0
    b[flipped] *= -1.0

    basis = np.full(m, -1, dtype=int)
    for i in range(m_ub):
        if not flipped[i]:
            basis[i] = nx + i
    # Unit columns (one nonzero entry equal to 1) start the basis of their row
    nonzero = A[:, :nx] != 0
    unit = np.flatnonzero((nonzero.sum(axis=0) == 1) & np.any(A[:, :nx] == 1.0, axis=0))
    for j in unit:
        i = int(np.argmax(nonzero[:, j]))
        if basis[i] < 0:
            basis[i] = j
    needs_artificial = np.flatnonzero(basis < 0)
    n_art = needs_artificial.size

    T = np.zeros((m + 1, n_struct + n_art + 1))
    T[:m, :n_struct] = A
    T[:m, -1] = b
    for k, i in enumerate(needs_artificial):
        T[i, n_struct + k] = 1.0
        basis[i] = n_struct + k

    pivots = 0
    if n_art:
        T[m, n_struct:n_struct + n_art] = 1.0
        T[m] -= T[needs_artificial].sum(axis=0)
        pivots += _simplex(T, basis, n_struct + n_art, tol, max_pivots)
        infeasibility = -T[m, -1]
        if infeasibility > 1e-7 * max(1.0, float(np.max(np.abs(b), initial=0.0))):
            raise InfeasibleError(f"Linear program is infeasible (phase-one residual {infeasibility:.3g})")

        redundant = []
        for i in range(m):
            if basis[i] >= n_struct:
                candidates = np.flatnonzero(np.abs(T[i, :n_struct]) > tol)
                if candidates.size:
                    _pivot(T, basis, i, int(candidates[0]), tol)
                    pivots += 1
                else:
                    redundant.append(i)
        if redundant:
            logger.debug(f"Dropping {len(redundant)} redundant equality rows")
            T = np.delete(T, redundant, axis=0)
            basis = np.delete(basis, redundant)
        T = np.delete(T, np.arange(n_struct, n_struct + n_art), axis=1)

    full_cost = np.concatenate([cost, np.zeros(m_ub)])
    T[-1] = 0.0
    T[-1, :n_struct] = full_cost
    for i, j in enumerate(basis):
        T[-1] -= full_cost[j] * T[i]
    pivots += _simplex(T, basis, n_struct, tol, max(1, max_pivots - pivots))

    solution = np.zeros(n_struct)
    solution[basis] = T[:-1, -1]
    x = solution[:n].copy()
    x[free_idx] -= solution[n:nx]
    metrics_collector.increment("lp_pivots", pivots)
    return LPResult(x=x, objective=float(c @ x), pivots=pivots)
