"""
Right-continuous piecewise-constant functions of time.

File: hdsurv/src/nonparam/step_function.py
"""
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Union

import numpy as np

from src.errors import DimensionError

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    f(t) = left_value for t < knots[0], values[k] for knots[k] <= t < knots[k+1].

    Used for survival curves, cumulative hazards and cumulative incidences.
    """
    knots: np.ndarray
    values: np.ndarray
    left_value: float = 0.0

    def __post_init__(self) -> None:
        knots = np.array(self.knots, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if knots.shape != values.shape:
            raise DimensionError("knots and values must have the same length")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise DimensionError("knots must be strictly increasing")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_value", float(self.left_value))

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t_arr, side="right") - 1
        padded = np.concatenate(([self.left_value], self.values))
        out = padded[idx + 1]
        return float(out) if out.ndim == 0 else out

    def __len__(self) -> int:
        return int(self.knots.size)

    def is_survival(self, tol: float = 1e-12) -> bool:
        """Check the survival-curve shape: starts at 1, non-increasing, inside [0, 1]."""
        seq = np.concatenate(([self.left_value], self.values))
        return (
            abs(self.left_value - 1.0) <= tol
            and bool(np.all(np.diff(seq) <= tol))
            and bool(np.all((seq >= -tol) & (seq <= 1 + tol)))
        )

    def integral(self, a: float, b: float) -> float:
        """
        Integrate f over [a, b].

        Args:
            a: Lower limit
            b: Upper limit (must be finite)

        Returns:
            Exact integral of the step function
        """
        if b <= a:
            return 0.0
        inner = self.knots[(self.knots > a) & (self.knots < b)]
        edges = np.concatenate(([a], inner, [b]))
        heights = self(edges[:-1])
        return float(np.sum(np.asarray(heights) * np.diff(edges)))

    def on_grid(self, grid: Sequence[float]) -> "StepFunction":
        """Restrict to knots at the given grid points."""
        grid = np.unique(np.asarray(grid, dtype=float))
        return StepFunction(grid, np.asarray(self(grid)), self.left_value)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "left_value": self.left_value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepFunction":
        return cls(
            knots=np.asarray(data["knots"], dtype=float),
            values=np.asarray(data["values"], dtype=float),
            left_value=float(data["left_value"]),
        )


def union_knots(functions: Sequence[StepFunction]) -> np.ndarray:
    """Sorted union of the knots of several step functions."""
    if not functions:
        return np.empty(0)
    return np.unique(np.concatenate([f.knots for f in functions]))


def average(functions: Sequence[StepFunction]) -> StepFunction:
    """
    Pointwise mean of step functions on the union of their knots.

    Args:
        functions: Functions to average (at least one)

    Returns:
        Mean function
    """
    if not functions:
        raise DimensionError("Cannot average an empty list of step functions")
    grid = union_knots(functions)
    values = np.mean([np.asarray(f(grid)).reshape(-1) for f in functions], axis=0) if grid.size else np.empty(0)
    left = float(np.mean([f.left_value for f in functions]))
    return StepFunction(grid, values, left)
