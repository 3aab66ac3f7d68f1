"""
Base result types shared by every estimator.

File: hdsurv/src/models/base.py
"""
import time
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict

from src.utils.metrics import metrics_collector
from src.utils.persistence import dumps


class FitStatus(Enum):
    """Possible outcomes of an iterative fit."""
    CONVERGED = "converged"
    NOT_CONVERGED = "not_converged"
    FAILED = "failed"

    @classmethod
    def from_flag(cls, converged: bool) -> "FitStatus":
        return cls.CONVERGED if converged else cls.NOT_CONVERGED


class ResultBase(ABC):
    """Base class for fitted models and inference results."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """
        Convert the result to a JSON-serializable dictionary.

        Returns:
            Dictionary of plain Python values
        """
        pass

    def to_json(self) -> str:
        """Serialize deterministically (sorted keys)."""
        return dumps(self.to_dict())


def record_fit(estimator: str, converged: bool, start_time: float) -> int:
    """
    Record a finished fit in the global metrics collector.

    Args:
        estimator: Estimator name
        converged: Convergence flag
        start_time: When the fit started (perf_counter timestamp)

    Returns:
        Duration in milliseconds
    """
    duration_ms = int((time.perf_counter() - start_time) * 1000)
    metrics_collector.record_fit(estimator, FitStatus.from_flag(converged).value)
    return duration_ms
