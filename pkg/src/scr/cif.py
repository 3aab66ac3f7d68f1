"""
Covariate-adjusted cumulative incidence under proportional subdistribution hazards.

File: hdsurv/src/scr/cif.py
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np

from src.data.records import SurvivalDataset
from src.errors import ConfigError, DimensionError
from src.models.base import ResultBase
from src.nonparam.estimators import aalen_johansen
from src.nonparam.step_function import StepFunction


@dataclass
class CifModel(ResultBase):
    """
    Baseline cumulative incidence per cause with coefficient vectors.

    F_c(t | x) = 1 - (1 - F_0c(t))^exp(x'beta_c)
    """
    baseline_cif: Dict[int, StepFunction]
    beta: Dict[int, np.ndarray]

    def __post_init__(self) -> None:
        if set(self.baseline_cif) != set(self.beta):
            raise ConfigError("Every cause needs both a baseline and coefficients", field="beta")
        self.beta = {int(c): np.asarray(b, dtype=float).reshape(-1) for c, b in self.beta.items()}
        if len({b.size for b in self.beta.values()}) > 1:
            raise DimensionError("Coefficient vectors must share one length")
        for cause, curve in self.baseline_cif.items():
            seq = np.concatenate(([curve.left_value], curve.values))
            if np.any(np.diff(seq) < -1e-12) or np.any(seq < 0) or np.any(seq > 1):
                raise ConfigError(
                    f"Baseline incidence of cause {cause} must be non-decreasing inside [0, 1]",
                    field="baseline_cif",
                )

    @property
    def causes(self) -> List[int]:
        return sorted(self.baseline_cif)

    @classmethod
    def nonparametric(cls, ds: SurvivalDataset, beta: Optional[Dict[int, np.ndarray]] = None) -> "CifModel":
        """Aalen-Johansen baselines for every observed cause; beta defaults to zero."""
        causes = sorted(set(ds.causes[ds.causes > 0].tolist())) if ds.causes is not None else [1]
        baselines = {c: aalen_johansen(ds, cause=c) for c in causes}
        beta = beta or {c: np.zeros(ds.p) for c in causes}
        return cls(baselines, beta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "causes": {
                str(c): {
                    "baseline": self.baseline_cif[c].to_dict(),
                    "beta": self.beta[c].tolist(),
                }
                for c in self.causes
            }
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CifModel":
        entries = data["causes"]
        return cls(
            {int(c): StepFunction.from_dict(v["baseline"]) for c, v in entries.items()},
            {int(c): np.asarray(v["beta"], dtype=float) for c, v in entries.items()},
        )


def cif_predict(
    model: CifModel, x: np.ndarray, t: Union[float, np.ndarray], cause: int = 1
) -> Union[float, np.ndarray]:
    """
    Cumulative incidence of one cause for covariates x at time(s) t.

    Args:
        model: CifModel
        x: Covariate vector
        t: Time or array of times
        cause: Cause label

    Returns:
        Value(s) in [0, 1]
    """
    if cause not in model.baseline_cif:
        raise ConfigError(f"Unknown cause {cause}; model has {model.causes}", field="cause")
    x = np.asarray(x, dtype=float).reshape(-1)
    beta = model.beta[cause]
    if x.size != beta.size:
        raise DimensionError(f"Expected {beta.size} covariates, got {x.size}")
    base = np.asarray(model.baseline_cif[cause](t), dtype=float)
    out = 1.0 - np.power(1.0 - base, np.exp(x @ beta))
    return float(out) if out.ndim == 0 else out
