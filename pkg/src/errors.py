"""
Exception hierarchy for the survival analysis toolkit.

Two families matter to callers: data/config validation problems (the input is
wrong) and numerical failures (the input is fine but the computation is not).
The CLI maps them to exit codes 2 and 3 respectively.

File: hdsurv/src/errors.py
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple


class SurvivalError(Exception):
    """Base class for all toolkit errors."""

    def to_dict(self) -> Dict[str, Any]:
        """Convert the error to a machine-readable dictionary."""
        return {"error": type(self).__name__, "message": str(self)}


class DataValidationError(SurvivalError):
    """Input data or configuration failed validation."""


class SchemaError(DataValidationError):
    """A required column is missing or the schema is inconsistent."""

    def __init__(self, message: str, column: Optional[str] = None) -> None:
        super().__init__(message)
        self.column = column

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        if self.column is not None:
            data["column"] = self.column
        return data


class ParseError(DataValidationError):
    """A cell could not be parsed."""

    def __init__(self, message: str, row: int, column: str) -> None:
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({"row": self.row, "column": self.column})
        return data


class RecordValidationError(DataValidationError):
    """One or more rows violate record invariants."""

    def __init__(self, diagnostics: Sequence[Tuple[int, str]]) -> None:
        self.diagnostics: List[Tuple[int, str]] = list(diagnostics)
        lines = "; ".join(f"row {row}: {msg}" for row, msg in self.diagnostics[:10])
        more = len(self.diagnostics) - 10
        if more > 0:
            lines += f"; ... and {more} more"
        super().__init__(lines)

    @property
    def rows(self) -> List[int]:
        return [row for row, _ in self.diagnostics]

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["rows"] = self.rows
        return data


class DegenerateDataError(DataValidationError):
    """Data cannot support the requested fit (no events, constant column, ...)."""


class DimensionError(DataValidationError):
    """Array or specification dimensions do not match."""


class ConfigError(DataValidationError):
    """A run configuration is invalid."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(message)
        self.field = field

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        if self.field is not None:
            data["field"] = self.field
        return data


class NumericalError(SurvivalError):
    """A numerical procedure failed."""


class ConvergenceError(NumericalError):
    """An iterative solver failed to converge."""


class RankDeficiencyError(NumericalError):
    """A design matrix is rank deficient."""

    def __init__(self, message: str, columns: Sequence[Any] = ()) -> None:
        super().__init__(message)
        self.columns = list(columns)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["columns"] = [str(c) for c in self.columns]
        return data


class InfeasibleError(NumericalError):
    """A linear program has no feasible point."""


class UnboundedError(NumericalError):
    """A linear program is unbounded below."""


class EstimabilityError(NumericalError):
    """A quantile level is beyond the estimable range."""


class UnsupportedPenaltyError(NumericalError):
    """The requested operation is not available for this penalty."""


class DegenerateResampleError(NumericalError):
    """A random resample cannot be used; the job should redraw."""
