"""
Data model for censored survival data.

SurvivalDataset stores the study as column arrays (time, event, X) and
exposes per-subject CensoredRecord views. All arrays are copied and marked
read-only at construction; parallel workers share one dataset.

File: hdsurv/src/data/records.py
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import DegenerateDataError, DimensionError, RecordValidationError, SchemaError

logger = logging.getLogger(__name__)


def _frozen(values: Any, dtype: Any) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_names(feature_names: Sequence[str], p: int) -> Tuple[str, ...]:
    names = tuple(str(name) for name in feature_names)
    if len(names) != p:
        raise DimensionError(f"Expected {p} feature names, got {len(names)}")
    if len(set(names)) != len(names):
        dupes = sorted({name for name in names if names.count(name) > 1})
        raise SchemaError(f"Feature names must be unique; duplicated: {dupes}")
    return names


def _check_matrix(X: np.ndarray, n: int) -> List[Tuple[int, str]]:
    problems = []
    if X.ndim != 2 or X.shape[0] != n:
        raise DimensionError(f"Covariate matrix must have shape (n={n}, p), got {X.shape}")
    bad_rows = np.flatnonzero(~np.isfinite(X).all(axis=1))
    for i in bad_rows:
        problems.append((int(i) + 1, "covariates contain NaN or Inf"))
    return problems


@dataclass(frozen=True)
class CensoredRecord:
    """One subject: observed time, event indicator and covariates."""
    time: float
    event: bool
    covariates: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """
    Right-censored study data.

    Attributes:
        time: Observed times Y = min(T, C), shape (n,)
        event: Event indicators, shape (n,)
        X: Covariates, shape (n, p)
        feature_names: Column names, length p
        standardized: Whether columns were standardized
        column_means: Means removed by standardize (length p)
        column_sds: SDs divided out by standardize (length p)
        causes: Optional competing-risk labels (0 censored, k >= 1 cause k)
    """
    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    feature_names: Tuple[str, ...] = ()
    standardized: bool = False
    column_means: Optional[np.ndarray] = None
    column_sds: Optional[np.ndarray] = None
    causes: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        time = _frozen(self.time, float).reshape(-1)
        event = _frozen(self.event, bool).reshape(-1)
        n = time.shape[0]
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim == 1 and n > 0 and X.shape[0] == n:
            X = X.reshape(n, 1)
        if X.size == 0:
            X = X.reshape(n, 0 if X.ndim < 2 else X.shape[1])
        X.setflags(write=False)
        if event.shape[0] != n:
            raise DimensionError(f"event has length {event.shape[0]}, time has length {n}")

        problems = _check_matrix(X, n)
        for i in np.flatnonzero(~np.isfinite(time)):
            problems.append((int(i) + 1, "time is NaN or Inf"))
        for i in np.flatnonzero(np.isfinite(time) & (time < 0)):
            problems.append((int(i) + 1, f"time must be >= 0, got {time[i]}"))
        if problems:
            raise RecordValidationError(sorted(problems))

        names = self.feature_names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        object.__setattr__(self, "feature_names", _check_names(names, X.shape[1]))
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "X", X)
        if self.column_means is not None:
            object.__setattr__(self, "column_means", _frozen(self.column_means, float))
        if self.column_sds is not None:
            object.__setattr__(self, "column_sds", _frozen(self.column_sds, float))
        if self.causes is not None:
            causes = _frozen(self.causes, int).reshape(-1)
            if causes.shape[0] != n or np.any((causes > 0) != event):
                raise DimensionError("causes must have length n and be > 0 exactly for events")
            object.__setattr__(self, "causes", causes)

    @classmethod
    def from_records(
        cls, records: Sequence[CensoredRecord], feature_names: Optional[Sequence[str]] = None
    ) -> "SurvivalDataset":
        """
        Build a dataset from record objects.

        Args:
            records: Subjects
            feature_names: Column names (defaults to x1..xp)

        Returns:
            Validated dataset
        """
        p = len(records[0].covariates) if records else len(feature_names or ())
        problems = [
            (i + 1, f"expected {p} covariates, got {len(r.covariates)}")
            for i, r in enumerate(records)
            if len(r.covariates) != p
        ]
        if problems:
            raise RecordValidationError(problems)
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), p)
        return cls(
            time=[r.time for r in records],
            event=[r.event for r in records],
            X=X,
            feature_names=tuple(feature_names or ()),
        )

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @property
    def records(self) -> List[CensoredRecord]:
        return [
            CensoredRecord(float(t), bool(d), tuple(float(v) for v in x))
            for t, d, x in zip(self.time, self.event, self.X)
        ]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[CensoredRecord]:
        return iter(self.records)

    def require_events(self, minimum: int = 1) -> None:
        """Raise if fewer than `minimum` events are present."""
        if self.n_events < minimum:
            raise DegenerateDataError(
                f"Dataset has {self.n_events} event(s); at least {minimum} required"
            )

    def _replace(self, **changes: Any) -> "SurvivalDataset":
        values: Dict[str, Any] = {
            "time": self.time,
            "event": self.event,
            "X": self.X,
            "feature_names": self.feature_names,
            "standardized": self.standardized,
            "column_means": self.column_means,
            "column_sds": self.column_sds,
            "causes": self.causes,
        }
        values.update(changes)
        return SurvivalDataset(**values)

    def subset(self, indices: Sequence[int]) -> "SurvivalDataset":
        """Rows selected by index (repeats allowed, for bootstrap samples)."""
        idx = np.asarray(indices, dtype=int)
        return self._replace(
            time=self.time[idx],
            event=self.event[idx],
            X=self.X[idx],
            causes=None if self.causes is None else self.causes[idx],
        )

    def select_columns(self, columns: Sequence[int]) -> "SurvivalDataset":
        """Covariate columns selected by index."""
        cols = np.asarray(columns, dtype=int)
        return self._replace(
            X=self.X[:, cols],
            feature_names=tuple(self.feature_names[j] for j in cols),
            column_means=None if self.column_means is None else self.column_means[cols],
            column_sds=None if self.column_sds is None else self.column_sds[cols],
        )

    def with_covariates(self, X: np.ndarray, feature_names: Sequence[str]) -> "SurvivalDataset":
        """Same outcomes with a new covariate matrix."""
        return SurvivalDataset(
            time=self.time, event=self.event, X=X, feature_names=tuple(feature_names),
            causes=self.causes,
        )

    def equals(self, other: "SurvivalDataset") -> bool:
        """Field-by-field equality of outcomes, covariates and names."""
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.X, other.X)
        )


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """
    Uncensored continuous outcome with covariates (linear-model refits).

    Attributes:
        X: Covariates, shape (n, p)
        y: Response, shape (n,)
        feature_names: Column names
    """
    X: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = _frozen(self.y, float).reshape(-1)
        X = _frozen(self.X, float)
        problems = _check_matrix(X, y.shape[0])
        problems += [(int(i) + 1, "response is NaN or Inf") for i in np.flatnonzero(~np.isfinite(y))]
        if problems:
            raise RecordValidationError(sorted(problems))
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        object.__setattr__(self, "feature_names", _check_names(names, X.shape[1]))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def subset(self, indices: Sequence[int]) -> "RegressionDataset":
        idx = np.asarray(indices, dtype=int)
        return RegressionDataset(X=self.X[idx], y=self.y[idx], feature_names=self.feature_names)

    def select_columns(self, columns: Sequence[int]) -> "RegressionDataset":
        cols = np.asarray(columns, dtype=int)
        return RegressionDataset(
            X=self.X[:, cols], y=self.y, feature_names=tuple(self.feature_names[j] for j in cols)
        )


@dataclass(frozen=True)
class IllnessDeathRecord:
    """
    One semi-competing-risks observation.

    y1/d1: time and indicator of the non-terminal event (progression);
    y2/d2: time and indicator of the terminal event (death).
    """
    y1: float
    d1: bool
    y2: float
    d2: bool
    covariates: Tuple[float, ...]

    @property
    def pattern(self) -> Tuple[int, int]:
        return int(self.d1), int(self.d2)


def illness_death_problems(
    y1: np.ndarray, d1: np.ndarray, y2: np.ndarray, d2: np.ndarray
) -> List[Tuple[int, str]]:
    """
    Check the illness-death record invariants row by row.

    Returns:
        (1-based row, message) for every violation
    """
    problems: List[Tuple[int, str]] = []
    for name, arr in (("y1", y1), ("y2", y2)):
        for i in np.flatnonzero(~np.isfinite(arr)):
            problems.append((int(i) + 1, f"{name} is NaN or Inf"))
        for i in np.flatnonzero(np.isfinite(arr) & (arr < 0)):
            problems.append((int(i) + 1, f"{name} must be >= 0, got {arr[i]}"))
    for i in np.flatnonzero(y1 > y2):
        problems.append((int(i) + 1, f"y1 ({y1[i]}) exceeds y2 ({y2[i]})"))
    for i in np.flatnonzero(~d1 & (y1 != y2)):
        problems.append((int(i) + 1, "d1 = 0 requires y1 = y2"))
    for i in np.flatnonzero(d1 & (y1 == y2)):
        problems.append((int(i) + 1, "progression must strictly precede the terminal/censoring time"))
    return problems


@dataclass(frozen=True, eq=False)
class IllnessDeathDataset:
    """Column-array container of IllnessDeathRecord observations."""
    y1: np.ndarray
    d1: np.ndarray
    y2: np.ndarray
    d2: np.ndarray
    X: np.ndarray
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y1 = _frozen(self.y1, float).reshape(-1)
        y2 = _frozen(self.y2, float).reshape(-1)
        d1 = _frozen(self.d1, bool).reshape(-1)
        d2 = _frozen(self.d2, bool).reshape(-1)
        n = y1.shape[0]
        if not (y2.shape[0] == d1.shape[0] == d2.shape[0] == n):
            raise DimensionError("y1, d1, y2, d2 must have equal length")
        X = np.array(self.X, dtype=float, copy=True).reshape(n, -1)
        X.setflags(write=False)
        problems = _check_matrix(X, n) + illness_death_problems(y1, d1, y2, d2)
        if problems:
            raise RecordValidationError(sorted(problems))
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        object.__setattr__(self, "feature_names", _check_names(names, X.shape[1]))
        for name, arr in (("y1", y1), ("y2", y2), ("d1", d1), ("d2", d2), ("X", X)):
            object.__setattr__(self, name, arr)

    @classmethod
    def from_records(
        cls, records: Sequence[IllnessDeathRecord], feature_names: Optional[Sequence[str]] = None
    ) -> "IllnessDeathDataset":
        p = len(records[0].covariates) if records else 0
        return cls(
            y1=[r.y1 for r in records],
            d1=[r.d1 for r in records],
            y2=[r.y2 for r in records],
            d2=[r.d2 for r in records],
            X=np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            feature_names=tuple(feature_names or ()),
        )

    @property
    def n(self) -> int:
        return int(self.y1.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> IllnessDeathRecord:
        return IllnessDeathRecord(
            float(self.y1[i]), bool(self.d1[i]), float(self.y2[i]), bool(self.d2[i]),
            tuple(float(v) for v in self.X[i]),
        )

    def __iter__(self) -> Iterator[IllnessDeathRecord]:
        return (self[i] for i in range(self.n))

    @property
    def records(self) -> List[IllnessDeathRecord]:
        return list(self)

    def subset(self, indices: Sequence[int]) -> "IllnessDeathDataset":
        idx = np.asarray(indices, dtype=int)
        return IllnessDeathDataset(
            y1=self.y1[idx], d1=self.d1[idx], y2=self.y2[idx], d2=self.d2[idx],
            X=self.X[idx], feature_names=self.feature_names,
        )

    def transition_counts(self) -> Dict[str, int]:
        """Observed counts of each transition type."""
        return {
            "progression": int(self.d1.sum()),
            "death_without_progression": int((~self.d1 & self.d2).sum()),
            "death_after_progression": int((self.d1 & self.d2).sum()),
        }

    def equals(self, other: "IllnessDeathDataset") -> bool:
        return self.feature_names == other.feature_names and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("y1", "d1", "y2", "d2", "X")
        )


def standardize(ds: SurvivalDataset, ddof: Optional[int] = None) -> SurvivalDataset:
    """
    Center and scale every covariate column.

    The SD convention is the sample SD (n - 1 denominator) unless ddof=0 is
    requested. Standardizing an already standardized dataset composes the
    recorded means/SDs so back-transforms still reach the original scale.

    Args:
        ds: Dataset to standardize
        ddof: Delta degrees of freedom (defaults to settings.STANDARDIZE_DDOF)

    Returns:
        New dataset with standardized=True and recorded column statistics

    Raises:
        DegenerateDataError: If a column is constant
    """
    ddof = settings.STANDARDIZE_DDOF if ddof is None else ddof
    if ds.n <= ddof:
        raise DegenerateDataError(f"Need more than {ddof} rows to standardize")
    means = ds.X.mean(axis=0)
    sds = ds.X.std(axis=0, ddof=ddof)
    constant = [ds.feature_names[j] for j in np.flatnonzero(~(sds > 0))]
    if constant:
        raise DegenerateDataError(f"constant column {', '.join(constant)}")

    Z = (ds.X - means) / sds
    if ds.standardized and ds.column_means is not None and ds.column_sds is not None:
        total_means = ds.column_means + ds.column_sds * means
        total_sds = ds.column_sds * sds
    else:
        total_means, total_sds = means, sds
    return ds._replace(X=Z, standardized=True, column_means=total_means, column_sds=total_sds)


def back_transform(ds: SurvivalDataset, beta: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Map standardized-scale coefficients to the original covariate scale.

    Args:
        ds: Standardized dataset the coefficients were fitted on
        beta: Coefficients on the standardized scale

    Returns:
        (coefficients on the original scale, offset absorbed by the intercept)
        so that Z @ beta == X @ beta_orig - offset
    """
    if not ds.standardized or ds.column_sds is None or ds.column_means is None:
        return np.asarray(beta, dtype=float).copy(), 0.0
    beta_orig = np.asarray(beta, dtype=float) / ds.column_sds
    return beta_orig, float(ds.column_means @ beta_orig)
