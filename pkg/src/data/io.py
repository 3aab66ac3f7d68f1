"""
CSV ingestion and export for survival and illness-death data.

File: hdsurv/src/data/io.py
"""
import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator

from src.data.records import (
    IllnessDeathDataset,
    SurvivalDataset,
    illness_death_problems,
)
from src.errors import DegenerateDataError, ParseError, RecordValidationError, SchemaError

logger = logging.getLogger(__name__)

EVENT_TOKENS: Dict[str, bool] = {"0": False, "1": True, "false": False, "true": True}
MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class SchemaMode(str, Enum):
    """Kind of data a CSV carries."""
    SURVIVAL = "survival"
    ILLNESS_DEATH = "illness_death"


class CsvSchema(BaseModel):
    """
    Column-role map for a CSV file.

    When covariates is omitted every column not assigned another role is a
    covariate, in file order.
    """
    mode: SchemaMode = SchemaMode.SURVIVAL
    time: str = "time"
    event: str = "event"
    y1: str = "y1"
    d1: str = "d1"
    y2: str = "y2"
    d2: str = "d2"
    cause: Optional[str] = None
    covariates: Optional[List[str]] = None

    @model_validator(mode="after")
    def check_roles(self) -> "CsvSchema":
        roles = self.role_columns()
        if len(set(roles)) != len(roles):
            raise ValueError(f"Schema assigns one column to several roles: {roles}")
        if self.covariates is not None and set(self.covariates) & set(roles):
            raise ValueError("Covariate columns overlap outcome columns")
        return self

    def role_columns(self) -> List[str]:
        if self.mode == SchemaMode.SURVIVAL:
            roles = [self.time, self.event]
        else:
            roles = [self.y1, self.d1, self.y2, self.d2]
        if self.cause:
            roles.append(self.cause)
        return roles


def _parse_numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    for i, cell in enumerate(raw):
        if cell.strip().lower() in MISSING_TOKENS:
            raise ParseError("missing value", row=i + 1, column=column)
    values = pd.to_numeric(raw.str.strip(), errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        i = int(bad[0])
        raise ParseError(f"non-numeric value {raw.iloc[i]!r}", row=i + 1, column=column)
    return values.to_numpy(dtype=float)


def _parse_event(frame: pd.DataFrame, column: str) -> np.ndarray:
    out = np.empty(len(frame), dtype=bool)
    for i, cell in enumerate(frame[column]):
        token = cell.strip().lower()
        if token in MISSING_TOKENS:
            raise ParseError("missing value", row=i + 1, column=column)
        if token in EVENT_TOKENS:
            out[i] = EVENT_TOKENS[token]
            continue
        try:
            numeric = float(token)
        except ValueError:
            numeric = None
        if numeric not in (0.0, 1.0):
            raise ParseError(f"event value {cell!r} not in {{0,1,true,false}}", row=i + 1, column=column)
        out[i] = bool(numeric)
    return out


def _read(path: str, schema: CsvSchema) -> Tuple[pd.DataFrame, List[str]]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    roles = schema.role_columns()
    covariates = schema.covariates
    if covariates is None:
        covariates = [c for c in frame.columns if c not in roles]
    for column in roles + covariates:
        if column not in frame.columns:
            raise SchemaError(f"missing column {column!r}", column=column)
    return frame, covariates


def load_csv(path: str, schema: Optional[CsvSchema] = None) -> Union[SurvivalDataset, IllnessDeathDataset]:
    """
    Load and validate a CSV file.

    Args:
        path: File path (UTF-8, comma separated, header row)
        schema: Column roles (defaults to time,event + all other columns)

    Returns:
        SurvivalDataset, or IllnessDeathDataset in illness-death mode

    Raises:
        SchemaError: A named column is missing
        ParseError: A cell is missing or non-numeric (row/column given)
        RecordValidationError: Rows violate record invariants
        DegenerateDataError: No event rows
    """
    schema = schema or CsvSchema()
    frame, covariates = _read(path, schema)
    X = np.column_stack([_parse_numeric(frame, c) for c in covariates]) if covariates else np.empty((len(frame), 0))
    causes = _parse_numeric(frame, schema.cause).astype(int) if schema.cause else None

    if schema.mode == SchemaMode.ILLNESS_DEATH:
        y1 = _parse_numeric(frame, schema.y1)
        y2 = _parse_numeric(frame, schema.y2)
        d1 = _parse_event(frame, schema.d1)
        d2 = _parse_event(frame, schema.d2)
        problems = illness_death_problems(y1, d1, y2, d2)
        if problems:
            raise RecordValidationError(sorted(problems))
        if not (d1.any() or d2.any()):
            raise DegenerateDataError(f"{path}: no event rows")
        data = IllnessDeathDataset(y1=y1, d1=d1, y2=y2, d2=d2, X=X, feature_names=tuple(covariates))
        logger.info(f"Loaded {data.n} illness-death records with p={data.p} from {path}")
        return data

    time = _parse_numeric(frame, schema.time)
    event = _parse_event(frame, schema.event)
    ds = SurvivalDataset(time=time, event=event, X=X, feature_names=tuple(covariates), causes=causes)
    if ds.n_events == 0:
        raise DegenerateDataError(f"{path}: no event rows")
    logger.info(f"Loaded {ds.n} records ({ds.n_events} events) with p={ds.p} from {path}")
    return ds


def to_frame(data: Union[SurvivalDataset, IllnessDeathDataset], schema: Optional[CsvSchema] = None) -> pd.DataFrame:
    """Table view of a dataset using the schema's column names."""
    if isinstance(data, IllnessDeathDataset):
        schema = schema or CsvSchema(mode=SchemaMode.ILLNESS_DEATH)
        columns = {
            schema.y1: data.y1,
            schema.d1: data.d1.astype(int),
            schema.y2: data.y2,
            schema.d2: data.d2.astype(int),
        }
    else:
        schema = schema or CsvSchema()
        columns = {schema.time: data.time, schema.event: data.event.astype(int)}
        if data.causes is not None and schema.cause:
            columns[schema.cause] = data.causes
    frame = pd.DataFrame(columns)
    for j, name in enumerate(data.feature_names):
        frame[name] = data.X[:, j]
    return frame


def write_csv(
    data: Union[SurvivalDataset, IllnessDeathDataset], path: str, schema: Optional[CsvSchema] = None
) -> None:
    """
    Write a dataset in the format load_csv reads back exactly.

    Args:
        data: Dataset to write
        path: Destination path
        schema: Column names to use
    """
    to_frame(data, schema).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.debug(f"Wrote {data.n} rows to {path}")
