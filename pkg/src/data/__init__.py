"""
Survival data model, validation and CSV ingestion.

File: hdsurv/src/data/__init__.py
"""

from src.data.io import CsvSchema, SchemaMode, load_csv, to_frame, write_csv
from src.data.records import (
    CensoredRecord,
    IllnessDeathDataset,
    IllnessDeathRecord,
    RegressionDataset,
    SurvivalDataset,
    back_transform,
    standardize,
)

__all__ = [
    "CensoredRecord",
    "CsvSchema",
    "IllnessDeathDataset",
    "IllnessDeathRecord",
    "RegressionDataset",
    "SchemaMode",
    "SurvivalDataset",
    "back_transform",
    "load_csv",
    "standardize",
    "to_frame",
    "write_csv",
]
