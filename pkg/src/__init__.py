"""
hdsurv: high-dimensional survival analysis.

File: hdsurv/src/__init__.py
"""

from src.config import settings
from src.utils.metrics import metrics_collector

__all__ = ["settings", "metrics_collector"]
