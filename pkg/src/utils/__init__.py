"""
Utility modules shared across the toolkit.

File: hdsurv/src/utils/__init__.py
"""

from src.utils.metrics import metrics_collector
from src.utils.persistence import ArtifactWriter

__all__ = ["metrics_collector", "ArtifactWriter"]
