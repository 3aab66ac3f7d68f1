"""
Shared result base classes.

File: hdsurv/src/models/__init__.py
"""

from src.models.base import FitStatus, ResultBase, record_fit

__all__ = ["FitStatus", "ResultBase", "record_fit"]
