"""
Logging setup shared by the CLI and library callers.

File: hdsurv/src/utils/logging.py
"""
import logging
import sys
from typing import Optional

from src.config import settings

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging to stderr.

    Args:
        level: Level name overriding settings.LOG_LEVEL
    """
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper()),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
