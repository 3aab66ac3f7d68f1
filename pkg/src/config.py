"""
Configuration module for the survival analysis toolkit.
Handles loading and validating solver and runtime settings from environment variables.

File: hdsurv/src/config.py
"""
import logging
from typing import Dict, Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application settings
    APP_NAME: str = "hdsurv"
    APP_VERSION: str = "0.1.0"
    LOG_LEVEL: str = "INFO"

    # Sentry configuration
    SENTRY_DSN: Optional[str] = None
    SENTRY_ENVIRONMENT: str = "production"
    SENTRY_TRACES_SAMPLE_RATE: float = 0.1

    # Parallel execution
    THREADS: int = 1
    JOB_RETRY_ATTEMPTS: int = 5

    # Newton solver (unpenalized Cox)
    NEWTON_TOL: float = 1e-8
    NEWTON_MAX_ITER: int = 50
    NEWTON_MAX_HALVINGS: int = 20
    SEPARATION_BOUND: float = 30.0

    # Proximal gradient solver and regularization paths
    PROX_TOL: float = 1e-7
    PROX_MAX_ITER: int = 10000
    LLA_MAX_ITER: int = 20
    N_ETAS: int = 100
    ETA_MIN_RATIO: float = 0.01
    CV_FOLDS: int = 10

    # Data handling
    STANDARDIZE_DDOF: int = 1

    # Linear programming core
    LP_TOL: float = 1e-9
    LP_MAX_PIVOTS: int = 50000

    # AFT Dantzig outer loop
    DANTZIG_TOL: float = 1e-5
    DANTZIG_MAX_ITER: int = 50

    # Censored quantile regression
    CQR_TAU_LOWER: float = 0.05
    CQR_TAU_UPPER: float = 0.7
    CQR_TAU_STEP: float = 0.05
    CQR_BOUND: float = 1e3

    # Survival SVM
    SVM_EPOCHS: int = 500
    SVM_MAX_PAIRS: int = 50000
    SVM_CHECKPOINT: int = 100

    # Semi-competing risks
    SCR_TRAPEZOID_POINTS: int = 200
    SCR_THETA_FLOOR: float = 1e-4
    SCR_TOL: float = 1e-8
    SCR_MAX_ITER: int = 1000
    QUADRATURE_NODES: int = 64

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate the log level is a known logging level name."""
        level = v.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator(
        "NEWTON_TOL", "PROX_TOL", "LP_TOL", "DANTZIG_TOL", "ETA_MIN_RATIO", "CQR_BOUND"
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Validate tolerances and ratios are strictly positive."""
        if v <= 0:
            raise ValueError("Tolerance values must be positive")
        return v

    @field_validator("THREADS")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        """Validate thread count is positive or -1 (all cores)."""
        if v == 0 or v < -1:
            raise ValueError("THREADS must be >= 1 or -1")
        return v

    @field_validator("STANDARDIZE_DDOF")
    @classmethod
    def validate_ddof(cls, v: int) -> int:
        """Validate the SD denominator convention."""
        if v not in (0, 1):
            raise ValueError("STANDARDIZE_DDOF must be 0 (population) or 1 (sample)")
        return v

    def get_solver_defaults(self) -> Dict[str, float]:
        """Return a dictionary of solver tolerances for provenance records."""
        return {
            "newton_tol": self.NEWTON_TOL,
            "prox_tol": self.PROX_TOL,
            "lp_tol": self.LP_TOL,
            "dantzig_tol": self.DANTZIG_TOL,
            "cqr_bound": self.CQR_BOUND,
        }

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


# Create global settings instance
settings = Settings()
