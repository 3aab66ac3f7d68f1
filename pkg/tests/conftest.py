# File: hdsurv/tests/conftest.py

import numpy as np
import pytest

from src.config import Settings
from src.data.records import SurvivalDataset
from src.utils.metrics import metrics_collector


@pytest.fixture
def mock_settings():
    """Fixture that provides test settings."""
    return Settings(
        APP_NAME="hdsurv-test",
        APP_VERSION="0.1.0-test",
        LOG_LEVEL="DEBUG",
        SENTRY_DSN=None,
        SENTRY_ENVIRONMENT="test",
        THREADS=1,
        JOB_RETRY_ATTEMPTS=3,
    )


@pytest.fixture(autouse=True)
def reset_metrics():
    """Start every test with an empty metrics collector."""
    metrics_collector.reset()
    yield
    metrics_collector.reset()


@pytest.fixture
def toy_dataset():
    """Three subjects: event at 1, censored at 2, event at 3."""
    return SurvivalDataset(
        time=[1.0, 2.0, 3.0],
        event=[True, False, True],
        X=[[0.5, 1.0], [1.0, -1.0], [0.0, 2.0]],
        feature_names=("a", "b"),
    )


def simulate_cox(n, beta, seed, censor_rate=0.3, rho=0.0):
    """Exponential-baseline Cox data with independent exponential censoring."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    cov = np.full((p, p), rho) + (1.0 - rho) * np.eye(p)
    X = rng.multivariate_normal(np.zeros(p), cov, size=n)
    T = rng.exponential(1.0, size=n) / np.exp(X @ beta)
    if censor_rate > 0:
        C = rng.exponential(np.median(T) / censor_rate, size=n)
    else:
        C = np.full(n, np.inf)
    time = np.minimum(T, C)
    event = T <= C
    return SurvivalDataset(time=time, event=event, X=X)


@pytest.fixture
def cox_dataset():
    """Seeded Cox dataset with n=200 and beta=(1, -1, 0)."""
    return simulate_cox(200, [1.0, -1.0, 0.0], seed=11)


@pytest.fixture
def small_random_dataset():
    """Random 10x3 dataset with ties-free times and some censoring."""
    rng = np.random.default_rng(5)
    X = rng.normal(size=(10, 3))
    time = rng.permutation(np.arange(1, 11)).astype(float) + rng.uniform(0, 0.5, size=10)
    event = rng.uniform(size=10) < 0.7
    event[0] = True
    return SurvivalDataset(time=time, event=event, X=X)

