"""
Seeded data generators for Cox, AFT, competing-risks and illness-death data.

Covariates are standard normal, optionally equicorrelated through one shared
factor. Random censoring is exponential; its rate is given directly or
calibrated so the expected censored fraction hits a target.

File: hdsurv/src/simulate/generators.py
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.data.records import IllnessDeathDataset, IllnessDeathRecord, SurvivalDataset
from src.errors import ConfigError
from src.scr.illness_death import PathSample, ScrParameters, sample_paths

logger = logging.getLogger(__name__)


class SimKind(str, Enum):
    COX = "cox"
    AFT = "aft"
    COMPETING = "competing"
    ILLNESS_DEATH = "illness_death"


class ErrorFamily(str, Enum):
    """AFT error law; times are log-normal, Weibull and log-logistic respectively."""
    NORMAL = "normal"
    EXTREME_VALUE = "extreme_value"
    LOGISTIC = "logistic"


class CensoringSpec(BaseModel):
    """Exponential random censoring (rate, or calibrated to target) plus optional administrative cutoff."""
    rate: Optional[float] = Field(default=None, ge=0)
    target: Optional[float] = Field(default=0.3, ge=0, lt=1)
    admin_time: Optional[float] = Field(default=None, gt=0)


class SimSpec(BaseModel):
    """Simulation design."""
    kind: SimKind = SimKind.COX
    n: int = Field(default=200, ge=1)
    p: int = Field(default=3, ge=1)
    beta: Optional[List[float]] = None
    rho: float = Field(default=0.0, ge=0, lt=1)
    seed: Optional[int] = None
    censoring: CensoringSpec = Field(default_factory=CensoringSpec)

    # cox: Weibull baseline cumulative hazard scale * t^shape
    baseline_scale: float = Field(default=1.0, gt=0)
    baseline_shape: float = Field(default=1.0, gt=0)

    # aft: log T = intercept + x'beta + sigma * e
    family: ErrorFamily = ErrorFamily.NORMAL
    intercept: float = 0.0
    sigma: float = Field(default=1.0, gt=0)

    # competing: cause-1 mass at x = 0 and cause-2 coefficients
    cause_probability: float = Field(default=0.5, gt=0, lt=1)
    beta_competing: Optional[List[float]] = None

    # illness_death
    theta: float = Field(default=1.0, gt=0)
    phi: List[List[float]] = Field(default_factory=lambda: [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    transition_betas: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_shapes(self) -> "SimSpec":
        for name in ("beta", "beta_competing"):
            value = getattr(self, name)
            if value is not None and len(value) != self.p:
                raise ValueError(f"{name} has {len(value)} entries, expected p={self.p}")
        if len(self.phi) != 3 or any(len(row) != 2 or min(row) <= 0 for row in self.phi):
            raise ValueError("phi must be 3 rows of positive (scale, shape)")
        if self.transition_betas is not None and (
            len(self.transition_betas) != 3 or any(len(b) != self.p for b in self.transition_betas)
        ):
            raise ValueError(f"transition_betas must be 3 vectors of length p={self.p}")
        return self

    def coefficients(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float) if self.beta is not None else np.zeros(self.p)


def draw_covariates(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Standard normal columns with pairwise correlation rho."""
    Z = rng.standard_normal(size=(n, p))
    if rho > 0:
        shared = rng.standard_normal(size=(n, 1))
        Z = np.sqrt(1.0 - rho) * Z + np.sqrt(rho) * shared
    return Z


def draw_frailty(theta: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Gamma(1/theta, 1/theta) frailties: mean 1, variance theta."""
    if not theta > 0:
        raise ConfigError(f"Frailty variance must be positive, got {theta}", field="theta")
    return rng.gamma(1.0 / theta, theta, size=size)


def _expected_censored(rate: float, latent: np.ndarray, admin_time: Optional[float]) -> float:
    horizon = latent if admin_time is None else np.minimum(latent, admin_time)
    censored = 1.0 - np.exp(-rate * horizon)
    if admin_time is not None:
        censored = np.where(latent > admin_time, 1.0, censored)
    return float(np.mean(censored))


def calibrate_censoring_rate(
    latent: np.ndarray, target: float, admin_time: Optional[float] = None, tol: float = 1e-10
) -> float:
    """
    Exponential censoring rate whose expected censored fraction equals target.

    Bisection on the rate; the expectation is exact given the latent times.

    Args:
        latent: Event times before censoring
        target: Desired censored fraction in [0, 1)
        admin_time: Administrative cutoff applied on top of random censoring

    Returns:
        Rate (0 when the administrative cutoff alone already censors at least target)
    """
    latent = np.asarray(latent, dtype=float)
    floor = _expected_censored(0.0, latent, admin_time)
    if floor >= target:
        if floor > target:
            logger.warning(
                f"Administrative censoring alone censors {floor:.3f} > target {target:.3f}"
            )
        return 0.0
    lo, hi = 0.0, 1.0 / max(float(np.median(latent)), 1e-12)
    while _expected_censored(hi, latent, admin_time) < target:
        hi *= 2.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if _expected_censored(mid, latent, admin_time) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _censor_times(latent: np.ndarray, censoring: CensoringSpec, rng: np.random.Generator) -> np.ndarray:
    n = latent.size
    if censoring.rate is not None:
        rate = censoring.rate
    elif censoring.target is not None:
        rate = calibrate_censoring_rate(latent, censoring.target, censoring.admin_time)
    else:
        rate = 0.0
    draws = rng.exponential(size=n)
    C = draws / rate if rate > 0 else np.full(n, np.inf)
    if censoring.admin_time is not None:
        C = np.minimum(C, censoring.admin_time)
    return C


def _check_censoring(censored_fraction: float, censoring: CensoringSpec) -> None:
    requested = censoring.rate or censoring.target or censoring.admin_time
    if requested and censored_fraction == 0.0:
        logger.warning("Censoring was requested but no observation is censored")
    elif censored_fraction == 1.0:
        logger.warning("Every observation is censored")


def _cox_times(spec: SimSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    E = rng.exponential(size=spec.n)
    return (E / (spec.baseline_scale * np.exp(X @ spec.coefficients()))) ** (1.0 / spec.baseline_shape)


def _aft_times(spec: SimSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if spec.family == ErrorFamily.NORMAL:
        e = rng.standard_normal(size=spec.n)
    elif spec.family == ErrorFamily.EXTREME_VALUE:
        e = np.log(rng.exponential(size=spec.n))
    else:
        e = rng.logistic(size=spec.n)
    return np.exp(spec.intercept + X @ spec.coefficients() + spec.sigma * e)


def _competing_times(spec: SimSpec, X: np.ndarray, rng: np.random.Generator):
    """
    Cause 1 follows F_1(t|x) = 1 - (1 - q(1 - exp(-t)))^exp(x'b1); given cause 2,
    times are exponential with rate exp(x'b2).
    """
    q = spec.cause_probability
    risk1 = np.exp(X @ spec.coefficients())
    beta2 = np.asarray(spec.beta_competing, dtype=float) if spec.beta_competing is not None else np.zeros(spec.p)
    total1 = 1.0 - (1.0 - q) ** risk1
    u = rng.uniform(size=spec.n)
    tail = rng.exponential(size=spec.n) / np.exp(X @ beta2)
    is_cause1 = u < total1
    inner = 1.0 - (1.0 - np.where(is_cause1, 1.0 - u, 1.0) ** (1.0 / risk1)) / q
    times = np.where(is_cause1, -np.log(np.clip(inner, 1e-300, None)), tail)
    return times, np.where(is_cause1, 1, 2)


@dataclass
class IllnessDeathDraw:
    """Observed illness-death records with the latent trajectories behind them."""
    dataset: IllnessDeathDataset
    paths: PathSample
    censor_times: np.ndarray
    params: ScrParameters


def draw_illness_death(spec: SimSpec) -> IllnessDeathDraw:
    """
    Frailty, first transition, sojourn, then censoring.

    A progression is observed when it happens strictly before censoring;
    the terminal event is observed when death precedes censoring.
    Censoring calibration targets the terminal event.
    """
    rng = np.random.default_rng(spec.seed)
    X = draw_covariates(spec.n, spec.p, spec.rho, rng)
    betas = spec.transition_betas or [[0.0] * spec.p] * 3
    params = ScrParameters.linear(np.asarray(spec.phi, dtype=float), spec.theta, betas)
    gammas = draw_frailty(spec.theta, spec.n, rng)
    paths = sample_paths(params, X, gammas, rng)
    C = _censor_times(paths.death_time, spec.censoring, rng)

    first_seen = paths.first_time < C
    d1 = first_seen & paths.progressed
    d2 = paths.death_time <= C
    y1 = np.where(first_seen, paths.first_time, C)
    y2 = np.where(d2, paths.death_time, C)
    y1 = np.where(d1, y1, y2)
    dataset = IllnessDeathDataset(
        y1=y1, d1=d1, y2=y2, d2=d2, X=X, feature_names=tuple(f"x{j + 1}" for j in range(spec.p))
    )
    _check_censoring(float(np.mean(~d2)), spec.censoring)
    return IllnessDeathDraw(dataset=dataset, paths=paths, censor_times=C, params=params)


def simulate(spec: SimSpec) -> Union[SurvivalDataset, IllnessDeathDataset]:
    """
    Draw a dataset from the design.

    Args:
        spec: Simulation design

    Returns:
        SurvivalDataset (competing risks carry cause labels) or IllnessDeathDataset
    """
    if spec.kind == SimKind.ILLNESS_DEATH:
        draw = draw_illness_death(spec)
        logger.info(f"Simulated {spec.n} illness-death records: {observation_patterns(draw.dataset)}")
        return draw.dataset

    rng = np.random.default_rng(spec.seed)
    X = draw_covariates(spec.n, spec.p, spec.rho, rng)
    causes = None
    if spec.kind == SimKind.COX:
        latent = _cox_times(spec, X, rng)
    elif spec.kind == SimKind.AFT:
        latent = _aft_times(spec, X, rng)
    else:
        latent, causes = _competing_times(spec, X, rng)
    C = _censor_times(latent, spec.censoring, rng)
    event = latent <= C
    time = np.where(event, latent, C)
    if causes is not None:
        causes = np.where(event, causes, 0)
    _check_censoring(float(np.mean(~event)), spec.censoring)
    logger.info(f"Simulated {spec.kind.value} data: n={spec.n}, p={spec.p}, events={int(event.sum())}")
    return SurvivalDataset(
        time=time,
        event=event,
        X=X,
        feature_names=tuple(f"x{j + 1}" for j in range(spec.p)),
        causes=causes,
    )


PATTERNS = {
    (0, 0): "censored",
    (1, 0): "non_terminal_censored",
    (0, 1): "terminal_only",
    (1, 1): "non_terminal_then_terminal",
}


def observation_patterns(
    records: Union[IllnessDeathDataset, Sequence[IllnessDeathRecord]]
) -> Dict[str, int]:
    """Counts of the four (d1, d2) observation patterns."""
    counts = {name: 0 for name in PATTERNS.values()}
    for record in records:
        counts[PATTERNS[record.pattern]] += 1
    return counts
