"""
Illness-death model for semi-competing risks with a shared gamma frailty.

Given the frailty gamma, the three transitions have hazards

    progression                 gamma * l_01(t) * exp(h_1(x))
    death without progression   gamma * l_02(t) * exp(h_2(x))
    death after progression     gamma * l_03(t - t1) * exp(h_3(x))

with Weibull baselines l_0g(s) = phi_g1 * phi_g2 * s^(phi_g2 - 1). The frailty
is Gamma(1/theta, 1/theta) (mean 1, variance theta) and is integrated out in
closed form through its Laplace transform: for a subject with a = d1 + d2
observed transitions and total cumulative hazard Q,

    L = B * (1 + theta)^(d1 d2) * (1 + theta Q)^-(1/theta + a)

where B is the product of the observed baseline hazards and risk factors.

File: hdsurv/src/scr/illness_death.py
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import optimize

from src.config import settings
from src.data.records import IllnessDeathDataset, IllnessDeathRecord
from src.errors import (
    ConfigError,
    DegenerateDataError,
    DegenerateResampleError,
    DimensionError,
    NumericalError,
)
from src.learners.mlp import Network
from src.models.base import ResultBase, record_fit
from src.scheduler.jobs import JobScheduler
from src.scr.log_risk import LinearLogRisk, LogRisk, NetworkLogRisk

logger = logging.getLogger(__name__)

TRANSITIONS = ("progression", "death_without_progression", "death_after_progression")

IllnessDeathData = Union[IllnessDeathDataset, Sequence[IllnessDeathRecord]]

LOG_THETA_BOUNDS = (np.log(1e-8), np.log(1e4))
LOG_PHI_BOUNDS = (-15.0, 15.0)


def as_illness_death(data: IllnessDeathData) -> IllnessDeathDataset:
    if isinstance(data, IllnessDeathDataset):
        return data
    return IllnessDeathDataset.from_records(list(data))


class ScrMode(str, Enum):
    LINEAR = "linear"
    DNN = "dnn"


@dataclass
class ScrParameters:
    """Weibull baselines (rows: transitions; columns: scale, shape), frailty variance and log-risks."""
    phi: np.ndarray
    theta: float
    h: List[LogRisk]

    def __post_init__(self) -> None:
        phi = np.array(self.phi, dtype=float).reshape(3, 2)
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ConfigError("Weibull scale and shape parameters must be positive and finite", field="phi")
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ConfigError(f"Frailty variance must be positive, got {self.theta}", field="theta")
        if len(self.h) != 3:
            raise DimensionError(f"Need one log-risk function per transition, got {len(self.h)}")
        if len({risk.input_dim for risk in self.h}) != 1:
            raise DimensionError("Log-risk functions must share the covariate dimension")
        self.phi = phi
        self.theta = float(self.theta)

    @classmethod
    def linear(cls, phi: np.ndarray, theta: float, betas: Sequence[Sequence[float]]) -> "ScrParameters":
        return cls(phi, theta, [LinearLogRisk(np.asarray(b, dtype=float)) for b in betas])

    @property
    def p(self) -> int:
        return self.h[0].input_dim

    def log_risks(self, X: np.ndarray) -> np.ndarray:
        """h_g(x_i) as an (n, 3) array."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([risk(X) for risk in self.h])

    def baseline_hazard(self, g: int, s: np.ndarray) -> np.ndarray:
        scale, shape = self.phi[g]
        return scale * shape * np.power(s, shape - 1.0)

    def cumulative_baseline(self, g: int, s: np.ndarray) -> np.ndarray:
        scale, shape = self.phi[g]
        return scale * np.power(s, shape)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "phi": self.phi.tolist(),
            "theta": self.theta,
            "h": [risk.to_dict() for risk in self.h],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScrParameters":
        return cls(
            np.asarray(data["phi"], dtype=float),
            float(data["theta"]),
            [LogRisk.from_dict(item) for item in data["h"]],
        )


def pack_parameters(params: ScrParameters) -> np.ndarray:
    """Flat unconstrained vector (log phi row-major, log theta, h parameters)."""
    return np.concatenate(
        [np.log(params.phi).ravel(), [np.log(params.theta)], *[risk.get_params() for risk in params.h]]
    )


def unpack_parameters(z: np.ndarray, template: ScrParameters) -> ScrParameters:
    """Inverse of pack_parameters; template supplies the log-risk structure."""
    z = np.asarray(z, dtype=float)
    h, offset = [], 7
    for risk in template.h:
        k = risk.n_params
        h.append(risk.with_params(z[offset:offset + k]))
        offset += k
    if offset != z.size:
        raise DimensionError(f"Expected {offset} parameters, got {z.size}")
    return ScrParameters(np.exp(z[:6]).reshape(3, 2), float(np.exp(z[6])), h)


@dataclass
class _Terms:
    """Per-record pieces of the likelihood, one column per transition."""
    observed: np.ndarray
    log_clock: np.ndarray
    cumulative: np.ndarray
    log_hazard: np.ndarray
    count: np.ndarray
    total: np.ndarray


def _likelihood_terms(params: ScrParameters, ds: IllnessDeathDataset, H: np.ndarray) -> _Terms:
    d1, d2 = ds.d1, ds.d2
    sojourn = np.where(d1, ds.y2 - ds.y1, 0.0)
    clock = np.column_stack([ds.y1, ds.y1, sojourn])
    observed = np.column_stack([d1, ~d1 & d2, d1 & d2]).astype(float)
    positive = clock > 0
    log_clock = np.where(positive, np.log(np.where(positive, clock, 1.0)), 0.0)
    scale, shape = params.phi[:, 0], params.phi[:, 1]

    cumulative = np.where(positive, scale * np.exp(shape * log_clock + H), 0.0)
    log_hazard = np.log(scale) + np.log(shape) + (shape - 1.0) * log_clock + H
    # an event at clock 0 has no finite density
    log_hazard = np.where(observed > 0, np.where(positive, log_hazard, -np.inf), 0.0)
    count = observed.sum(axis=1)
    return _Terms(observed, log_clock, cumulative, log_hazard, count, cumulative.sum(axis=1))


def _record_nll(theta: float, terms: _Terms) -> np.ndarray:
    log_b = terms.log_hazard.sum(axis=1)
    return -(
        log_b
        + terms.observed[:, 2] * np.log1p(theta)
        - (1.0 / theta + terms.count) * np.log1p(theta * terms.total)
    )


def _check_finite(contributions: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(contributions))
    if bad.size:
        raise NumericalError(
            f"Non-finite likelihood contribution at record {int(bad[0])} ({bad.size} records affected)"
        )


def conditional_log_likelihood(
    params: ScrParameters, data: IllnessDeathData, gamma: Union[float, np.ndarray]
) -> np.ndarray:
    """
    Per-record log-likelihood given the frailty value(s).

    Args:
        params: Model parameters (theta unused)
        data: Records
        gamma: Frailty, scalar or one value per record

    Returns:
        Array (n,)
    """
    ds = as_illness_death(data)
    terms = _likelihood_terms(params, ds, params.log_risks(ds.X))
    gamma = np.asarray(gamma, dtype=float)
    return terms.count * np.log(gamma) + terms.log_hazard.sum(axis=1) - gamma * terms.total


def record_neg_log_likelihoods(params: ScrParameters, data: IllnessDeathData) -> np.ndarray:
    """
    Frailty-integrated negative log-likelihood of every record.

    Raises:
        NumericalError: A contribution is not finite (names the first record index)
    """
    ds = as_illness_death(data)
    terms = _likelihood_terms(params, ds, params.log_risks(ds.X))
    contributions = _record_nll(params.theta, terms)
    _check_finite(contributions)
    return contributions


def marginal_neg_log_likelihood(params: ScrParameters, data: IllnessDeathData) -> float:
    """Sum of record_neg_log_likelihoods over subjects."""
    return float(np.sum(record_neg_log_likelihoods(params, data)))


def printed_form_neg_log_likelihood(params: ScrParameters, data: IllnessDeathData) -> float:
    """
    Diagnostic variant with (1 + 1/theta)^(d1 d2) and (1 + Q/theta)^-(theta + a).

    This form does not reduce to exp(-Q) as theta -> 0 and is never used for
    fitting; it is kept so the two can be compared on the same records.
    """
    ds = as_illness_death(data)
    theta = params.theta
    terms = _likelihood_terms(params, ds, params.log_risks(ds.X))
    contributions = -(
        terms.log_hazard.sum(axis=1)
        + terms.observed[:, 2] * np.log1p(1.0 / theta)
        - (theta + terms.count) * np.log1p(terms.total / theta)
    )
    return float(np.sum(contributions))


def neg_log_likelihood_and_gradient(
    z: np.ndarray,
    template: ScrParameters,
    data: IllnessDeathData,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, np.ndarray]:
    """
    Marginal negative log-likelihood and its gradient in packed coordinates.

    Args:
        z: Packed parameters
        template: Structure for unpacking
        data: Records
        dropout: Drop probability for network log-risks
        rng: Generator for dropout masks

    Returns:
        (value, gradient)
    """
    ds = as_illness_death(data)
    params = unpack_parameters(z, template)
    evaluations = [risk.evaluate(ds.X, dropout, rng) for risk in params.h]
    H = np.column_stack([values for values, _ in evaluations])
    terms = _likelihood_terms(params, ds, H)
    theta = params.theta
    contributions = _record_nll(theta, terms)
    _check_finite(contributions)

    weight = (1.0 + terms.count * theta) / (1.0 + theta * terms.total)
    weighted = weight[:, None] * terms.cumulative
    d_h = weighted - terms.observed
    shape = params.phi[:, 1]
    d_log_scale = d_h.sum(axis=0)
    d_log_shape = (
        (weighted - terms.observed) * shape * terms.log_clock - terms.observed
    ).sum(axis=0)
    d_log_theta = -theta * np.sum(
        terms.observed[:, 2] / (1.0 + theta)
        + np.log1p(theta * terms.total) / theta ** 2
        - (1.0 / theta + terms.count) * terms.total / (1.0 + theta * terms.total)
    )
    grads = [np.column_stack([d_log_scale, d_log_shape]).ravel(), [d_log_theta]]
    for g, (_, pullback) in enumerate(evaluations):
        grads.append(pullback(d_h[:, g]))
    return float(contributions.sum()), np.concatenate(grads)


def transition_hazards(
    params: ScrParameters,
    t: float,
    x: np.ndarray,
    gamma_value: float = 1.0,
    t1: Optional[float] = None,
) -> Tuple[float, float, float]:
    """
    Conditional hazards of the three transitions at time t.

    Args:
        params: Model parameters
        t: Time since entry (> 0)
        x: Covariate vector
        gamma_value: Frailty value
        t1: Progression time; the third hazard is 0 when omitted

    Returns:
        (progression, death without progression, death after progression)

    Raises:
        ConfigError: t <= 0 or t1 outside (0, t)
    """
    if not t > 0:
        raise ConfigError(f"Hazards need t > 0, got {t}", field="t")
    if t1 is not None and not 0 < t1 < t:
        raise ConfigError(f"Sojourn hazard needs 0 < t1 < t, got t1={t1}, t={t}", field="t1")
    risk = np.exp(params.log_risks(np.asarray(x, dtype=float).reshape(1, -1))[0])
    progression = gamma_value * params.baseline_hazard(0, t) * risk[0]
    death = gamma_value * params.baseline_hazard(1, t) * risk[1]
    after = 0.0 if t1 is None else gamma_value * params.baseline_hazard(2, t - t1) * risk[2]
    return float(progression), float(death), float(after)


class ScrHyperparameters(BaseModel):
    """Sub-network shape and training rate of one grid point."""
    layers: int = Field(default=2, ge=0)
    units: int = Field(default=16, ge=1)
    lr: float = Field(default=1e-2, gt=0)
    dropout: float = Field(default=0.0, ge=0, lt=1)


def default_grid() -> List[ScrHyperparameters]:
    return [
        ScrHyperparameters(layers=layers, units=units, lr=lr, dropout=dropout)
        for layers in (1, 2)
        for units in (8, 16, 32)
        for lr in (1e-2, 1e-3)
        for dropout in (0.0, 0.2)
    ]


class ScrOptions(BaseModel):
    """Fitting options for fit_scr."""
    hyper: ScrHyperparameters = Field(default_factory=ScrHyperparameters)
    grid: Optional[List[ScrHyperparameters]] = None
    epochs: int = Field(default=500, ge=0)
    max_halvings: int = Field(default=30, ge=0)
    max_iter: int = Field(default_factory=lambda: settings.SCR_MAX_ITER, ge=1)
    validation_fraction: float = Field(default=0.2, gt=0, lt=1)
    bootstrap_B: int = Field(default=0, ge=0)
    confidence: float = Field(default=0.95, gt=0, lt=1)
    seed: int = 0
    n_jobs: Optional[int] = None


@dataclass
class ScrFit(ResultBase):
    """Fitted illness-death model."""
    params: ScrParameters
    neg_log_lik: float
    converged: bool
    mode: ScrMode
    n: int
    feature_names: Tuple[str, ...] = ()
    hyperparams: Dict[str, Any] = field(default_factory=dict)
    theta_ci: Optional[Tuple[float, float]] = None
    theta_at_boundary: bool = False

    @property
    def theta(self) -> float:
        return self.params.theta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "neg_log_lik": self.neg_log_lik,
            "converged": self.converged,
            "mode": self.mode.value,
            "n": self.n,
            "feature_names": list(self.feature_names),
            "hyperparams": dict(self.hyperparams),
            "theta": self.theta,
            "theta_ci": list(self.theta_ci) if self.theta_ci is not None else None,
            "theta_at_boundary": self.theta_at_boundary,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScrFit":
        ci = data.get("theta_ci")
        return cls(
            params=ScrParameters.from_dict(data["params"]),
            neg_log_lik=float(data["neg_log_lik"]),
            converged=bool(data["converged"]),
            mode=ScrMode(data["mode"]),
            n=int(data["n"]),
            feature_names=tuple(data.get("feature_names", ())),
            hyperparams=dict(data.get("hyperparams", {})),
            theta_ci=(float(ci[0]), float(ci[1])) if ci is not None else None,
            theta_at_boundary=bool(data.get("theta_at_boundary", False)),
        )


def require_transitions(ds: IllnessDeathDataset) -> None:
    """
    Raises:
        DegenerateDataError: Some transition is never observed
    """
    counts = ds.transition_counts()
    missing = [name for name in TRANSITIONS if counts[name] == 0]
    if missing:
        raise DegenerateDataError(
            f"No observed {missing[0].replace('_', ' ')} transitions; every baseline needs at least one"
        )


def _initial_phi(ds: IllnessDeathDataset) -> np.ndarray:
    """Exponential baselines at the crude transition rates."""
    counts = ds.transition_counts()
    exposure = [ds.y1.sum(), ds.y1.sum(), np.sum((ds.y2 - ds.y1)[ds.d1])]
    rates = [max(counts[name], 1) / max(e, 1e-12) for name, e in zip(TRANSITIONS, exposure)]
    return np.column_stack([rates, np.ones(3)])


def _clip(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z[:6] = np.clip(z[:6], *LOG_PHI_BOUNDS)
    z[6] = np.clip(z[6], *LOG_THETA_BOUNDS)
    return z


def _fit_linear(ds: IllnessDeathDataset, opts: ScrOptions) -> Tuple[ScrParameters, float, bool]:
    template = ScrParameters(_initial_phi(ds), 1.0, [LinearLogRisk(np.zeros(ds.p)) for _ in range(3)])
    bounds = [LOG_PHI_BOUNDS] * 6 + [LOG_THETA_BOUNDS] + [(None, None)] * (3 * ds.p)

    def objective(z: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = neg_log_likelihood_and_gradient(z, template, ds)
        return value / ds.n, grad / ds.n

    result = optimize.minimize(
        objective,
        pack_parameters(template),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": opts.max_iter},
    )
    if not result.success:
        logger.warning(f"L-BFGS-B did not converge: {result.message}")
    params = unpack_parameters(result.x, template)
    return params, marginal_neg_log_likelihood(params, ds), bool(result.success)


def _network_log_risk(p: int, hyper: ScrHyperparameters, seed: int) -> NetworkLogRisk:
    dims = [p] + [hyper.units] * hyper.layers + [1]
    activations = ["relu"] * hyper.layers + ["linear"]
    return NetworkLogRisk(Network.init(dims, activations, seed=seed))


def _fit_dnn(
    ds: IllnessDeathDataset, opts: ScrOptions, hyper: ScrHyperparameters
) -> Tuple[ScrParameters, float, bool]:
    """Gradient descent from the linear fit's baselines and frailty, one sub-network per transition."""
    warm, _, _ = _fit_linear(ds, opts)
    template = ScrParameters(
        warm.phi, warm.theta, [_network_log_risk(ds.p, hyper, opts.seed + g) for g in range(3)]
    )
    rng = np.random.default_rng(opts.seed)

    def loss(z: np.ndarray) -> float:
        try:
            return marginal_neg_log_likelihood(unpack_parameters(z, template), ds) / ds.n
        except (ConfigError, NumericalError):
            return np.inf

    z = pack_parameters(template)
    current = loss(z)
    converged = False
    for epoch in range(opts.epochs):
        _, grad = neg_log_likelihood_and_gradient(
            z, template, ds, hyper.dropout, rng if hyper.dropout > 0 else None
        )
        lr = hyper.lr
        for _ in range(opts.max_halvings + 1):
            candidate = _clip(z - lr * grad / ds.n)
            value = loss(candidate)
            if value <= current:
                break
            lr /= 2.0
        else:
            logger.debug(f"No descent at epoch {epoch}; stopping")
            converged = True
            break
        improvement = current - value
        z, current = candidate, value
        if improvement <= settings.SCR_TOL * max(1.0, abs(current)):
            converged = True
            break
    params = unpack_parameters(z, template)
    return params, current * ds.n, converged


def _split(ds: IllnessDeathDataset, fraction: float, seed: int) -> Tuple[IllnessDeathDataset, IllnessDeathDataset]:
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_val = max(1, int(round(fraction * ds.n)))
    return ds.subset(np.sort(perm[n_val:])), ds.subset(np.sort(perm[:n_val]))


def select_hyperparameters(
    ds: IllnessDeathDataset, grid: Sequence[ScrHyperparameters], opts: ScrOptions
) -> Tuple[ScrHyperparameters, List[float]]:
    """
    Pick the grid point with the smallest validation negative log-likelihood per subject.

    Returns:
        (best grid point, validation score per grid point)
    """
    train, validation = _split(ds, opts.validation_fraction, opts.seed)
    require_transitions(train)
    scores = []
    for hyper in grid:
        params, _, _ = _fit_dnn(train, opts, hyper)
        try:
            score = marginal_neg_log_likelihood(params, validation) / validation.n
        except NumericalError:
            score = np.inf
        logger.debug(f"Grid point {hyper.model_dump()}: validation loss {score:.5f}")
        scores.append(score)
    best = int(np.argmin(scores))
    logger.info(f"Selected {grid[best].model_dump()} from {len(grid)} grid points")
    return grid[best], scores


def _estimate(
    ds: IllnessDeathDataset, mode: ScrMode, opts: ScrOptions, hyper: Optional[ScrHyperparameters]
) -> ScrFit:
    if mode == ScrMode.LINEAR:
        params, nll, converged = _fit_linear(ds, opts)
        hyperparams: Dict[str, Any] = {}
    else:
        params, nll, converged = _fit_dnn(ds, opts, hyper)
        hyperparams = hyper.model_dump()
    at_boundary = params.theta < settings.SCR_THETA_FLOOR
    return ScrFit(
        params=params,
        neg_log_lik=nll,
        converged=converged,
        mode=mode,
        n=ds.n,
        feature_names=ds.feature_names,
        hyperparams=hyperparams,
        theta_at_boundary=at_boundary,
    )


def fit_scr(
    data: IllnessDeathData,
    mode: Union[ScrMode, str] = ScrMode.LINEAR,
    opts: Optional[ScrOptions] = None,
) -> ScrFit:
    """
    Fit the gamma-frailty illness-death model by maximizing the marginal likelihood.

    Baselines and theta are optimized on the log scale. Linear log-risks use
    L-BFGS-B with analytic gradients; network log-risks start from the
    linear fit's baselines and frailty and follow full-batch gradient descent
    with step halving. With a grid, the network shape and rate are chosen on a
    held-out validation split and then refit on all data.

    Args:
        data: Illness-death records
        mode: linear or dnn
        opts: Fitting options

    Returns:
        ScrFit, with a bootstrap interval for theta when opts.bootstrap_B > 0

    Raises:
        DegenerateDataError: A transition type is never observed
    """
    start_time = time.perf_counter()
    ds = as_illness_death(data)
    mode = ScrMode(mode)
    opts = opts or ScrOptions()
    require_transitions(ds)

    hyper = None
    if mode == ScrMode.DNN:
        hyper = opts.hyper
        if opts.grid:
            hyper, _ = select_hyperparameters(ds, opts.grid, opts)
    fit = _estimate(ds, mode, opts, hyper)
    if fit.theta_at_boundary:
        logger.warning(
            f"Frailty variance {fit.theta:.2e} is below {settings.SCR_THETA_FLOOR}; "
            "the transitions look conditionally independent"
        )
    if opts.bootstrap_B > 0:
        fit.theta_ci = bootstrap_theta_ci(ds, fit, opts)

    duration_ms = record_fit(f"scr_{mode.value}", fit.converged, start_time)
    logger.info(
        f"Fitted {mode.value} illness-death model on {ds.n} subjects in {duration_ms}ms: "
        f"theta={fit.theta:.4f}, nll={fit.neg_log_lik:.4f}"
    )
    return fit


def bootstrap_theta_ci(
    data: IllnessDeathData, fit: ScrFit, opts: Optional[ScrOptions] = None
) -> Tuple[float, float]:
    """
    Percentile bootstrap interval for theta over resampled subjects.

    Network hyperparameters stay at the point-estimate choice. Resamples
    missing a transition type are redrawn; the interval is widened to
    contain the point estimate.

    Args:
        data: Records the fit was computed on
        fit: Point estimate
        opts: Options carrying bootstrap_B, confidence, seed, n_jobs

    Returns:
        (lower, upper)
    """
    ds = as_illness_death(data)
    opts = opts or ScrOptions(bootstrap_B=200)
    if opts.bootstrap_B < 2:
        raise ConfigError("Bootstrap intervals need at least 2 replicates", field="bootstrap_B")
    hyper = ScrHyperparameters(**fit.hyperparams) if fit.mode == ScrMode.DNN else None

    def replicate(index: int, rng: np.random.Generator) -> float:
        sample = ds.subset(np.sort(rng.integers(0, ds.n, size=ds.n)))
        try:
            require_transitions(sample)
        except DegenerateDataError as e:
            raise DegenerateResampleError(str(e)) from e
        return _estimate(sample, fit.mode, opts, hyper).theta

    scheduler = JobScheduler(opts.n_jobs, name="scr_bootstrap")
    outcomes = scheduler.map_seeded(replicate, opts.bootstrap_B, opts.seed, raise_errors=True)
    thetas = np.array([o.value for o in outcomes if o.value is not None], dtype=float)
    if thetas.size < 2:
        raise DegenerateResampleError(f"Only {thetas.size} usable bootstrap replicates")
    alpha = 1.0 - opts.confidence
    lower, upper = np.quantile(thetas, [alpha / 2.0, 1.0 - alpha / 2.0])
    lower, upper = min(float(lower), fit.theta), max(float(upper), fit.theta)
    logger.info(f"Bootstrap {opts.confidence:.0%} interval for theta: ({lower:.4f}, {upper:.4f}) from {thetas.size} replicates")
    return lower, upper


@dataclass
class TransitionCurves:
    """Frailty-marginalized state probabilities on a time grid."""
    grid: np.ndarray
    pfs: np.ndarray
    progression: np.ndarray
    death_without_progression: np.ndarray
    progression_then_death: np.ndarray

    def total(self) -> np.ndarray:
        return self.pfs + self.progression + self.death_without_progression

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.grid,
                "pfs": self.pfs,
                "cif_prog": self.progression,
                "cif_death": self.death_without_progression,
                "prog_then_death": self.progression_then_death,
            }
        )


def _params_of(fit: Union[ScrFit, ScrParameters]) -> ScrParameters:
    return fit.params if isinstance(fit, ScrFit) else fit


def predict_transitions(
    fit: Union[ScrFit, ScrParameters], x: np.ndarray, grid: Sequence[float]
) -> TransitionCurves:
    """
    Marginal probabilities of progression-free survival, progression by t,
    death without progression by t, and progression followed by death by t.

    The first-event distribution is the gamma Laplace transform of the summed
    cumulative hazards. It is split between the two causes by their hazard ratio
    at interval midpoints, so the three state probabilities sum to one.
    The two-step path integrates the conditional death probability over the
    progression time with the trapezoid rule on a mesh of
    settings.SCR_TRAPEZOID_POINTS points plus the grid.

    Args:
        fit: Fitted model or parameters
        x: Covariate vector
        grid: Non-negative evaluation times

    Returns:
        TransitionCurves on the grid
    """
    params = _params_of(fit)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(~np.isfinite(grid)) or np.any(grid < 0):
        raise ConfigError("Prediction grid must be non-empty, finite and non-negative", field="grid")
    risk = np.exp(params.log_risks(np.asarray(x, dtype=float).reshape(1, -1))[0])
    scale = params.phi[:, 0] * risk
    shape = params.phi[:, 1]
    theta = params.theta

    def first_event_chf(u: np.ndarray) -> np.ndarray:
        return scale[0] * u ** shape[0] + scale[1] * u ** shape[1]

    def laplace(s: np.ndarray) -> np.ndarray:
        return np.exp(-np.log1p(theta * s) / theta)

    t_max = float(grid.max())
    if t_max == 0.0:
        zeros = np.zeros(grid.size)
        return TransitionCurves(grid, np.ones(grid.size), zeros, zeros.copy(), zeros.copy())

    mesh = np.union1d(np.linspace(0.0, t_max, settings.SCR_TRAPEZOID_POINTS), grid)
    A = first_event_chf(mesh)
    F = 1.0 - laplace(A)
    mid = 0.5 * (mesh[1:] + mesh[:-1])
    rate1 = scale[0] * shape[0] * mid ** (shape[0] - 1.0)
    rate2 = scale[1] * shape[1] * mid ** (shape[1] - 1.0)
    ratio = rate1 / (rate1 + rate2)
    dF = np.diff(F)
    d_progression = ratio * dF
    progression = np.concatenate(([0.0], np.cumsum(d_progression)))
    death = np.concatenate(([0.0], np.cumsum((1.0 - ratio) * dF)))

    idx = np.searchsorted(mesh, grid)
    two_step = np.zeros(grid.size)
    for j, (t, k) in enumerate(zip(grid, idx)):
        if k == 0:
            continue
        u = mesh[: k + 1]
        sojourn_chf = scale[2] * (t - u) ** shape[2]
        # P(death by t | progression at u), marginal over the frailty posterior
        exponent = (1.0 / theta + 1.0) * (np.log1p(theta * A[: k + 1]) - np.log1p(theta * (A[: k + 1] + sojourn_chf)))
        g = 1.0 - np.exp(exponent)
        two_step[j] = np.sum(0.5 * (g[:-1] + g[1:]) * d_progression[:k])

    return TransitionCurves(
        grid=grid,
        pfs=1.0 - F[idx],
        progression=progression[idx],
        death_without_progression=death[idx],
        progression_then_death=two_step,
    )


@dataclass
class PathSample:
    """Simulated illness-death trajectories without censoring."""
    first_time: np.ndarray
    progressed: np.ndarray
    death_time: np.ndarray
    gamma: np.ndarray

    @property
    def n(self) -> int:
        return int(self.first_time.size)

    def empirical_curves(self, grid: Sequence[float]) -> TransitionCurves:
        """Monte-Carlo counterpart of predict_transitions."""
        grid = np.asarray(grid, dtype=float).reshape(-1)
        first_by = self.first_time[None, :] <= grid[:, None]
        death_by = self.death_time[None, :] <= grid[:, None]
        return TransitionCurves(
            grid=grid,
            pfs=1.0 - first_by.mean(axis=1),
            progression=(first_by & self.progressed).mean(axis=1),
            death_without_progression=(first_by & ~self.progressed).mean(axis=1),
            progression_then_death=(death_by & self.progressed).mean(axis=1),
        )


def sample_paths(
    params: ScrParameters, X: np.ndarray, gammas: np.ndarray, rng: np.random.Generator
) -> PathSample:
    """
    Draw one trajectory per row of X given frailties.

    The first event time solves gamma * (L1(t) + L2(t)) = E with E standard
    exponential (bisection on every row at once); the cause is drawn in
    proportion to the two hazards at that time; the sojourn to death after
    progression inverts the Weibull cumulative hazard.

    Args:
        params: Model parameters
        X: Covariates (n, p)
        gammas: Frailties (n,)
        rng: Random generator

    Returns:
        PathSample
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    gammas = np.asarray(gammas, dtype=float).reshape(-1)
    n = X.shape[0]
    if gammas.size != n:
        raise DimensionError(f"Need {n} frailties, got {gammas.size}")
    scale = params.phi[:, 0] * np.exp(params.log_risks(X))
    shape = params.phi[:, 1]
    target = rng.exponential(size=n) / gammas
    cause_draw = rng.uniform(size=n)
    sojourn_draw = rng.exponential(size=n)

    def first_chf(t: np.ndarray) -> np.ndarray:
        return scale[:, 0] * t ** shape[0] + scale[:, 1] * t ** shape[1]

    lo, hi = np.zeros(n), np.ones(n)
    for _ in range(1100):
        short = first_chf(hi) < target
        if not short.any():
            break
        hi[short] *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        below = first_chf(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    first = 0.5 * (lo + hi)

    rate1 = scale[:, 0] * shape[0] * first ** (shape[0] - 1.0)
    rate2 = scale[:, 1] * shape[1] * first ** (shape[1] - 1.0)
    progressed = cause_draw < rate1 / (rate1 + rate2)
    sojourn = (sojourn_draw / (gammas * scale[:, 2])) ** (1.0 / shape[2])
    return PathSample(
        first_time=first,
        progressed=progressed,
        death_time=np.where(progressed, first + sojourn, first),
        gamma=gammas,
    )


def simulate_fitted_paths(
    fit: Union[ScrFit, ScrParameters], x: np.ndarray, n_paths: int, seed: Optional[int] = None
) -> PathSample:
    """Trajectories of one covariate profile with frailties drawn from the fitted gamma law."""
    params = _params_of(fit)
    rng = np.random.default_rng(seed)
    gammas = rng.gamma(1.0 / params.theta, params.theta, size=n_paths)
    X = np.repeat(np.asarray(x, dtype=float).reshape(1, -1), n_paths, axis=0)
    return sample_paths(params, X, gammas, rng)


def reference_profile(X: np.ndarray) -> np.ndarray:
    """Column means, or the most frequent value for columns with at most two distinct values."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    profile = X.mean(axis=0)
    for j in range(X.shape[1]):
        values, counts = np.unique(X[:, j], return_counts=True)
        if values.size <= 2:
            profile[j] = values[int(np.argmax(counts))]
    return profile


def log_risk_sweep(
    fit: Union[ScrFit, ScrParameters],
    data: IllnessDeathData,
    feature: Union[int, str],
    grid: Sequence[float],
) -> pd.DataFrame:
    """
    Log-risk functions along one covariate with the others at their reference values.

    Args:
        fit: Fitted model or parameters
        data: Records supplying the reference profile
        feature: Column index or name
        grid: Values of the swept covariate

    Returns:
        DataFrame with the covariate column and h1, h2, h3
    """
    params = _params_of(fit)
    ds = as_illness_death(data)
    if isinstance(feature, str):
        if feature not in ds.feature_names:
            raise ConfigError(f"Unknown feature {feature!r}", field="feature")
        j = ds.feature_names.index(feature)
    else:
        j = int(feature)
        if not 0 <= j < ds.p:
            raise ConfigError(f"Feature index {j} outside [0, {ds.p})", field="feature")
    grid = np.asarray(grid, dtype=float).reshape(-1)
    X = np.repeat(reference_profile(ds.X)[None, :], grid.size, axis=0)
    X[:, j] = grid
    H = params.log_risks(X)
    return pd.DataFrame({ds.feature_names[j]: grid, "h1": H[:, 0], "h2": H[:, 1], "h3": H[:, 2]})
