"""
Batch pipelines behind the command-line subcommands.

Each pipeline validates its own method options, runs one estimator and writes
result JSON plus tidy CSVs through an ArtifactWriter. Run-level validation
(paths, seed, threads) lives in RunConfig.

File: hdsurv/src/pipelines.py
"""
import logging
import os
from dataclasses import replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import joblib
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.aft.dantzig import adaptive_dantzig_weights, cv_eta_q, dantzig_aft
from src.config import settings
from src.cox.coxnet import cross_validate, fit_path, fit_penalized
from src.cox.partial_likelihood import CoxFit, fit_mple, predict_survival
from src.cox.penalties import PenaltyKind, PenaltySpec
from src.cox.screening import concordance_screen, marginal_cox_screen
from src.data.io import CsvSchema, SchemaMode, load_csv, to_frame
from src.data.records import IllnessDeathDataset, SurvivalDataset, back_transform, standardize
from src.errors import ConfigError, DataValidationError, SchemaError
from src.inference.cqr import QuantileGrid, fit_cqr
from src.inference.spares import (
    FamilyKind,
    FixedSelector,
    LassoSelector,
    RefitFamily,
    ScreenSelector,
    SeCorrection,
    fused_hdcqr,
    spares_fit,
)
from src.learners.boosting import BoostFit, boost_fit, predict_boost
from src.learners.forest import Forest, bagging_fit, forest_curves, rsf_fit
from src.learners.svm import KernelKind, KernelSpec, fit_hybrid_svm, fit_rank_svm, fit_regression_svm
from src.learners.trees import SplitCriterion, TreeOptions
from src.nonparam.step_function import StepFunction
from src.scr.illness_death import (
    ScrFit,
    ScrMode,
    ScrOptions,
    default_grid,
    fit_scr,
    log_risk_sweep,
    predict_transitions,
    reference_profile,
)
from src.simulate.generators import SimSpec, simulate
from src.utils.persistence import ArtifactWriter

logger = logging.getLogger(__name__)


class Command(str, Enum):
    SIMULATE = "simulate"
    FIT = "fit"
    PREDICT = "predict"
    SCREEN = "screen"
    SPARES = "spares"
    CQR = "cqr"
    DANTZIG = "dantzig"
    SVM = "svm"
    FOREST = "forest"
    BOOST = "boost"
    SCR = "scr"
    CV = "cv"


STOCHASTIC_COMMANDS = {
    Command.SIMULATE,
    Command.SPARES,
    Command.SVM,
    Command.FOREST,
    Command.BOOST,
    Command.SCR,
    Command.CV,
}


class RunConfig(BaseModel):
    """One CLI run: command, paths, seed, worker count and method options."""
    model_config = ConfigDict(populate_by_name=True)

    command: Command
    input: Optional[str] = None
    output: str = "results"
    seed: Optional[int] = None
    threads: int = Field(default_factory=lambda: settings.THREADS, ge=-1)
    csv_schema: CsvSchema = Field(default_factory=CsvSchema, alias="schema")
    method: Dict[str, Any] = Field(default_factory=dict)
    simulation: Optional[SimSpec] = None
    model: Optional[str] = None
    times: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_run(self) -> "RunConfig":
        if self.threads == 0:
            raise ValueError("threads must be >= 1, or -1 for every core (field 'threads')")
        if self.command != Command.SIMULATE:
            if self.input is None:
                raise ValueError(f"'{self.command.value}' needs an input CSV (field 'input')")
            if not os.path.isfile(self.input):
                raise ValueError(f"Input file {self.input} does not exist (field 'input')")
        if self.command == Command.SIMULATE and self.simulation is None:
            raise ValueError("'simulate' needs a simulation design (field 'simulation')")
        if self.command == Command.PREDICT and (self.model is None or not os.path.isfile(self.model)):
            raise ValueError("'predict' needs an existing model file (field 'model')")
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"'{self.command.value}' is stochastic and needs a seed (field 'seed')")
        return self


def require_seed(config: RunConfig, reason: str) -> int:
    if config.seed is None:
        raise ConfigError(f"{reason} needs a seed", field="seed")
    return config.seed


def _survival_data(config: RunConfig) -> SurvivalDataset:
    data = load_csv(config.input, config.csv_schema)
    if not isinstance(data, SurvivalDataset):
        raise SchemaError(f"'{config.command.value}' needs survival data, not illness-death records")
    return data


def _coefficient_frame(names, beta_standardized, beta_original) -> pd.DataFrame:
    return pd.DataFrame({"feature": list(names), "beta_standardized": beta_standardized, "beta": beta_original})


class MethodOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FitOptions(MethodOptions):
    """
    name: 'cox' for the partial-likelihood MLE or 'cox-<penalty>' (e.g. cox-lasso, cox-elastic-net).
    Without eta a cross-validated path is fitted (cv=True) or a plain path.
    """
    name: str = "cox"
    eta: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = None
    weights: Optional[List[float]] = None
    groups: Optional[List[List[int]]] = None
    sigma: Optional[List[List[float]]] = None
    cv: bool = True
    folds: Optional[int] = Field(default=None, ge=2)
    n_etas: Optional[int] = Field(default=None, ge=2)
    eta_min_ratio: Optional[float] = Field(default=None, gt=0, lt=1)
    standardize: bool = True

    def penalty(self) -> Optional[PenaltySpec]:
        if self.name == "cox":
            return None
        if not self.name.startswith("cox-"):
            raise ConfigError(f"Unknown fit method {self.name!r}", field="method.name")
        try:
            kind = PenaltyKind(self.name[4:].replace("-", "_"))
        except ValueError as e:
            raise ConfigError(f"Unknown penalty in {self.name!r}", field="method.name") from e
        return PenaltySpec(
            kind=kind, eta=self.eta or 1.0, alpha=self.alpha, weights=self.weights, groups=self.groups,
            sigma=self.sigma,
        )


def run_fit(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = FitOptions.model_validate(config.method)
    ds = _survival_data(config)
    spec = opts.penalty()
    if spec is None:
        fit = fit_mple(ds)
        writer.write_json("fit.json", fit)
        writer.write_csv("coefficients.csv", _coefficient_frame(ds.feature_names, fit.beta, fit.beta))
        return

    data = standardize(ds) if opts.standardize else ds
    eta = opts.eta
    if eta is None:
        if opts.cv:
            path = cross_validate(
                data, spec, k=opts.folds, seed=require_seed(config, "Cross-validation"),
                n_etas=opts.n_etas, eta_min_ratio=opts.eta_min_ratio, n_jobs=config.threads,
            )
        else:
            path = fit_path(data, spec, n_etas=opts.n_etas, eta_min_ratio=opts.eta_min_ratio)
        writer.write_json("path.json", path)
        writer.write_csv("path.csv", path.to_tidy())
        eta = path.selected_eta if path.selected_eta is not None else float(path.etas[-1])
    fit = fit_penalized(data, spec.model_copy(update={"eta": eta}))
    original = original_scale_fit(data, fit)
    writer.write_json("fit.json", original)
    writer.write_csv("coefficients.csv", _coefficient_frame(ds.feature_names, fit.beta, original.beta))


def original_scale_fit(data: SurvivalDataset, fit: CoxFit) -> CoxFit:
    """Re-express a fit on standardized covariates so it predicts from raw covariates."""
    beta, offset = back_transform(data, fit.beta)
    if offset == 0.0 and np.array_equal(beta, fit.beta):
        return fit
    factor = float(np.exp(-offset))
    chf = fit.baseline_chf
    baseline = StepFunction(chf.knots, chf.values * factor, chf.left_value * factor)
    return replace(fit, beta=beta, baseline_chf=baseline)


class CvOptions(FitOptions):
    name: str = "cox-lasso"


def run_cv(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = CvOptions.model_validate(config.method)
    spec = opts.penalty()
    if spec is None:
        raise ConfigError("Cross-validation needs a penalized method", field="method.name")
    ds = _survival_data(config)
    data = standardize(ds) if opts.standardize else ds
    path = cross_validate(
        data, spec, k=opts.folds, seed=config.seed, n_etas=opts.n_etas,
        eta_min_ratio=opts.eta_min_ratio, n_jobs=config.threads,
    )
    writer.write_json("path.json", path)
    writer.write_csv("path.csv", path.to_tidy())
    scores = pd.DataFrame({"eta": path.etas, "cv_score": path.cv_scores, "cv_se": path.cv_se})
    writer.write_csv("cv_scores.csv", scores)


def run_simulate(config: RunConfig, writer: ArtifactWriter) -> None:
    spec = config.simulation.model_copy(update={"seed": config.seed})
    data = simulate(spec)
    schema = config.csv_schema
    if isinstance(data, SurvivalDataset) and data.causes is not None and schema.cause is None:
        schema = schema.model_copy(update={"cause": "cause"})
    writer.write_csv("data.csv", to_frame(data, schema))
    writer.write_json("design.json", spec.model_dump(mode="json"))


class PredictOptions(MethodOptions):
    """Times at which survival curves are evaluated (Cox fits and forests)."""
    times: Optional[List[float]] = None


def _read_covariates(path: str, names) -> np.ndarray:
    frame = pd.read_csv(path)
    missing = [name for name in names if name not in frame.columns]
    if missing:
        raise SchemaError(f"Covariate columns missing from {path}: {missing}", column=missing[0])
    return frame[list(names)].to_numpy(dtype=float)


def _curves_frame(curves: np.ndarray, grid: np.ndarray, value: str) -> pd.DataFrame:
    m, k = curves.shape
    return pd.DataFrame({"row": np.repeat(np.arange(m), k), "t": np.tile(grid, m), value: curves.reshape(-1)})


def run_predict(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = PredictOptions.model_validate(config.method)
    times = opts.times or config.times
    if config.model.endswith(".joblib"):
        bundle = joblib.load(config.model)
        fit: BoostFit = bundle["fit"]
        X = _read_covariates(config.input, bundle["feature_names"])
        writer.write_csv("risk.csv", pd.DataFrame({"row": np.arange(X.shape[0]), "risk": predict_boost(fit, X)}))
        return

    payload = ArtifactWriter(os.path.dirname(config.model) or ".").load_json(os.path.basename(config.model))
    if payload is None:
        raise SchemaError(f"Could not read model {config.model}")
    if times is None:
        raise ConfigError("Prediction needs evaluation times", field="times")
    grid = np.asarray(times, dtype=float)
    if "trees" in payload:
        forest = Forest.from_dict(payload)
        names = forest.trees[0].feature_names if forest.trees else ()
        X = _read_covariates(config.input, names)
        writer.write_csv("survival.csv", _curves_frame(forest_curves(forest, X, grid), grid, "survival"))
    elif "baseline_chf" in payload:
        fit = CoxFit.from_dict(payload)
        X = _read_covariates(config.input, fit.feature_names)
        writer.write_csv("survival.csv", _curves_frame(predict_survival(fit, X, grid), grid, "survival"))
    elif "params" in payload and "mode" in payload:
        fit = ScrFit.from_dict(payload)
        X = _read_covariates(config.input, fit.feature_names)
        frames = []
        for i, x in enumerate(X):
            frame = predict_transitions(fit, x, grid).to_frame()
            frame.insert(0, "row", i)
            frames.append(frame)
        writer.write_csv("transitions.csv", pd.concat(frames, ignore_index=True))
    else:
        raise SchemaError(f"Unrecognized model file {config.model}")


class ScreenOptions(MethodOptions):
    name: str = Field(default="cox", pattern="^(cox|concordance)$")
    d: Optional[int] = Field(default=None, ge=1)
    cutoff: Optional[float] = None


def run_screen(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = ScreenOptions.model_validate(config.method)
    ds = _survival_data(config)
    screen = marginal_cox_screen if opts.name == "cox" else concordance_screen
    result = screen(ds, d=opts.d, cutoff=opts.cutoff, n_jobs=config.threads)
    writer.write_json("screen.json", result)
    writer.write_csv("screened.csv", to_frame(result.apply(ds), config.csv_schema))


class SparesOptions(MethodOptions):
    """Split-select-refit inference on survival data (Cox or censored-quantile refits)."""
    family: FamilyKind = FamilyKind.COX
    taus: Optional[List[float]] = None
    selector: str = Field(default="lasso", pattern="^(screen|lasso|fixed)$")
    d: Optional[int] = Field(default=None, ge=1)
    support: Optional[List[int]] = None
    B: int = Field(default=100, ge=1)
    se_correction: SeCorrection = SeCorrection.NONE
    fused: bool = False

    @model_validator(mode="after")
    def check_family(self) -> "SparesOptions":
        if self.family == FamilyKind.LINEAR:
            raise ValueError("The linear family needs an uncensored outcome; use cox or cqr")
        if self.selector == "fixed" and not self.support:
            raise ValueError("The fixed selector needs a support")
        return self


def run_spares(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = SparesOptions.model_validate(config.method)
    ds = _survival_data(config)
    selectors: Dict[str, Callable[[], Any]] = {
        "screen": lambda: ScreenSelector(opts.d),
        "lasso": lambda: LassoSelector(seed=config.seed),
        "fixed": lambda: FixedSelector(opts.support),
    }
    selector = selectors[opts.selector]()
    if opts.fused:
        grid = QuantileGrid(tuple(opts.taus)) if opts.taus else None
        result = fused_hdcqr(ds, selector, grid, B=opts.B, seed=config.seed, n_jobs=config.threads,
                             se_correction=opts.se_correction)
    else:
        family = RefitFamily(kind=opts.family, taus=opts.taus)
        result = spares_fit(ds, selector, family, B=opts.B, seed=config.seed, n_jobs=config.threads,
                            se_correction=opts.se_correction)
    writer.write_json("spares.json", result)
    writer.write_csv("spares.csv", result.to_tidy())


class CqrOptions(MethodOptions):
    taus: Optional[List[float]] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    step: Optional[float] = None


def run_cqr(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = CqrOptions.model_validate(config.method)
    grid = QuantileGrid(tuple(opts.taus)) if opts.taus else QuantileGrid.regular(opts.lower, opts.upper, opts.step)
    fit = fit_cqr(_survival_data(config), grid)
    writer.write_json("cqr.json", fit)
    writer.write_csv("cqr.csv", fit.to_tidy())


class DantzigOptions(MethodOptions):
    eta_q: Optional[float] = Field(default=None, gt=0)
    adaptive: bool = False
    folds: Optional[int] = Field(default=None, ge=2)
    n_etas: int = Field(default=20, ge=2)


def run_dantzig(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = DantzigOptions.model_validate(config.method)
    ds = _survival_data(config)
    weights = adaptive_dantzig_weights(ds) if opts.adaptive else None
    eta_q = opts.eta_q
    if eta_q is None:
        cv = cv_eta_q(ds, k=opts.folds, seed=require_seed(config, "Choosing eta_q by cross-validation"),
                      n_etas=opts.n_etas, weights=weights, n_jobs=config.threads)
        writer.write_json("dantzig_cv.json", cv)
        eta_q = cv.selected_eta
    writer.write_json("dantzig.json", dantzig_aft(ds, eta_q, weights=weights))


class SvmOptions(MethodOptions):
    mode: str = Field(default="rank", pattern="^(rank|regression|hybrid)$")
    kernel: KernelKind = KernelKind.LINEAR
    bandwidth: Optional[float] = None
    gamma: float = Field(default=1.0, gt=0)
    mix: float = Field(default=0.5, ge=0, le=1)
    margin: float = Field(default=1.0, gt=0)
    epsilon: float = Field(default=0.0, ge=0)
    epochs: Optional[int] = Field(default=None, ge=1)


def run_svm(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = SvmOptions.model_validate(config.method)
    ds = _survival_data(config)
    kernel = KernelSpec(opts.kernel, opts.bandwidth)
    if opts.mode == "rank":
        model = fit_rank_svm(ds, kernel, opts.gamma, opts.margin, opts.epochs, config.seed)
    elif opts.mode == "regression":
        model = fit_regression_svm(ds, kernel, opts.gamma, opts.epsilon, opts.epochs)
    else:
        model = fit_hybrid_svm(ds, kernel, opts.gamma, opts.mix, opts.margin, opts.epsilon, opts.epochs, config.seed)
    writer.write_json("svm.json", model)


class ForestOptions(MethodOptions):
    name: str = Field(default="rsf", pattern="^(rsf|bagging)$")
    B: int = Field(default=100, ge=1)
    mtry: Optional[int] = Field(default=None, ge=1)
    bootstrap: bool = True
    min_events: int = Field(default=5, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=0)
    alpha_stop: float = Field(default=0.05, gt=0, le=1)
    criterion: SplitCriterion = SplitCriterion.LOGRANK


def run_forest(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = ForestOptions.model_validate(config.method)
    ds = _survival_data(config)
    tree_opts = TreeOptions(
        min_events=opts.min_events, max_depth=opts.max_depth, alpha_stop=opts.alpha_stop, criterion=opts.criterion
    )
    if opts.name == "rsf":
        forest = rsf_fit(ds, opts.B, opts.mtry, tree_opts, config.seed, config.threads, opts.bootstrap)
    else:
        forest = bagging_fit(ds, opts.B, tree_opts, config.seed, config.threads, opts.bootstrap)
    writer.write_json("forest.json", forest)


class BoostOptions(MethodOptions):
    M: int = Field(default=100, ge=0)
    w: float = Field(default=0.1, gt=0, le=1)
    tree_depth: int = Field(default=2, ge=1)


def run_boost(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = BoostOptions.model_validate(config.method)
    ds = _survival_data(config)
    fit = boost_fit(ds, opts.M, opts.w, opts.tree_depth, config.seed)
    writer.write_json("boost.json", fit)
    writer.write_joblib("boost.joblib", {"fit": fit, "feature_names": ds.feature_names})


class ScrCommandOptions(MethodOptions):
    """Illness-death fit plus prediction curves at the reference profile and an optional log-risk sweep."""
    mode: ScrMode = ScrMode.LINEAR
    fit: ScrOptions = Field(default_factory=ScrOptions)
    use_default_grid: bool = False
    horizon: Optional[List[float]] = None
    sweep_feature: Optional[str] = None
    sweep_points: int = Field(default=50, ge=2)


def run_scr(config: RunConfig, writer: ArtifactWriter) -> None:
    opts = ScrCommandOptions.model_validate(config.method)
    data = load_csv(config.input, config.csv_schema.model_copy(update={"mode": SchemaMode.ILLNESS_DEATH}))
    if not isinstance(data, IllnessDeathDataset):
        raise DataValidationError("'scr' needs illness-death records")
    fit_opts = opts.fit.model_copy(update={"seed": config.seed, "n_jobs": config.threads})
    if opts.use_default_grid and not fit_opts.grid:
        fit_opts = fit_opts.model_copy(update={"grid": default_grid()})
    fit = fit_scr(data, opts.mode, fit_opts)
    writer.write_json("scr.json", fit)

    horizon = opts.horizon or np.linspace(0.0, float(np.max(data.y2)), 50).tolist()
    curves = predict_transitions(fit, reference_profile(data.X), horizon)
    writer.write_csv("transitions.csv", curves.to_frame())
    if opts.sweep_feature is not None:
        if opts.sweep_feature not in data.feature_names:
            raise ConfigError(f"Unknown feature {opts.sweep_feature!r}", field="method.sweep_feature")
        column = data.X[:, data.feature_names.index(opts.sweep_feature)]
        grid = np.linspace(column.min(), column.max(), opts.sweep_points)
        writer.write_csv("log_risk.csv", log_risk_sweep(fit, data, opts.sweep_feature, grid))


PIPELINES: Dict[Command, Callable[[RunConfig, ArtifactWriter], None]] = {
    Command.SIMULATE: run_simulate,
    Command.FIT: run_fit,
    Command.PREDICT: run_predict,
    Command.SCREEN: run_screen,
    Command.SPARES: run_spares,
    Command.CQR: run_cqr,
    Command.DANTZIG: run_dantzig,
    Command.SVM: run_svm,
    Command.FOREST: run_forest,
    Command.BOOST: run_boost,
    Command.SCR: run_scr,
    Command.CV: run_cv,
}
