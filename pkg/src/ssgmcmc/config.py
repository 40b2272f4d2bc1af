"""Experiment configuration and output records.

Configs are strict JSON: unknown keys are rejected and every default is
written back into ``config.echo.json`` so a run records all of its
hyperparameters. The output records double as the JSON schemas shipped in
``docs/schemas``.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data import Dataset, load_csv, make_linear_regression, make_two_class
from .estimator import MaskDistribution
from .model import Model, make_model
from .partition import PartitionSpec, make_partition
from .sampler import RunConfig, StepSchedule, init_theta


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    kind: Literal["gaussian-target", "linear-regression", "logistic-regression", "mlp"]
    # mlp
    widths: Optional[list[int]] = None
    task: Literal["classification", "regression"] = "classification"
    # linear / logistic (input dimension defaults to the dataset's)
    dim: Optional[int] = None
    n_classes: int = 2
    bias: bool = True
    noise_var: float = Field(1.0, gt=0)
    prior_scale: float = Field(1.0, gt=0)
    # gaussian target
    precision: Optional[list[list[float]]] = None
    mean: Optional[list[float]] = None

    @model_validator(mode="after")
    def _required(self):
        if self.kind == "gaussian-target" and self.precision is None:
            raise ValueError("gaussian-target needs 'precision'")
        if self.kind == "mlp" and self.widths is None:
            raise ValueError("mlp needs 'widths'")
        return self


class DataConfig(_Strict):
    source: Literal["none", "synthetic", "csv"] = "none"
    generator: Literal["linear-regression", "two-class"] = "linear-regression"
    n: int = Field(100, ge=1)
    seed: int = 0
    noise: float = Field(0.3, ge=0)
    noise_var: float = Field(1.0, gt=0)
    covariate_corr: float = Field(0.0, ge=0, lt=1)
    path: Optional[str] = None
    classification: bool = False
    test_fraction: float = Field(0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def _path(self):
        if self.source == "csv" and not self.path:
            raise ValueError("csv source needs 'path'")
        return self


class PartitionConfig(_Strict):
    scheme: Literal["modulo", "random", "layer", "neuron", "full"] = "modulo"
    M: Optional[int] = Field(1, ge=1)
    seed: int = 0


class MaskConfig(_Strict):
    kind: Literal["categorical-uniform", "bernoulli-conditional", "bernoulli-plain",
                  "gaussian", "beta"] = "bernoulli-conditional"
    rho: float = 0.5
    mean: float = 0.5
    variance: float = 0.25
    alpha: float = 1.0
    beta: float = 1.0


class ScheduleConfig(_Strict):
    kind: Literal["constant", "polynomial-decay"] = "constant"
    eps0: float = Field(1e-3, gt=0)
    t0: float = Field(1000.0, gt=0)
    power: float = Field(0.55, ge=0)


class InitConfig(_Strict):
    mode: Literal["zeros", "prior-draw", "map-warmstart"] = "zeros"
    steps: int = Field(0, ge=0)
    lr: float = Field(1e-3, gt=0)


class SamplerConfig(_Strict):
    kind: Literal["sgld", "psgld", "sghmc"] = "sgld"
    variant: Literal["baseline", "structured", "dropout"] = "baseline"
    K: int = Field(4, ge=1)
    batch_size: Optional[int] = Field(None, ge=1)
    steps: int = Field(1000, ge=0)
    burn_in: int = Field(0, ge=0)
    thinning: int = Field(1, ge=1)
    capacity: Optional[int] = Field(20_000, ge=1)
    retention: Literal["window", "reservoir"] = "window"
    qhat_capacity: Optional[int] = Field(None, ge=1)
    friction: float = Field(0.1, ge=0)
    v_hat: float = Field(0.0, ge=0)
    beta: float = Field(0.99, gt=0, le=1)
    lam: float = Field(1e-5, ge=0)
    psgld_gamma: bool = False


class DiagnosticsConfig(_Strict):
    window_c: float = Field(5.0, gt=0)
    n_models: int = Field(100, ge=1)
    hist_bins: int = Field(20, ge=1)


class ExperimentConfig(_Strict):
    model: ModelConfig
    data: DataConfig = DataConfig()
    sampler: SamplerConfig = SamplerConfig()
    partition: PartitionConfig = PartitionConfig()
    mask: MaskConfig = MaskConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    init: InitConfig = InitConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    seed: int = 0

    @model_validator(mode="after")
    def _burn_in(self):
        if self.sampler.steps and self.sampler.burn_in >= self.sampler.steps:
            raise ValueError("need burn_in < steps")
        return self


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return ExperimentConfig.model_validate_json(text, strict=False)


def digest(obj) -> str:
    """Short stable hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def build_data(cfg: DataConfig, base: Path | None = None):
    """(train, test) datasets; test is the training set when no split is asked."""
    if cfg.source == "none":
        return None, None
    if cfg.source == "csv":
        path = Path(cfg.path)
        if base is not None and not path.is_absolute():
            path = base / path
        data = load_csv(path, classification=cfg.classification)
    elif cfg.generator == "linear-regression":
        data = make_linear_regression(n=cfg.n, noise_var=cfg.noise_var, seed=cfg.seed,
                                      covariate_corr=cfg.covariate_corr)
    else:
        data = make_two_class(n=cfg.n, seed=cfg.seed, noise=cfg.noise)
    if cfg.test_fraction > 0:
        return data.split(cfg.test_fraction, seed=cfg.seed)
    return data, data


def build_model(cfg: ModelConfig, data: Dataset | None) -> Model:
    if cfg.kind == "gaussian-target":
        return make_model(cfg.kind, precision=np.array(cfg.precision), mean=cfg.mean)
    if cfg.kind == "mlp":
        return make_model(cfg.kind, widths=tuple(cfg.widths), task=cfg.task,
                          noise_var=cfg.noise_var, prior_scale=cfg.prior_scale)
    dim = cfg.dim if cfg.dim is not None else (data.dim if data is not None else None)
    if dim is None:
        raise ValueError(f"{cfg.kind} needs 'dim' or a dataset")
    if cfg.kind == "linear-regression":
        return make_model(cfg.kind, dim=dim, bias=cfg.bias, noise_var=cfg.noise_var,
                          prior_scale=cfg.prior_scale)
    return make_model(cfg.kind, dim=dim, n_classes=cfg.n_classes, prior_scale=cfg.prior_scale)


def build_partition(cfg: PartitionConfig, model: Model) -> PartitionSpec:
    return make_partition(cfg.scheme, model, M=cfg.M, seed=cfg.seed)


def build_run(cfg: ExperimentConfig, base: Path | None = None):
    """Resolve an experiment into (RunConfig, test dataset)."""
    train, test = build_data(cfg.data, base)
    model = build_model(cfg.model, train)
    s = cfg.sampler
    theta0 = init_theta(model, cfg.seed, cfg.init.mode, cfg.init.steps, cfg.init.lr, train)
    run = RunConfig(
        model=model, data=train, sampler=s.kind, variant=s.variant,
        partition=build_partition(cfg.partition, model),
        mask=MaskDistribution(**cfg.mask.model_dump()), K=s.K,
        schedule=StepSchedule(**cfg.schedule.model_dump()),
        batch_size=s.batch_size, steps=s.steps, burn_in=s.burn_in, thinning=s.thinning,
        capacity=s.capacity, retention=s.retention, seed=cfg.seed, friction=s.friction,
        v_hat=s.v_hat, beta=s.beta, lam=s.lam, psgld_gamma=s.psgld_gamma, theta0=theta0,
        qhat_capacity=s.qhat_capacity,
    )
    run.validate()
    return run, test


# -- output records -----------------------------------------------------------

class MixingSummary(BaseModel):
    n: int
    mean_iac: Optional[float]
    mean_ess: Optional[float]
    excluded_constant: int
    unconverged_windows: int


class RunReportRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")
    sampler: str
    variant: str
    M: int
    K: int
    rho: Optional[float]
    steps_requested: int
    steps_completed: int
    energy_evals: int
    evals_per_step: float
    wall_clock: float
    wall_clock_per_step: float
    final_energy: Optional[float]
    diverged: bool
    divergence_step: Optional[int]
    divergence_message: Optional[str]
    burn_in: int
    backend: str
    sghmc_noise: str
    model_hash: str
    data_hash: str
    mixing: Optional[MixingSummary]
    ensemble_metric: Optional[float]
    ensemble_metric_name: Optional[Literal["accuracy", "mse"]]


class MixingRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: int
    burn_in: int
    window_c: float
    coordinates: list[int]
    iac: list[float]
    ess: list[float]
    ess_lag1: list[float]
    window: list[int]
    converged: list[bool]
    means: list[float]
    excluded_constant: list[int]
    mean_iac: Optional[float]
    mean_ess: Optional[float]
    warnings: int


class OracleBlock(BaseModel):
    members: list[int]
    mean: list[float]
    cov: list[list[float]]


class OracleRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")
    model_kind: str
    mu: list[float]
    sigma: list[list[float]]
    precision: list[list[float]]
    partition: dict
    blocks: list[OracleBlock]
    meanfield_means: list[float]
    meanfield_variances: list[float]
    marginal_variances: list[float]
    sweeps: int
    converged: bool


SCHEMAS = {
    "config.schema.json": ExperimentConfig,
    "report.schema.json": RunReportRecord,
    "mixing.schema.json": MixingRecord,
    "oracle.schema.json": OracleRecord,
}


def schema_documents() -> dict[str, str]:
    return {name: json.dumps(cls.model_json_schema(), indent=2, sort_keys=True) + "\n"
            for name, cls in SCHEMAS.items()}
