"""Experiment configuration: a YAML file validated against a pydantic schema."""

from __future__ import annotations

from dataclasses import asdict
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..bolfi import AcquisitionConfig
from ..dgp import DGPConfig
from ..errors import ConfigError
from ..gp import GPConfig
from ..simulators import SIMULATORS
from ..transport import SinkhornConfig

SURROGATES = ("gp", "lv-gp", "lv-2gp")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AcquisitionSettings(_Strict):
    eps_q: float = Field(0.3, gt=0, le=1)
    delta: float = Field(0.1, gt=0, lt=1)
    eta2: float | None = Field(None, ge=0)
    restarts: int = Field(10, ge=1)
    memory: int = Field(10, ge=1)
    max_iter: int = Field(50, ge=1)
    probes: int = Field(256, ge=1)
    fd_step: float = Field(1e-4, gt=0)
    noise_fraction: float = Field(0.05, gt=0)
    batch_size: int = Field(1, ge=1)

    def build(self):
        return AcquisitionConfig(**self.model_dump())


class DGPSettings(_Strict):
    num_inducing: int = Field(50, ge=1)
    num_iw_samples: int = Field(5, ge=1)
    num_pred_samples: int = Field(20, ge=1)
    adam_step: float = Field(0.005, gt=0)
    natgrad_step: float = Field(0.01, gt=0, le=1)
    init_noise: float = Field(0.01, gt=0)
    train_steps: int = Field(DGPConfig.train_steps, ge=1)
    refresh_steps: int = Field(DGPConfig.refresh_steps, ge=0)
    final_steps: int = Field(DGPConfig.final_steps, ge=0)

    def build(self, num_gp_layers):
        return DGPConfig(num_gp_layers=num_gp_layers, **self.model_dump())


class GPSettings(_Strict):
    lengthscale_fraction: float = Field(0.1, gt=0)
    variance_mean: float = Field(1.0, gt=0)
    bias_mean: float = Field(1.0, gt=0)
    noise_mean: float = Field(0.1, gt=0)
    prior_cv: float = Field(1.0, gt=0)
    restarts: int = Field(5, ge=1)
    max_evals: int = Field(50, ge=1)
    refit_every: int = Field(10, ge=1)

    def build(self):
        return GPConfig(**self.model_dump())


class SinkhornSettings(_Strict):
    epsilon: float | None = Field(None, gt=0)
    epsilon_fraction: float = Field(0.05, gt=0)
    max_iter: int = Field(5000, ge=1)
    tol: float = Field(1e-4, gt=0)

    def build(self):
        return SinkhornConfig(**self.model_dump())


class ReferenceSettings(_Strict):
    budget: int = Field(1_000_000, ge=1000)
    keep: float = Field(0.001, gt=0, le=1)
    seed: int = 0
    cache_dir: str = "reference_cache"


class ExperimentConfig(_Strict):
    simulator: str
    simulator_options: dict = Field(default_factory=dict)
    surrogates: list[Literal["gp", "lv-gp", "lv-2gp"]] = Field(default_factory=lambda: ["gp", "lv-2gp"])
    n_init: int = Field(100, ge=2)
    s_total: int = Field(200, ge=2)
    repetitions: int = Field(20, ge=1)
    base_seed: int = Field(0, ge=0)
    posterior_samples: int = Field(1000, ge=1)
    threshold: float | None = None
    workers: int = Field(1, ge=1)
    output_dir: str = "results"
    bootstrap_resamples: int = Field(10_000, ge=100)
    budget_sweep: list[int] | None = None  # total budgets; half of each is initial evidence
    acquisition: AcquisitionSettings = Field(default_factory=AcquisitionSettings)
    dgp: DGPSettings = Field(default_factory=DGPSettings)
    gp: GPSettings = Field(default_factory=GPSettings)
    sinkhorn: SinkhornSettings = Field(default_factory=SinkhornSettings)
    reference: ReferenceSettings = Field(default_factory=ReferenceSettings)

    @field_validator("simulator")
    @classmethod
    def _known_simulator(cls, v):
        if v.lower() not in SIMULATORS:
            raise ValueError(f"unknown simulator {v!r}; choose from {', '.join(SIMULATORS)}")
        return v.lower()

    @field_validator("surrogates")
    @classmethod
    def _distinct(cls, v):
        if not v:
            raise ValueError("at least one surrogate is required")
        if len(set(v)) != len(v):
            raise ValueError("surrogates must be distinct")
        return v

    @field_validator("budget_sweep")
    @classmethod
    def _sweep(cls, v):
        if v is not None and (not v or min(v) < 4 or len(set(v)) != len(v)):
            raise ValueError("budget_sweep needs distinct budgets of at least 4 calls")
        return v

    @model_validator(mode="after")
    def _budget(self):
        if self.n_init > self.s_total:
            raise ValueError("n_init must not exceed s_total")
        return self

    def sweep_configs(self):
        """``(budget, config)`` per swept budget, with ``n_init`` half of it."""
        return [(b, self.model_copy(update={"s_total": b, "n_init": b // 2, "budget_sweep": None}))
                for b in self.budget_sweep or ()]

    def dgp_config(self, kind):
        return self.dgp.build(num_gp_layers=1 if kind == "lv-gp" else 2)

    def effective(self):
        """Plain dict with every default filled in."""
        return self.model_dump(mode="json")

    def effective_yaml(self):
        return yaml.safe_dump(self.effective(), sort_keys=True)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(data)


def dataclass_defaults():
    """Library defaults, for documentation and drift checks."""
    return {
        "acquisition": asdict(AcquisitionConfig()),
        "dgp": asdict(DGPConfig()),
        "gp": asdict(GPConfig()),
        "sinkhorn": asdict(SinkhornConfig()),
    }
