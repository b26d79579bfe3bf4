import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.config import Config
from src.models.params import Drift, DriftKind, ModelParams, make_drift
from src.sheq.errors import ConfigError
from src.sheq.field_sim import FieldGridSpec, Scheme

logger = logging.getLogger(__name__)


class ExperimentKind(str, Enum):
    CLT = "clt"
    RATE = "rate"
    ESTIMATOR = "estimator"
    INDEPENDENCE = "independence"
    SEMILINEAR = "semilinear"
    MOMENTS = "moments"


class Placement(str, Enum):
    EVENLY = "evenly"
    FIRST = "first"


class Simulator(str, Enum):
    EXACT = "exact"
    SCHEME = "scheme"


class DriftConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "zero"
    coefficient: float = 1.0

    @field_validator("name")
    @classmethod
    def known_drift(cls, value: str) -> str:
        registered = [k.value for k in DriftKind]
        if value not in registered:
            raise ValueError(f"unknown drift '{value}', expected one of {registered}")
        return value

    def build(self) -> Drift:
        return make_drift(self.name, self.coefficient)


class FieldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    half_width: float = Field(default=5.0, gt=0)
    cells: int = Field(default=1024, ge=2)
    steps_per_observation: int = Field(default=64, ge=1)
    x_obs: float = 0.0
    scheme: Scheme = Scheme.CRANK_NICOLSON

    def grid_spec(self, obs_N: int) -> FieldGridSpec:
        return FieldGridSpec(
            obs_N=obs_N,
            half_width=self.half_width,
            cells=self.cells,
            steps_per_unit=self.steps_per_observation * obs_N,
            x_obs=self.x_obs,
            scheme=self.scheme,
        )


class ExperimentConfig(BaseModel):
    """Declarative description of one Monte Carlo experiment (schema version 1)."""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    schema_version: Literal[1] = 1
    kind: ExperimentKind
    theta: float = Field(gt=0)
    n_values: list[int] = Field(min_length=1)
    replicates: int = Field(default=1000, ge=1)
    master_seed: int = Field(default_factory=lambda: Config.DEFAULT_SEED, ge=0, lt=2**64)
    gammas: list[float] = Field(default_factory=lambda: [0.25])
    placement: Placement = Placement.EVENLY
    simulator: Simulator = Simulator.EXACT
    drift: DriftConfig = Field(default_factory=DriftConfig)
    field: FieldConfig = Field(default_factory=FieldConfig)
    output: str | None = None
    workers: int | None = Field(default=None, ge=1)
    quantile_count: int = Field(default=1000, ge=100)
    t_points: list[float] = Field(default_factory=lambda: [-2.0, -1.0, 0.0, 1.0, 2.0])
    joint_dim: int = Field(default=1, ge=1, le=3)
    lipschitz_functions: int = Field(default=64, ge=1)
    dcor_bias_corrected: bool = True
    record_timing: bool = False
    max_n: int | None = Field(default=None, ge=1)

    @field_validator("n_values")
    @classmethod
    def n_at_least_two(cls, values: list[int]) -> list[int]:
        for N in values:
            if N < 2:
                raise ValueError(f"every N must be at least 2, got {N}")
        return values

    @field_validator("gammas")
    @classmethod
    def gamma_in_unit_interval(cls, values: list[float]) -> list[float]:
        for gamma in values:
            if not 0.0 <= gamma <= 1.0:
                raise ValueError(f"gamma must satisfy 0 <= gamma <= 1, got {gamma}")
        return values

    @model_validator(mode="after")
    def model_matches_kind(self) -> "ExperimentConfig":
        drift_is_zero = self.drift.build().is_zero
        if self.kind is ExperimentKind.MOMENTS and not drift_is_zero:
            raise ValueError("the moments experiment is exact for the linear model only (drift must be zero)")
        if not drift_is_zero and self.kind is not ExperimentKind.SEMILINEAR and self.simulator is Simulator.EXACT:
            raise ValueError("a nonzero drift needs simulator = 'scheme'")
        if self.kind is ExperimentKind.SEMILINEAR or self.simulator is Simulator.SCHEME:
            for N in self.n_values:
                self.field.grid_spec(N)
        return self

    @property
    def params(self) -> ModelParams:
        return ModelParams(theta=self.theta, drift=self.drift.build())

    @property
    def uses_scheme(self) -> bool:
        return self.kind is ExperimentKind.SEMILINEAR or self.simulator is Simulator.SCHEME


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _check_sampling_cap(config: ExperimentConfig):
    # moments never samples; pure scheme runs never factor a covariance
    if config.kind is ExperimentKind.MOMENTS:
        return
    if config.simulator is Simulator.SCHEME and config.kind is not ExperimentKind.SEMILINEAR:
        return
    cap = Config.MAX_N if config.max_n is None else config.max_n
    too_large = [N for N in config.n_values if N > cap]
    if too_large:
        raise ConfigError(
            f"n_values: N={too_large[0]} exceeds the exact-sampling cap {cap} (raise max_n or SHEQ_MAX_N)",
            field="n_values",
        )


def validate_config(raw: dict[str, Any]) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = _field_path(first)
        message = first["msg"].removeprefix("Value error, ")
        raise ConfigError(f"{field}: {message}", field=field) from e
    except ValueError as e:
        # grid-spec checks raise DomainError from inside the model validator
        raise ConfigError(str(e), field="field") from e
    _check_sampling_cap(config)
    return config


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Read a TOML experiment config and validate it.

    Overrides are merged into the raw mapping first, so command-line values go
    through the same validators as file values.
    """
    path = Path(path)
    try:
        with path.open("rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}", field="path") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}", field="path") from e

    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    config = validate_config(raw)
    logger.debug(
        "Experiment config loaded",
        extra={"path": str(path), "kind": config.kind.value, "n_values": config.n_values},
    )
    return config
