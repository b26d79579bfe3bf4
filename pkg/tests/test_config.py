import json
import logging

import numpy as np
import pytest

from src.context_logger import setup_logging
from src.core.config import Config
from src.models.experiment_config import (
    ExperimentKind,
    Placement,
    Simulator,
    load_config,
    validate_config,
)
from src.models.params import DriftKind, ModelParams, TimeGrid, make_drift
from src.sheq.errors import ConfigError, DomainError
from src.sheq.field_sim import Scheme

MINIMAL = {"kind": "clt", "theta": 1.0, "n_values": [64, 128]}


def test_minimal_config_gets_defaults():
    config = validate_config(MINIMAL)
    assert config.kind is ExperimentKind.CLT
    assert config.master_seed == Config.DEFAULT_SEED
    assert config.placement is Placement.EVENLY
    assert config.simulator is Simulator.EXACT
    assert config.field.scheme is Scheme.CRANK_NICOLSON
    assert config.params.drift.is_zero
    assert not config.uses_scheme


@pytest.mark.parametrize(
    "patch,field,fragment",
    [
        ({"gammas": [0.25, 1.5]}, "gammas", "0 <= gamma <= 1"),
        ({"theta": 0.0}, "theta", "greater than 0"),
        ({"n_values": [1, 8]}, "n_values", "at least 2"),
        ({"bogus": 1}, "bogus", "Extra inputs"),
        ({"schema_version": 2}, "schema_version", ""),
        ({"quantile_count": 10}, "quantile_count", ""),
        ({"drift": {"name": "sine"}}, "drift.name", "unknown drift"),
    ],
)
def test_invalid_configs_name_the_field(patch, field, fragment):
    with pytest.raises(ConfigError) as excinfo:
        validate_config({**MINIMAL, **patch})
    assert excinfo.value.field == field
    assert fragment in str(excinfo.value)
    assert isinstance(excinfo.value, ValueError)


def test_kind_and_model_must_agree():
    with pytest.raises(ConfigError, match="linear model only"):
        validate_config({**MINIMAL, "kind": "moments", "drift": {"name": "cosine"}})
    with pytest.raises(ConfigError, match="simulator"):
        validate_config({**MINIMAL, "drift": {"name": "cosine"}})
    config = validate_config({**MINIMAL, "drift": {"name": "cosine"}, "simulator": "scheme"})
    assert config.uses_scheme


def test_field_grid_is_checked_for_scheme_runs():
    with pytest.raises(ConfigError):
        validate_config({**MINIMAL, "kind": "semilinear", "field": {"x_obs": 0.001}})


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('kind = "estimator"\ntheta = 1.0\nn_values = [64]\nreplicates = 200\n', encoding="utf-8")
    config = load_config(path, {"theta": 2.0, "n_values": [32, 64], "master_seed": None})
    assert config.theta == 2.0
    assert config.n_values == [32, 64]
    assert config.replicates == 200
    assert config.master_seed == Config.DEFAULT_SEED


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_config(tmp_path / "missing.toml")
    assert excinfo.value.field == "path"
    broken = tmp_path / "broken.toml"
    broken.write_text("kind = \n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_shipped_configs_validate():
    from pathlib import Path

    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert {p.stem for p in configs} == {k.value for k in ExperimentKind}
    for path in configs:
        assert load_config(path).kind.value == path.stem


def test_settings_validation(monkeypatch):
    assert Config.validate()
    monkeypatch.setattr(Config, "WORKERS", 0)
    with pytest.raises(ValueError, match="SHEQ_WORKERS"):
        Config.validate()


def test_file_logging_is_json_with_extras(tmp_path):
    setup_logging(log_level="INFO", log_dir=tmp_path)
    logging.getLogger("src.sheq.test").info("solver step", extra={"N": 64, "theta": 1.0})
    logging.getLogger("thirdparty").info("ignored")
    for handler in logging.getLogger().handlers:
        handler.flush()
    lines = (tmp_path / "app.log").read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["message"] == "solver step"
    assert record["N"] == 64
    assert record["level"] == "INFO"
    assert (tmp_path / "error.log").exists()


def test_logging_without_files(tmp_path):
    root = setup_logging(log_level="DEBUG", log_dir=None)
    assert len(root.handlers) == 1


def test_drift_registry():
    assert make_drift("linear", -2.0).lipschitz == 2.0
    assert make_drift("cosine").lipschitz == 1.0
    assert make_drift("linear", 0.0).is_zero
    assert make_drift("bounded_rational").kind is DriftKind.BOUNDED_RATIONAL
    assert make_drift("linear", 3.0).label() == "linear(3)"
    with pytest.raises(DomainError, match="registered"):
        make_drift("sine")


def test_model_params_and_grid_validation():
    with pytest.raises(DomainError):
        ModelParams(theta=0.0)
    with pytest.raises(DomainError):
        TimeGrid(0)
    grid = TimeGrid(4)
    assert grid.spacing == 0.25
    assert grid.times[-1] == 1.0


def test_sampling_cap_is_a_config_error(monkeypatch):
    with pytest.raises(ConfigError) as excinfo:
        validate_config({**MINIMAL, "n_values": [64, 128], "max_n": 100})
    assert excinfo.value.field == "n_values"
    assert "128" in str(excinfo.value)

    monkeypatch.setattr(Config, "MAX_N", 100)
    with pytest.raises(ConfigError):
        validate_config(MINIMAL)
    # exact moments and scheme-only runs never factor the covariance
    assert validate_config({**MINIMAL, "kind": "moments"}).n_values == [64, 128]
    assert validate_config({**MINIMAL, "simulator": "scheme", "field": {"cells": 64, "half_width": 4.0}}).uses_scheme


@pytest.mark.parametrize("kind", list(DriftKind))
def test_registered_drifts_respect_their_lipschitz_constant(kind, rng):
    drift = make_drift(kind.value, -1.7)
    x = 5.0 * rng.standard_normal(2000)
    y = x + rng.normal(0.0, 0.5, size=2000)
    assert np.all(np.abs(drift(x) - drift(y)) <= drift.lipschitz * np.abs(x - y) * (1.0 + 1e-12) + 1e-12)
