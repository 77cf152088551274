import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from housing_demand.arima import ArimaSpec
from housing_demand.config import (
    DEFAULT_ARIMAX_SPEC, DEFAULT_MIN_TRAIN, DEFAULT_UNIVARIATE_SPEC, RunConfig, echo_path, load_config,
    write_config_echo,
)


def test_flags_override_the_file(tmp_path):
    """Tests that explicit flags win over the config file and untouched keys survive the merge."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"horizon": 8, "synth": {"seed": 3, "n_weeks": 60}}))
    config = load_config(path, {"horizon": 12, "synth": {"seed": 9}})

    assert config.horizon == 12
    assert config.synth.seed == 9
    assert config.synth.n_weeks == 60


def test_defaults():
    """Tests the defaults of an empty configuration."""
    config = load_config()

    assert config.protocol == "validation"
    assert config.weights == (0.15, 0.05, 0.80)
    assert len(config.resolved_lag_spec().column_names()) == 35
    assert config.arima_spec() is None
    assert config.min_train == 104
    assert config.exog


@pytest.mark.parametrize("payload", [
    {"colour": "blue"},
    {"synth": {"colour": "blue"}},
    {"spec": "1,1"},
    {"threads": 0},
    {"weights": [0.5, 0.5]},
])
def test_invalid_settings(tmp_path, payload):
    """Tests that unknown keys and out-of-range values are rejected."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ValidationError):
        load_config(path)


def test_config_must_be_an_object(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        load_config(path)


def test_echo_sits_beside_the_output(tmp_path):
    assert echo_path(Path("out/forecast.csv")) == Path("out/forecast.csv.config.json")
    assert echo_path(Path("out/report")) == Path("out/report.config.json")

    target = write_config_echo(RunConfig(seed=5), tmp_path / "report")
    assert json.loads(target.read_text())["seed"] == 5


def test_long_term_model_orders():
    """Tests the default seasonal orders of the univariate and lagged-SI models."""
    assert ArimaSpec.parse(DEFAULT_UNIVARIATE_SPEC) == ArimaSpec(p=0, d=1, q=3, P=0, D=1, Q=0, s=52)
    assert ArimaSpec.parse(DEFAULT_ARIMAX_SPEC) == ArimaSpec(p=3, d=1, q=1, P=0, D=1, Q=0, s=52)
    assert DEFAULT_MIN_TRAIN == 2 * 52
