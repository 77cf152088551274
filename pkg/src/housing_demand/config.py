"""
Run configuration shared by every CLI command.

Values come from an optional JSON file and are overridden by the flags the
user passed explicitly. Unknown keys are rejected.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .arima import DEFAULT_LEVEL, ArimaSpec, parse_grid
from .ensemble import DEFAULT_GRID_STEP, DEFAULT_WEIGHTS
from .evaluation import DEFAULT_TRAIN_FRACTION
from .harmonic import DEFAULT_K_MAX
from .io_utils import read_json, write_json
from .synth import SynthParams
from .tsa import DEFAULT_ITERATIONS, DEFAULT_PEAK_WINDOW, LagSpec, arimax_lag_spec, lasso_lag_spec, short_term_lag_spec

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 20
DEFAULT_MIN_TRAIN = 104
DEFAULT_UNIVARIATE_SPEC = "0,1,3:0,1,0:52"
DEFAULT_ARIMAX_SPEC = "3,1,1:0,1,0:52"

LAG_PRESETS = {
    "short-term": short_term_lag_spec,
    "lasso": lasso_lag_spec,
    "arimax": arimax_lag_spec,
}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    seed: int = 0
    threads: int = Field(1, ge=1)

    synth: SynthParams = Field(default_factory=SynthParams)

    lag_preset: Literal["short-term", "lasso", "arimax"] = "lasso"
    lag_spec: Optional[LagSpec] = None
    max_lag: int = Field(20, ge=0)

    iterations: int = Field(DEFAULT_ITERATIONS, ge=1, le=10)
    peak_window: int = Field(DEFAULT_PEAK_WINDOW, ge=1)
    series: Literal["showings", "sold", "on_market", "hdi", "si"] = "showings"
    pair: Tuple[str, str] = ("showings", "sold")

    kind: Literal["univariate", "arimax", "harmonic"] = "univariate"
    spec: Optional[str] = None
    grid: Optional[str] = None
    target: Literal["identity", "hdi_sqrt"] = "hdi_sqrt"
    k_max: int = Field(DEFAULT_K_MAX, ge=1)
    exog: bool = True  # harmonic regression on lagged SI; false fits trend and Fourier terms only
    fill: Literal["persistence", "model"] = "model"
    horizon: int = Field(DEFAULT_HORIZON, ge=1)
    level: float = Field(DEFAULT_LEVEL, gt=0, lt=100)
    min_train: int = Field(DEFAULT_MIN_TRAIN, ge=1)

    train_fraction: float = Field(DEFAULT_TRAIN_FRACTION, gt=0, lt=1)
    split: Literal["random", "chronological"] = "random"
    folds: int = Field(10, ge=2)

    criterion: Literal["aic", "pvalue", "none"] = "aic"
    alpha: float = Field(0.05, gt=0, lt=1)

    lasso_mode: Literal["lar", "lasso"] = "lasso"
    lam: Optional[float] = Field(None, ge=0)

    protocol: Literal["fixed", "validation", "holdout"] = "validation"
    weights: Tuple[float, float, float] = DEFAULT_WEIGHTS
    grid_step: float = Field(DEFAULT_GRID_STEP, gt=0, le=1)
    max_depth: Optional[int] = Field(6, ge=1)
    min_leaf: int = Field(5, ge=1)
    hidden: int = Field(8, ge=1)
    epochs: int = Field(2000, ge=0)
    learn_rate: float = Field(0.01, gt=0)

    @field_validator("spec")
    @classmethod
    def _parsable_spec(cls, text: Optional[str]):
        if text is not None:
            try:
                ArimaSpec.parse(text)
            except ValueError as e:
                raise ValueError(str(e))
        return text

    @field_validator("grid")
    @classmethod
    def _parsable_grid(cls, text: Optional[str]):
        if text is None:
            return text
        try:
            specs = parse_grid(text)
        except ValueError as e:
            raise ValueError(str(e))
        if not specs:
            raise ValueError("grid must name at least one spec")
        return text

    def resolved_lag_spec(self) -> LagSpec:
        """The explicit lag spec, else the named preset."""
        return self.lag_spec if self.lag_spec is not None else LAG_PRESETS[self.lag_preset]()

    def arima_spec(self) -> Optional[ArimaSpec]:
        return None if self.spec is None else ArimaSpec.parse(self.spec)


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Builds the effective configuration.

    Raises:
        pydantic.ValidationError: On unknown keys or invalid values.
        OSError: If the config file cannot be read.
    """
    payload = {} if path is None else read_json(path)
    if not isinstance(payload, dict):
        raise ValueError(f"Invalid config file {path}: expected a JSON object.")
    config = RunConfig.model_validate(_merge(payload, overrides or {}))
    logger.debug("Effective config: %s", config.model_dump(mode="json"))
    return config


def echo_path(out: Path) -> Path:
    """`<out>.config.json` beside the primary output."""
    out = Path(out)
    return out.with_name(out.name + ".config.json")


def write_config_echo(config: RunConfig, out: Path) -> Path:
    target = echo_path(out)
    write_json(target, config.model_dump(mode="json"))
    return target
