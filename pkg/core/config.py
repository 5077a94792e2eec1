"""
Configuration models and process settings.

Experiment configuration is a tree of pydantic models loaded from JSON and
overridden by flat ``--key value`` flags. Process-level settings (log level,
threads, cache location) come from the environment via pydantic-settings.
"""

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import UsageError

logger = logging.getLogger(__name__)


class AppSettings(BaseSettings):
    """Process settings read from ``COGTRAJ_*`` environment variables or ``.env``."""

    model_config = SettingsConfigDict(env_prefix="COGTRAJ_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    threads: int = Field(default=1, ge=1)
    cache_dir: Path = Path(".cogtraj_cache")
    cache_enabled: bool = True


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SynthConfig(_Section):
    """Synthetic multi-lane highway generator settings."""

    num_lanes: int = Field(default=3, ge=1)
    lane_width: float = Field(default=3.75, gt=0)
    num_vehicles: int = Field(default=36, ge=1)
    duration_s: float = Field(default=60.0, gt=0)
    dt: float = Field(default=0.1, gt=0)
    road_length: float = Field(default=800.0, gt=0)
    vehicle_length: float = Field(default=4.5, gt=0)
    min_gap: float = Field(default=2.0, gt=0)
    desired_speed_min: float = Field(default=22.0, gt=0)
    desired_speed_max: float = Field(default=32.0, gt=0)
    time_headway: float = Field(default=1.5, gt=0)
    max_accel: float = Field(default=1.0, gt=0)
    comfort_decel: float = Field(default=2.0, gt=0)
    accel_exponent: float = Field(default=4.0, gt=0)
    lane_change_rate: float = Field(default=0.03, ge=0, description="Expected lane changes per vehicle-second")
    lane_change_duration: float = Field(default=4.0, gt=0)
    lane_change_gap: float = Field(default=8.0, ge=0, description="Extra clearance required in the target lane")

    @model_validator(mode="after")
    def _speed_range(self):
        if self.desired_speed_min > self.desired_speed_max:
            raise ValueError("desired_speed_min must not exceed desired_speed_max")
        return self


class WindowConfig(_Section):
    """Prediction-window construction and labeling."""

    dt: float = Field(default=0.2, gt=0)
    t_h: int = Field(default=15, ge=1)
    t_f: int = Field(default=25, ge=1)
    radius: float = Field(default=30.0, gt=0)
    n_max: int = Field(default=12, ge=0)
    stride: int = Field(default=1, ge=1)
    unit: str = "meters"
    source_dt: float = Field(default=0.1, gt=0)
    left_lane_decreasing: bool = True
    lateral_threshold: float = Field(default=1.5, gt=0)
    speed_band: float = Field(default=0.05, ge=0)

    @field_validator("unit")
    @classmethod
    def _known_unit(cls, value: str) -> str:
        if value not in ("meters", "feet"):
            raise ValueError(f"unit must be 'meters' or 'feet', got {value!r}")
        return value


class FeatureConfig(_Section):
    """Safety-index and behavior-graph parameters."""

    ttc_star: float = Field(default=3.0, gt=0)
    tau: float = Field(default=0.1, gt=0)
    ttc_sentinel: float = Field(default=1e4, gt=0)
    risk_floor: float = Field(default=1e-8, gt=0)
    graph_radius: float = Field(default=30.0, gt=0)
    k_max: int = Field(default=10, ge=1)
    katz_beta: float = Field(default=0.5, gt=0, lt=1)
    katz_alpha_scale: float = Field(default=0.9, gt=0, lt=1)
    power_iteration_tol: float = Field(default=1e-10, gt=0)
    power_iteration_max_iter: int = Field(default=500, ge=1)


class ModelConfig(_Section):
    """Network widths and structural switches."""

    d_model: int = Field(default=64, ge=1)
    heads: int = Field(default=4, ge=1)
    lambda_a: float = Field(default=1.0, gt=0)
    stream_width: int = Field(default=32, ge=1)
    d_z: int = Field(default=64, ge=2)
    leanformer_heads: int = Field(default=4, ge=1)
    rank: int = Field(default=8, ge=1)
    decoder_hidden: int = Field(default=64, ge=1)
    group_norm_groups: int = Field(default=4, ge=1)
    projection_seed: int = 7
    causal_attention: bool = True
    residual_scale: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _divisibility(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.decoder_hidden % self.group_norm_groups:
            raise ValueError(
                f"decoder_hidden={self.decoder_hidden} not divisible by group_norm_groups={self.group_norm_groups}"
            )
        if self.d_z % 2:
            raise ValueError("d_z must be even (skip connection splits it between Q and V)")
        return self


class TrainConfig(_Section):
    """Optimization, loss weighting and ablation switches."""

    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=20, ge=1)
    lr_max: float = Field(default=1e-3, ge=0)
    lr_min: float = Field(default=1e-5, ge=0)
    restart_period: int = Field(default=5, ge=1)
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    w_rmse: float = Field(default=1.0, ge=0)
    w_nll: float = Field(default=1.0, ge=0)
    w_maneuver: float = Field(default=1.0, ge=0)
    learned_loss_weights: bool = False
    heldout_fraction: float = Field(default=0.2, ge=0, lt=1)
    train_fraction: float = Field(default=1.0, gt=0, le=1)
    best_of_modes: bool = False
    use_dbp: bool = True
    use_psam: bool = True
    use_relative_priority: bool = True
    use_interaction: bool = True
    use_multimodal: bool = True

    @model_validator(mode="after")
    def _lr_bounds(self):
        # lr_max == lr_min == 0 is allowed (frozen run)
        if self.lr_min > self.lr_max or (self.lr_max > 0 and self.lr_min == self.lr_max):
            raise ValueError(f"lr_min ({self.lr_min}) must be below lr_max ({self.lr_max})")
        return self


class ExperimentConfig(_Section):
    """Root configuration document."""

    synth: SynthConfig = Field(default_factory=SynthConfig)
    windows: WindowConfig = Field(default_factory=WindowConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


SECTIONS = ("synth", "windows", "features", "model", "train")


def _coerce(raw: str, current: Any) -> Any:
    """Parse a flag value against the type of the field it overrides."""
    if isinstance(current, bool):
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise UsageError(f"expected a boolean, got {raw!r}")
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(document: dict[str, Any], overrides: dict[str, str]) -> dict[str, Any]:
    """
    Apply flat ``key=value`` overrides to a config document.

    A key is either ``section.field`` or a bare field name that exists in exactly
    one section.
    """
    defaults = ExperimentConfig().model_dump()
    merged = {section: dict(document.get(section, {})) for section in SECTIONS}
    for key, raw in overrides.items():
        key = key.replace("-", "_")
        if "." in key:
            section, field = key.split(".", 1)
            if section not in SECTIONS or field not in defaults[section]:
                raise UsageError(f"unknown config key: {key}")
        else:
            owners = [s for s in SECTIONS if key in defaults[s]]
            if not owners:
                raise UsageError(f"unknown config key: {key}")
            if len(owners) > 1:
                raise UsageError(f"ambiguous config key {key!r}; use one of {[f'{s}.{key}' for s in owners]}")
            section, field = owners[0], key
        current = merged[section].get(field, defaults[section][field])
        merged[section][field] = _coerce(raw, current)
    return merged


def load_experiment_config(
    path: str | Path | None = None, overrides: dict[str, str] | None = None, seed: int | None = None
) -> ExperimentConfig:
    """
    Build the effective experiment config.

    Args:
        path: Optional JSON config document
        overrides: Flat flag overrides applied after the file
        seed: Optional global seed (sets train.seed)

    Returns:
        Validated ExperimentConfig
    """
    document: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}") from e
        unknown = set(document) - set(SECTIONS)
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")

    document = apply_overrides(document, overrides or {})
    if seed is not None:
        document["train"]["seed"] = seed

    try:
        config = ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}") from e
    logger.debug(f"[CONFIG] Effective config: {config.model_dump()}")
    return config


settings: AppSettings | None = None


def init_settings() -> AppSettings:
    """Read process settings. Call once at startup."""
    global settings
    settings = AppSettings()
    logger.debug(f"[OK] Settings loaded (cache_dir={settings.cache_dir}, threads={settings.threads})")
    return settings


def get_settings() -> AppSettings:
    """Get the process settings, reading them on first use."""
    if settings is None:
        return init_settings()
    return settings
