"""
Configuration management for the car-following pipeline.

This module provides centralized configuration for the cfpp package using
a singleton pattern. Settings come from one INI file whose sections map to
the pydantic section models below; command-line flags override file
values.
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cfpp.errors import ConfigError
from cfpp.models import ExtractionCriteria
from cfpp.utils import stable_hash


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

Range = Tuple[float, float]


def _ordered(name: str, value: Range) -> None:
    if not value[0] < value[1]:
        raise ValueError(f"{name} must be an increasing (low, high) pair")


class TrainingConfig(BaseModel):
    """Hyperparameters of the adversarial reward learning loop."""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(1500, ge=0, description="Training epochs per FV condition")
    transitions_per_epoch: int = Field(2048, ge=1, description="Policy transitions collected per epoch")
    disc_steps: int = Field(10, ge=0, description="Discriminator minibatch steps per epoch")
    disc_batch_size: int = Field(256, ge=1)
    ppo_epochs: int = Field(10, ge=0, description="Passes over each PPO batch")
    minibatch_size: int = Field(256, ge=1)
    gamma: float = Field(0.99, gt=0.0, le=1.0, description="Discount")
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0)
    clip_ratio: float = Field(0.2, gt=0.0, lt=1.0)
    policy_lr: float = Field(3e-4, gt=0.0)
    value_lr: float = Field(3e-4, gt=0.0)
    disc_lr: float = Field(3e-4, gt=0.0)
    ent_coef: float = Field(0.0, ge=0.0)
    hidden: Tuple[int, ...] = Field((64, 64), description="Hidden layer widths of every net")
    init_log_std: float = Field(0.0, description="Initial log standard deviation of the policy")
    action_low: float = Field(-6.0, description="Lower acceleration bound (m/s^2)")
    action_high: float = Field(4.0, description="Upper acceleration bound (m/s^2)")
    dy_range: Range = Field((0.0, 100.0), description="Spacing normalization range (m)")
    dv_range: Range = Field((-10.0, 10.0), description="Relative speed normalization range (m/s)")
    ve_range: Range = Field((0.0, 40.0), description="Ego speed normalization range (m/s)")
    loss_floor: float = Field(1e-6, gt=0.0, description="Floor of the relative speed error")
    collision_penalty: float = Field(1000.0, ge=0.0)
    holdout_fraction: float = Field(0.2, ge=0.0, lt=1.0, description="Expert episodes kept for evaluation")
    max_episode_steps: Optional[int] = Field(None, ge=1, description="Cap on rollout length")
    log_every: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "TrainingConfig":
        if not self.action_low < 0.0 < self.action_high:
            raise ValueError("action bounds must satisfy action_low < 0 < action_high")
        if any(width < 1 for width in self.hidden):
            raise ValueError("hidden widths must be positive")
        for name in ("dy_range", "dv_range", "ve_range"):
            _ordered(name, getattr(self, name))
        return self


class RewardMapConfig(BaseModel):
    """Grid over (relative speed, spacing) at which the learned reward is read."""

    model_config = ConfigDict(frozen=True)

    fixed_speeds: Tuple[float, ...] = Field((4.3, 7.4, 11.0, 20.0), description="LV speeds (m/s)")
    bins: int = Field(10, ge=2)
    dy_range: Range = Field((0.0, 100.0))
    dv_range: Range = Field((-10.0, 10.0))

    @model_validator(mode="after")
    def _check(self) -> "RewardMapConfig":
        if not self.fixed_speeds:
            raise ValueError("fixed_speeds must not be empty")
        _ordered("dy_range", self.dy_range)
        _ordered("dv_range", self.dv_range)
        return self


class DensityConfig(BaseModel):
    """Binning of the LV-speed density exports."""

    model_config = ConfigDict(frozen=True)

    lv_speed_bins: int = Field(20, ge=1)
    lv_speed_range: Range = Field((0.0, 40.0))
    spacing_bins: int = Field(20, ge=1)
    spacing_range: Range = Field((0.0, 100.0))
    accel_bins: int = Field(20, ge=1)
    accel_range: Range = Field((-4.0, 4.0))
    rel_speed_bins: int = Field(20, ge=1)
    rel_speed_range: Range = Field((-10.0, 10.0))

    @model_validator(mode="after")
    def _check(self) -> "DensityConfig":
        for name in ("lv_speed_range", "spacing_range", "accel_range", "rel_speed_range"):
            _ordered(name, getattr(self, name))
        return self


class FixtureConfig(BaseModel):
    """Synthetic highD-format recordings with scripted drivers."""

    model_config = ConfigDict(frozen=True)

    n_recordings: int = Field(2, ge=1)
    platoons_per_condition: int = Field(4, ge=1, description="Platoons per FV condition per recording")
    duration_s: float = Field(20.0, gt=0.0, description="Length of each platoon's trajectory (s)")
    frame_rate_hz: float = Field(25.0, gt=0.0)
    lv_speed_min: float = Field(15.0, gt=0.0, description="Lowest base LV speed (m/s)")
    lv_speed_max: float = Field(30.0, gt=0.0, description="Highest base LV speed (m/s)")
    lv_speed_amplitude: float = Field(2.0, ge=0.0, description="Peak LV speed fluctuation (m/s)")
    pair_jitter: float = Field(0.2, ge=0.0, description="LV speed offset between paired platoons (m/s)")
    ego_gap_short: float = Field(1.0, gt=0.0, description="Ego time gap when tailgated (s)")
    ego_gap_long: float = Field(2.5, gt=0.0, description="Ego time gap when gapped (s)")
    ego_gap_neither: float = Field(1.75, gt=0.0, description="Ego time gap otherwise (s)")
    fv_gap_tailgated: float = Field(0.8, gt=0.0)
    fv_gap_gapped: float = Field(3.5, gt=0.0)
    fv_gap_neither: float = Field(2.0, gt=0.0)
    k_gap: float = Field(0.5, gt=0.0, description="Spacing-error gain of the scripted controller (1/s^2)")
    k_speed: float = Field(0.6, ge=0.0, description="Relative-speed gain of the scripted controller (1/s)")

    @model_validator(mode="after")
    def _check(self) -> "FixtureConfig":
        if not self.lv_speed_min <= self.lv_speed_max:
            raise ValueError("lv_speed_min must not exceed lv_speed_max")
        return self


# INI section name -> (attribute on PipelineConfig, model)
SECTION_MODELS: Dict[str, Tuple[str, Type[BaseModel]]] = {
    "extraction": ("extraction", ExtractionCriteria),
    "training": ("training", TrainingConfig),
    "reward_map": ("reward_map", RewardMapConfig),
    "density": ("density", DensityConfig),
    "fixtures": ("fixtures", FixtureConfig),
}


class PipelineConfig:
    """Configuration for a pipeline run.

    This class holds every setting the stages need. It validates
    parameters on initialization so a bad configuration fails before any
    stage starts.

    Example:
        >>> from cfpp import PipelineConfig, initialize
        >>> config = PipelineConfig(seed=7, data_dir="fixtures", output_dir="out")
        >>> initialize(config)
    """

    def __init__(
        self,
        seed: int,
        data_dir: PathLike = "data",
        recording_ids: Optional[List[int]] = None,
        output_dir: PathLike = "out",
        extraction: Optional[ExtractionCriteria] = None,
        max_normalized_distance: float = 1.0,
        training: Optional[TrainingConfig] = None,
        reward_map: Optional[RewardMapConfig] = None,
        density: Optional[DensityConfig] = None,
        fixtures: Optional[FixtureConfig] = None,
        max_workers: int = 1,
    ):
        """
        Initialize pipeline configuration.

        Args:
            seed: Master seed; every random draw derives from it
            data_dir: Directory holding highD-format recordings
            recording_ids: Recordings to load (default: every recording found)
            output_dir: Directory stage outputs are written to
            extraction: Car-following criteria (default: ExtractionCriteria())
            max_normalized_distance: DTW pairing threshold in m/s (default: 1.0)
            training: Reward learning hyperparameters
            reward_map: Reward grid settings
            density: Density export binning
            fixtures: Synthetic recording settings
            max_workers: Workers for loading and DTW (default: 1)
        """
        self.seed = seed
        self.data_dir = Path(data_dir)
        self.recording_ids = list(recording_ids) if recording_ids is not None else None
        self.output_dir = Path(output_dir)
        self.extraction = extraction or ExtractionCriteria()
        self.max_normalized_distance = max_normalized_distance
        self.training = training or TrainingConfig()
        self.reward_map = reward_map or RewardMapConfig()
        self.density = density or DensityConfig()
        self.fixtures = fixtures or FixtureConfig()
        self.max_workers = max_workers

        # Validate configuration on initialization
        self.validate()

    def validate(self) -> None:
        """
        Validate configuration parameters.

        Raises:
            ConfigError: If any configuration parameter is invalid
        """
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("pipeline.seed must be an integer")
        if self.seed < 0:
            raise ConfigError("pipeline.seed must be non-negative")

        if not isinstance(self.max_workers, int) or self.max_workers < 1:
            raise ConfigError("pipeline.max_workers must be a positive integer")

        if not isinstance(self.max_normalized_distance, (int, float)):
            raise ConfigError("pairing.max_normalized_distance must be a number")
        if self.max_normalized_distance <= 0:
            raise ConfigError("pairing.max_normalized_distance must be positive")

        if self.recording_ids is not None:
            if not self.recording_ids:
                raise ConfigError("input.recording_ids must not be empty when given")
            if any(not isinstance(rid, int) or rid < 0 for rid in self.recording_ids):
                raise ConfigError("input.recording_ids must be non-negative integers")

        if not str(self.output_dir).strip():
            raise ConfigError("output.dir must be a non-empty path")

    def settings(self) -> Dict[str, Any]:
        """Every setting except the output directory, as plain JSON types."""
        return {
            "seed": self.seed,
            "data_dir": str(self.data_dir),
            "recording_ids": self.recording_ids,
            "max_workers": self.max_workers,
            "max_normalized_distance": self.max_normalized_distance,
            "extraction": self.extraction.model_dump(mode="json"),
            "training": self.training.model_dump(mode="json"),
            "reward_map": self.reward_map.model_dump(mode="json"),
            "density": self.density.model_dump(mode="json"),
            "fixtures": self.fixtures.model_dump(mode="json"),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical settings; identical runs share it."""
        return stable_hash(self.settings())

    def replace(self, **changes: Any) -> "PipelineConfig":
        """Copy with some constructor arguments changed (re-validated)."""
        current = {
            "seed": self.seed,
            "data_dir": self.data_dir,
            "recording_ids": self.recording_ids,
            "output_dir": self.output_dir,
            "extraction": self.extraction,
            "max_normalized_distance": self.max_normalized_distance,
            "training": self.training,
            "reward_map": self.reward_map,
            "density": self.density,
            "fixtures": self.fixtures,
            "max_workers": self.max_workers,
        }
        current.update(changes)
        return PipelineConfig(**current)


def _split(raw: str) -> Any:
    raw = raw.strip()
    if "," in raw:
        return [part.strip() for part in raw.split(",") if part.strip()]
    return raw


def _section_model(section: str, values: Dict[str, str]) -> BaseModel:
    _, model = SECTION_MODELS[section]
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: unknown setting")
    parsed = {key: _split(value) for key, value in values.items()}
    # single-element tuples are written without a comma
    for key, value in parsed.items():
        annotation = str(model.model_fields[key].annotation)
        if "Tuple" in annotation and not isinstance(value, list):
            parsed[key] = [value]
    try:
        return model(**parsed)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "?"
        raise ConfigError(f"{section}.{field}: {first['msg']}") from e


def load_config(path: Optional[PathLike] = None, **overrides: Any) -> PipelineConfig:
    """
    Build a PipelineConfig from an INI file plus keyword overrides.

    Args:
        path: INI file (optional when every required value is overridden)
        **overrides: Constructor arguments that win over file values;
            ``None`` values are ignored

    Returns:
        Validated PipelineConfig

    Raises:
        ConfigError: If the file cannot be parsed, names an unknown section
            or setting, a value fails validation, or no seed is given

    Example:
        >>> config = load_config("cfpp.ini", seed=11, output_dir="runs/11")
    """
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e

    kwargs: Dict[str, Any] = {}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section in SECTION_MODELS:
            attr, _ = SECTION_MODELS[section]
            kwargs[attr] = _section_model(section, values)
        elif section == "pipeline":
            for key, value in values.items():
                if key not in ("seed", "max_workers"):
                    raise ConfigError(f"pipeline.{key}: unknown setting")
                try:
                    kwargs[key] = int(value)
                except ValueError:
                    raise ConfigError(f"pipeline.{key}: expected an integer, got '{value}'")
        elif section == "input":
            for key, value in values.items():
                if key == "data_dir":
                    kwargs["data_dir"] = value.strip()
                elif key == "recording_ids":
                    try:
                        kwargs["recording_ids"] = [int(v) for v in str(value).split(",") if v.strip()]
                    except ValueError:
                        raise ConfigError(f"input.recording_ids: expected integers, got '{value}'")
                else:
                    raise ConfigError(f"input.{key}: unknown setting")
        elif section == "pairing":
            for key, value in values.items():
                if key != "max_normalized_distance":
                    raise ConfigError(f"pairing.{key}: unknown setting")
                try:
                    kwargs[key] = float(value)
                except ValueError:
                    raise ConfigError(f"pairing.{key}: expected a number, got '{value}'")
        elif section == "output":
            for key, value in values.items():
                if key != "dir":
                    raise ConfigError(f"output.{key}: unknown setting")
                kwargs["output_dir"] = value.strip()
        else:
            raise ConfigError(f"unknown section [{section}]")

    kwargs.update({key: value for key, value in overrides.items() if value is not None})
    if "seed" not in kwargs:
        raise ConfigError("pipeline.seed is required")
    config = PipelineConfig(**kwargs)
    logger.debug(f"Loaded configuration {config.config_hash()[:12]} (seed {config.seed})")
    return config


# Global configuration instance
_config: Optional[PipelineConfig] = None


def initialize(config: PipelineConfig) -> None:
    """
    Make ``config`` the process-wide configuration.

    Args:
        config: PipelineConfig instance with validated configuration
    """
    global _config
    _config = config


def get_config() -> PipelineConfig:
    """
    Get the current configuration.

    Returns:
        Current PipelineConfig instance

    Raises:
        RuntimeError: If configuration has not been initialized

    Example:
        >>> from cfpp import get_config
        >>> get_config().seed
        7
    """
    if _config is None:
        raise RuntimeError(
            "Configuration not initialized. Call initialize() with PipelineConfig first."
        )
    return _config
