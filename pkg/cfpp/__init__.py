"""
cfpp: car-following pressure pipeline

Extracts tailgated and gapped car-following segments from highD-format
trajectories, pairs them by lead-vehicle speed similarity, compares
driving-behavior metrics, and recovers the ego driver's reward with
adversarial inverse reinforcement learning.
"""

from cfpp.errors import (
    CFPPError,
    ConfigError,
    StageDependencyError,
    DataIntegrityError,
    SchemaError,
    IntegrityError,
    DirectionAmbiguityError,
    SeriesRangeError,
    DomainError,
    ShapeError,
    CacheUsageError,
    TrainingDivergenceError,
)
from cfpp.models import (
    RecordingMeta,
    TrackFrame,
    Track,
    RecordingBundle,
    SegmentLabel,
    ExtractionCriteria,
    CFSegment,
    DTWResult,
    SegmentPair,
    FluctuationMetrics,
    SafetyMetrics,
    PairedTestResult,
    PopulationStats,
    ComparisonRow,
    ComparisonTable,
    CFState,
    Episode,
    Transition,
    EpochRecord,
    TrainReport,
    Grid,
    TrajectoryComparison,
)
from cfpp.config import (
    PipelineConfig,
    TrainingConfig,
    RewardMapConfig,
    DensityConfig,
    FixtureConfig,
    load_config,
    initialize,
    get_config,
)
from cfpp.ingest import (
    load_recording,
    load_recordings,
    normalize_direction,
    slice_series,
    write_recording,
)
from cfpp.extraction import (
    time_gap_series,
    detect_cf_segments,
    extract_segments,
    classify_fv_state,
    audit_segment,
)
from cfpp.dtw import (
    dtw_distance,
    warping_path,
    pair_segments,
)
from cfpp.metrics import (
    speed_fluctuation_metrics,
    safety_metrics,
    paired_t_test,
    build_comparison_table,
)
from cfpp.env import (
    step,
    make_episode,
    rollout,
)
from cfpp.nn import (
    MLP,
    AdamState,
    adam_step,
    grad_check,
)
from cfpp.airl import (
    Discriminator,
    GaussianPolicy,
    PPOAgent,
    RewardModel,
    discriminator_output,
    airl_reward,
    ppo_update,
    train_airl,
    eval_episode_loss,
    evaluate_model,
    reward_grid,
    positive_spacing_bins,
    reward_auc,
)
from cfpp.reporting import (
    export_grid,
    load_grid,
)
from cfpp.fixtures import (
    generate_fixtures,
    scripted_segments,
)

__version__ = "0.1.0"

__all__ = [
    # Errors
    "CFPPError",
    "ConfigError",
    "StageDependencyError",
    "DataIntegrityError",
    "SchemaError",
    "IntegrityError",
    "DirectionAmbiguityError",
    "SeriesRangeError",
    "DomainError",
    "ShapeError",
    "CacheUsageError",
    "TrainingDivergenceError",
    # Models
    "RecordingMeta",
    "TrackFrame",
    "Track",
    "RecordingBundle",
    "SegmentLabel",
    "ExtractionCriteria",
    "CFSegment",
    "DTWResult",
    "SegmentPair",
    "FluctuationMetrics",
    "SafetyMetrics",
    "PairedTestResult",
    "PopulationStats",
    "ComparisonRow",
    "ComparisonTable",
    "CFState",
    "Episode",
    "Transition",
    "EpochRecord",
    "TrainReport",
    "Grid",
    "TrajectoryComparison",
    # Configuration
    "PipelineConfig",
    "TrainingConfig",
    "RewardMapConfig",
    "DensityConfig",
    "FixtureConfig",
    "load_config",
    "initialize",
    "get_config",
    # Ingest
    "load_recording",
    "load_recordings",
    "normalize_direction",
    "slice_series",
    "write_recording",
    # Extraction
    "time_gap_series",
    "detect_cf_segments",
    "extract_segments",
    "classify_fv_state",
    "audit_segment",
    # Pairing
    "dtw_distance",
    "warping_path",
    "pair_segments",
    # Metrics
    "speed_fluctuation_metrics",
    "safety_metrics",
    "paired_t_test",
    "build_comparison_table",
    # Environment
    "step",
    "make_episode",
    "rollout",
    # Networks
    "MLP",
    "AdamState",
    "adam_step",
    "grad_check",
    # Reward learning
    "Discriminator",
    "GaussianPolicy",
    "PPOAgent",
    "RewardModel",
    "discriminator_output",
    "airl_reward",
    "ppo_update",
    "train_airl",
    "eval_episode_loss",
    "evaluate_model",
    "reward_grid",
    "positive_spacing_bins",
    "reward_auc",
    # Reporting
    "export_grid",
    "load_grid",
    # Fixtures
    "generate_fixtures",
    "scripted_segments",
]
