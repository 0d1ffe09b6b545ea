"""
Command-line front end: ``cfpp <command> --config cfpp.ini``.

Stages read and write files under the output directory, so they can be
run one at a time in pipeline order:

    generate-fixtures -> extract -> pair -> metrics
                                 -> train -> reward-map
                                 -> density
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from cfpp.airl import (
    RewardModel,
    evaluate_model,
    reward_grid,
    split_episodes,
    train_airl,
)
from cfpp.config import PipelineConfig, RewardMapConfig, initialize, load_config
from cfpp.dtw import pair_segments
from cfpp.env import make_episode
from cfpp.errors import (
    CFPPError,
    ConfigError,
    DataIntegrityError,
    StageDependencyError,
    TrainingDivergenceError,
)
from cfpp.extraction import audit_segment, extract_segments
from cfpp.fixtures import generate_fixtures
from cfpp.ingest import load_recordings, normalize_direction
from cfpp.metrics import build_comparison_table
from cfpp.models import CFSegment, SegmentLabel
from cfpp.reporting import (
    density_grids,
    export_grid,
    lv_speed_histogram,
    read_pairs,
    read_segments,
    write_comparison_table,
    write_histogram,
    write_pairs,
    write_segments,
    write_train_report,
    write_trajectories,
)
from cfpp.utils import provenance


logger = logging.getLogger(__name__)

SEGMENTS_FILE = "segments.jsonl"
PAIRS_FILE = "pairs.jsonl"
TABLE_CSV = "comparison_table.csv"
TABLE_JSON = "comparison_table.json"
MODELS_DIR = "models"
REWARD_MAPS_DIR = "reward_maps"
DENSITY_DIR = "density"

CONDITIONS = (SegmentLabel.TAILGATED, SegmentLabel.GAPPED)


def _header(config: PipelineConfig, **extra) -> Dict[str, object]:
    return {**provenance(config.config_hash(), config.seed), **extra}


def _require(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise StageDependencyError(stage, f"{path} (produced by '{producer}')")
    return path


def _speed_tag(speed: float) -> str:
    return f"{speed:g}"


def _discover_recordings(config: PipelineConfig) -> List[int]:
    if config.recording_ids is not None:
        return config.recording_ids
    ids = []
    for path in sorted(config.data_dir.glob("*_tracks.csv")):
        prefix = path.name.split("_", 1)[0]
        if prefix.isdigit():
            ids.append(int(prefix))
    return ids


def _segments(config: PipelineConfig, stage: str) -> List[CFSegment]:
    return read_segments(_require(config.output_dir / SEGMENTS_FILE, stage, "extract"))


def stage_generate_fixtures(config: PipelineConfig) -> List[Path]:
    ids = generate_fixtures(config.fixtures, config.data_dir, config.seed)
    return [config.data_dir / f"{rid:02d}_tracks.csv" for rid in ids]


def stage_extract(config: PipelineConfig) -> List[Path]:
    ids = _discover_recordings(config)
    if not ids:
        raise StageDependencyError("extract", f"highD recordings in {config.data_dir} (or 'generate-fixtures')")
    bundles = [
        normalize_direction(b)
        for b in load_recordings(config.data_dir, ids, max_workers=config.max_workers)
    ]
    segments = extract_segments(bundles, config.extraction)

    by_id = {b.meta.recording_id: b for b in bundles}
    for segment in segments:
        problems = audit_segment(by_id[segment.recording_id], segment, config.extraction)
        if problems:
            logger.warning(f"Segment {segment.key} fails its audit: {problems[:3]}")

    path = config.output_dir / SEGMENTS_FILE
    write_segments(path, segments, _header(config))
    logger.info(f"Extracted {len(segments)} segments from {len(bundles)} recordings")
    return [path]


def stage_pair(config: PipelineConfig) -> List[Path]:
    segments = _segments(config, "pair")
    pairs = pair_segments(
        [s for s in segments if s.label == SegmentLabel.TAILGATED],
        [s for s in segments if s.label == SegmentLabel.GAPPED],
        config.max_normalized_distance,
        max_workers=config.max_workers,
    )
    path = config.output_dir / PAIRS_FILE
    write_pairs(path, pairs, _header(config))
    return [path]


def stage_metrics(config: PipelineConfig) -> List[Path]:
    segments = _segments(config, "metrics")
    pairs = read_pairs(_require(config.output_dir / PAIRS_FILE, "metrics", "pair"), segments)
    if not pairs:
        raise DataIntegrityError("no accepted segment pairs to compare; relax the pairing threshold")
    table = build_comparison_table(pairs)
    csv_path = config.output_dir / TABLE_CSV
    json_path = config.output_dir / TABLE_JSON
    write_comparison_table(table, csv_path, json_path, _header(config))
    return [csv_path, json_path]


def stage_train(config: PipelineConfig) -> List[Path]:
    segments = _segments(config, "train")
    written = []
    for condition in CONDITIONS:
        experts = [s for s in segments if s.label == condition]
        if not experts:
            logger.warning(f"No {condition.value} segments; skipping training for this condition")
            continue
        model_dir = config.output_dir / MODELS_DIR / condition.value
        try:
            model, report = train_airl(experts, config.training, config.seed, config.config_hash())
        except TrainingDivergenceError as e:
            if e.last_model is not None:
                e.last_model.save(model_dir)
                logger.error(f"Saved last finite {condition.value} model to {model_dir}")
            raise
        model.save(model_dir)
        report_path = config.output_dir / f"train_report_{condition.value}.csv"
        write_train_report(report, report_path, _header(config))

        episodes = [make_episode(s) for s in experts]
        train_episodes, held_out = split_episodes(episodes, config.training.holdout_fraction, config.seed)
        comparisons = evaluate_model(model, held_out or train_episodes, config.training)
        trajectories_path = config.output_dir / f"trajectories_{condition.value}.csv"
        write_trajectories(comparisons, trajectories_path, _header(config))
        written.extend([model_dir, report_path, trajectories_path])
    return written


def stage_reward_map(config: PipelineConfig) -> List[Path]:
    rm = config.reward_map
    models = {}
    for condition in CONDITIONS:
        manifest = config.output_dir / MODELS_DIR / condition.value / "manifest.json"
        if manifest.exists():
            models[condition] = RewardModel.load(manifest.parent)
    if not models:
        raise StageDependencyError("reward-map", f"{config.output_dir / MODELS_DIR} (produced by 'train')")

    written = []
    for condition, model in models.items():
        for speed in rm.fixed_speeds:
            grid = reward_grid(model, speed, rm.bins, rm.dy_range, rm.dv_range)
            path = config.output_dir / REWARD_MAPS_DIR / f"reward_{condition.value}_v{_speed_tag(speed)}.csv"
            export_grid(grid, path, _header(config, condition=condition.value, v_l=speed))
            written.append(path)
    return written


def stage_density(config: PipelineConfig) -> List[Path]:
    segments = _segments(config, "density")
    out = config.output_dir / DENSITY_DIR
    written = []
    for condition in CONDITIONS:
        subset = [s for s in segments if s.label == condition]
        header = _header(config, condition=condition.value)
        for name, grid in density_grids(subset, config.density).items():
            written.append(export_grid(grid, out / f"density_{condition.value}_{name}.csv", header))
        histogram = lv_speed_histogram(subset, config.density)
        written.append(write_histogram(histogram, out / f"lv_speed_{condition.value}.csv", header))
    return written


STAGES: Dict[str, Callable[[PipelineConfig], List[Path]]] = {
    "generate-fixtures": stage_generate_fixtures,
    "extract": stage_extract,
    "pair": stage_pair,
    "metrics": stage_metrics,
    "train": stage_train,
    "reward-map": stage_reward_map,
    "density": stage_density,
}


def run_command(command: str, config: PipelineConfig) -> List[Path]:
    """
    Run one pipeline stage.

    Args:
        command: One of ``STAGES``
        config: Validated configuration

    Returns:
        Paths written by the stage

    Raises:
        ConfigError: If the command is unknown
        StageDependencyError: If an input produced by an earlier stage is missing
    """
    if command not in STAGES:
        raise ConfigError(f"unknown command '{command}'")
    logger.info(f"Running '{command}' (config {config.config_hash()[:12]}, seed {config.seed})")
    written = STAGES[command](config)
    logger.info(f"'{command}' wrote {len(written)} outputs under {config.output_dir}")
    return written


def parse_speeds(raw: str) -> List[float]:
    """
    Parse ``--fixed-speeds`` such as ``4.3,7.4,11,20``.

    Raises:
        ConfigError: If a value is not a number
    """
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--fixed-speeds: expected comma-separated numbers, got '{raw}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfpp",
        description="Tailgated vs gapped car-following analysis and reward learning.",
    )
    parser.add_argument("command", choices=sorted(STAGES), help="Pipeline stage to run")
    parser.add_argument("--config", type=Path, help="INI configuration file")
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="Output directory (overrides the config)")
    parser.add_argument("--fixed-speeds", help="LV speeds for reward maps, e.g. 4.3,7.4,11,20")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, seed=args.seed, output_dir=args.out)
        if args.fixed_speeds:
            speeds = parse_speeds(args.fixed_speeds)
            try:
                reward_map = RewardMapConfig(**{**config.reward_map.model_dump(), "fixed_speeds": speeds})
            except ValueError as e:
                raise ConfigError(f"--fixed-speeds: {e}") from e
            config = config.replace(reward_map=reward_map)
        initialize(config)
        run_command(args.command, config)
    except CFPPError as e:
        logger.error(f"'{args.command}' failed: {e}", exc_info=True)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
