"""
File exports of the pipeline stages.

Every file starts with a provenance header (config hash and seed): a
``{"_header": ...}`` record for JSON lines, a ``# key=value`` comment
line for CSV. Nothing time-dependent is written, so identical runs give
byte-identical files.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from cfpp.config import DensityConfig
from cfpp.errors import DataIntegrityError
from cfpp.models import (
    CFSegment,
    ComparisonTable,
    DTWResult,
    Grid,
    SegmentPair,
    TrainReport,
    TrajectoryComparison,
)
from cfpp.utils import header_comment, read_jsonl, write_jsonl


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GRID_CORNER_SEPARATOR = "|"


def _write_csv(path: PathLike, frame: pd.DataFrame, header: Optional[Dict[str, Any]] = None, **kwargs: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(header_comment(header))
        frame.to_csv(handle, lineterminator="\n", **kwargs)
    return path


def _read_csv(path: PathLike, **kwargs: Any) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip", **kwargs)


# ---------------------------------------------------------------------------
# Segments and pairs
# ---------------------------------------------------------------------------


def segment_record(segment: CFSegment) -> Dict[str, Any]:
    """Full segment plus a few summary statistics for quick inspection."""
    record = segment.model_dump(mode="json")
    record["summary"] = {
        "key": segment.key,
        "duration_s": segment.duration_s,
        "mean_lv_speed": float(np.mean(segment.lv_speed)),
        "mean_ego_speed": float(np.mean(segment.ego_speed)),
        "mean_fv_time_gap": float(np.mean(segment.fv_time_gap)),
    }
    return record


def write_segments(path: PathLike, segments: Sequence[CFSegment], header: Optional[Dict[str, Any]] = None) -> int:
    return write_jsonl(path, (segment_record(s) for s in segments), header)


def read_segments(path: PathLike) -> List[CFSegment]:
    return [CFSegment.model_validate(record) for record in read_jsonl(path)]


def pair_record(pair: SegmentPair) -> Dict[str, Any]:
    return {
        "tailgated": pair.tailgated.key,
        "gapped": pair.gapped.key,
        **pair.dtw.model_dump(mode="json"),
    }


def write_pairs(path: PathLike, pairs: Sequence[SegmentPair], header: Optional[Dict[str, Any]] = None) -> int:
    return write_jsonl(path, (pair_record(p) for p in pairs), header)


def read_pairs(path: PathLike, segments: Sequence[CFSegment]) -> List[SegmentPair]:
    """
    Rebuild pairs from their segment keys.

    Raises:
        DataIntegrityError: If a pair names a segment that is not in ``segments``
    """
    by_key = {s.key: s for s in segments}
    pairs = []
    for record in read_jsonl(path):
        missing = [record[k] for k in ("tailgated", "gapped") if record[k] not in by_key]
        if missing:
            raise DataIntegrityError(f"{path}: pair references unknown segments {missing}")
        pairs.append(
            SegmentPair(
                tailgated=by_key[record["tailgated"]],
                gapped=by_key[record["gapped"]],
                dtw=DTWResult(
                    distance=record["distance"],
                    path_length=record["path_length"],
                    normalized_distance=record["normalized_distance"],
                ),
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Comparison table
# ---------------------------------------------------------------------------


def table_frame(table: ComparisonTable) -> pd.DataFrame:
    """One row per metric: population statistics, relative difference and test outcome."""
    rows = []
    for row in table.rows:
        flat = {"metric": row.metric, "unit": row.unit, "group": row.group}
        for population in ("tailgated", "gapped"):
            stats = getattr(row, population)
            for stat in ("max", "min", "mean", "sd"):
                flat[f"{population}_{stat}"] = getattr(stats, stat)
        flat["delta_pct"] = row.delta_pct
        flat["p_value"] = row.p_value
        flat["significant"] = "*" if row.significant else ""
        flat["degenerate"] = row.degenerate
        rows.append(flat)
    return pd.DataFrame(rows)


def write_comparison_table(
    table: ComparisonTable,
    csv_path: PathLike,
    json_path: PathLike,
    header: Optional[Dict[str, Any]] = None,
) -> None:
    """Write the table as CSV and as JSON (``{"_header": ..., "table": ...}``)."""
    _write_csv(csv_path, table_frame(table), header, index=False)
    payload = {"_header": header or {}, "table": table.model_dump(mode="json")}
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def export_grid(grid: Grid, path: PathLike, header: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a grid as CSV: the first row holds the column centers, the first
    column the row centers, invalid (NaN) cells are empty fields.

    Example:
        A 10x10 reward grid becomes 11 rows of 11 fields below the header comment.
    """
    frame = pd.DataFrame(
        np.asarray(grid.values), index=np.asarray(grid.row_centers), columns=np.asarray(grid.col_centers)
    )
    corner = f"{grid.row_label}{GRID_CORNER_SEPARATOR}{grid.col_label}"
    return _write_csv(path, frame, header, index_label=corner, na_rep="")


def load_grid(path: PathLike) -> Grid:
    """Read a grid written by ``export_grid``."""
    frame = _read_csv(path, index_col=0)
    row_label, _, col_label = str(frame.index.name).partition(GRID_CORNER_SEPARATOR)
    return Grid(
        row_label=row_label,
        col_label=col_label,
        row_centers=frame.index.to_numpy(dtype=float),
        col_centers=np.array([float(c) for c in frame.columns]),
        values=frame.to_numpy(dtype=float),
    )


def density_grids(
    segments: Sequence[CFSegment],
    config: Optional[DensityConfig] = None,
) -> Dict[str, Grid]:
    """
    Frame counts of LV speed against spacing, ego acceleration and relative speed.

    Returns:
        Grids keyed ``spacing``, ``ego_accel`` and ``rel_speed``; rows are
        LV-speed bin centers
    """
    config = config or DensityConfig()
    lv = np.concatenate([s.lv_speed for s in segments]) if segments else np.empty(0)
    axes = {
        "spacing": ("spacing", config.spacing_bins, config.spacing_range),
        "ego_accel": ("ego_accel", config.accel_bins, config.accel_range),
        "rel_speed": ("rel_speed", config.rel_speed_bins, config.rel_speed_range),
    }
    grids = {}
    for name, (field, bins, value_range) in axes.items():
        values = np.concatenate([getattr(s, field) for s in segments]) if segments else np.empty(0)
        counts, lv_edges, y_edges = np.histogram2d(
            lv,
            values,
            bins=[config.lv_speed_bins, bins],
            range=[list(config.lv_speed_range), list(value_range)],
        )
        grids[name] = Grid(
            row_label="lv_speed",
            col_label=name,
            row_centers=0.5 * (lv_edges[:-1] + lv_edges[1:]),
            col_centers=0.5 * (y_edges[:-1] + y_edges[1:]),
            values=counts,
        )
    return grids


def lv_speed_histogram(
    segments: Sequence[CFSegment],
    config: Optional[DensityConfig] = None,
) -> pd.DataFrame:
    """Binned LV-speed counts with bin edges."""
    config = config or DensityConfig()
    lv = np.concatenate([s.lv_speed for s in segments]) if segments else np.empty(0)
    counts, edges = np.histogram(lv, bins=config.lv_speed_bins, range=config.lv_speed_range)
    return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def write_histogram(frame: pd.DataFrame, path: PathLike, header: Optional[Dict[str, Any]] = None) -> Path:
    return _write_csv(path, frame, header, index=False)


# ---------------------------------------------------------------------------
# Training outputs
# ---------------------------------------------------------------------------


def write_train_report(report: TrainReport, path: PathLike, header: Optional[Dict[str, Any]] = None) -> Path:
    """One row per epoch: epoch, disc_ce, mean_return, speed_loss, collisions."""
    columns = ["epoch", "disc_ce", "mean_return", "speed_loss", "collisions"]
    frame = pd.DataFrame([r.model_dump() for r in report.epochs], columns=columns)
    return _write_csv(path, frame, {**(header or {}), "condition": report.condition}, index=False)


def read_train_report(path: PathLike, condition: str, configured_epochs: int) -> TrainReport:
    frame = _read_csv(path)
    epochs = [
        {
            "epoch": int(row.epoch),
            "disc_ce": float(row.disc_ce),
            "mean_return": float(row.mean_return),
            "speed_loss": float(row.speed_loss),
            "collisions": int(row.collisions),
        }
        for row in frame.itertuples(index=False)
    ]
    return TrainReport(condition=condition, configured_epochs=configured_epochs, epochs=epochs)


def write_trajectories(
    comparisons: Sequence[TrajectoryComparison],
    path: PathLike,
    header: Optional[Dict[str, Any]] = None,
) -> Path:
    """Step-by-step generated against recorded ego speed and spacing."""
    rows = []
    for c in comparisons:
        for k in range(c.n_steps):
            rows.append(
                {
                    "segment_key": c.segment_key,
                    "step": k + 1,
                    "true_speed": float(c.true_speed[k]),
                    "generated_speed": float(c.generated_speed[k]),
                    "true_spacing": None if c.true_spacing is None else float(c.true_spacing[k]),
                    "generated_spacing": float(c.generated_spacing[k]),
                    "speed_rmse": c.speed_rmse,
                    "speed_loss": c.speed_loss,
                    "collided": c.collided,
                }
            )
    columns = [
        "segment_key", "step", "true_speed", "generated_speed", "true_spacing",
        "generated_spacing", "speed_rmse", "speed_loss", "collided",
    ]
    return _write_csv(path, pd.DataFrame(rows, columns=columns), header, index=False)
