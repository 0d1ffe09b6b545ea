"""
Data models for the car-following pipeline.

All models use Pydantic for type safety and validation. Per-frame series
are stored as read-only numpy arrays and serialize to plain JSON lists,
so every model round-trips through ``model_dump_json`` /
``model_validate_json``.
"""

import math
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)


NO_VEHICLE = 0


def _readonly_array(dtype: Any, ndim: int):
    def convert(value: Any) -> np.ndarray:
        arr = np.array(value, dtype=dtype)
        if arr.ndim != ndim:
            raise ValueError(f"expected a {ndim}-dimensional array, got {arr.ndim}")
        arr.setflags(write=False)
        return arr

    return convert


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


FloatSeries = Annotated[
    np.ndarray,
    BeforeValidator(_readonly_array(np.float64, 1)),
    PlainSerializer(_to_list, return_type=list, when_used="json"),
]
IntSeries = Annotated[
    np.ndarray,
    BeforeValidator(_readonly_array(np.int64, 1)),
    PlainSerializer(_to_list, return_type=list, when_used="json"),
]
FloatMatrix = Annotated[
    np.ndarray,
    BeforeValidator(_readonly_array(np.float64, 2)),
    PlainSerializer(_to_list, return_type=list, when_used="json"),
]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# ---------------------------------------------------------------------------
# Trajectory ingest
# ---------------------------------------------------------------------------


class RecordingMeta(_Frozen):
    """Recording-level metadata from ``XX_recordingMeta.csv``."""

    recording_id: int = Field(..., description="Recording identifier")
    frame_rate_hz: float = Field(..., gt=0.0, description="Frames per second")
    duration_s: float = Field(..., gt=0.0, description="Recording duration in seconds")
    location_id: int = Field(0, description="Recording site identifier")

    @property
    def dt(self) -> float:
        """Sampling interval in seconds."""
        return 1.0 / self.frame_rate_hz


class TrackFrame(_Frozen):
    """One vehicle's kinematic record at one frame."""

    frame: int = Field(..., description="Frame index")
    x: float = Field(..., description="Front-bumper longitudinal position (m)")
    y: float = Field(..., description="Lateral position (m)")
    speed: float = Field(..., description="Longitudinal speed (m/s)")
    accel: float = Field(..., description="Longitudinal acceleration (m/s^2)")
    lane_id: int = Field(..., description="highD lane identifier")
    preceding_id: Optional[int] = Field(None, description="Vehicle ahead, if any")
    following_id: Optional[int] = Field(None, description="Vehicle behind, if any")

    @model_validator(mode="after")
    def _finite_speed(self) -> "TrackFrame":
        if not math.isfinite(self.speed):
            raise ValueError("speed must be finite")
        return self


class Track(_Frozen):
    """Column-wise store of one vehicle's frames.

    ``preceding_id`` and ``following_id`` use ``NO_VEHICLE`` (0) for
    "none"; ``frame_at`` and ``frames`` expose them as ``None``.
    """

    vehicle_id: int = Field(..., description="Vehicle identifier")
    length: float = Field(..., gt=0.0, description="Longitudinal extent (m)")
    width: float = Field(..., gt=0.0, description="Lateral extent (m)")
    frame: IntSeries = Field(..., description="Frame indices, contiguous")
    x: FloatSeries = Field(..., description="Front-bumper position (m)")
    y: FloatSeries = Field(..., description="Lateral position (m)")
    speed: FloatSeries = Field(..., description="Longitudinal speed (m/s)")
    accel: FloatSeries = Field(..., description="Longitudinal acceleration (m/s^2)")
    lane_id: IntSeries = Field(..., description="Lane per frame")
    preceding_id: IntSeries = Field(..., description="Vehicle ahead per frame, 0 if none")
    following_id: IntSeries = Field(..., description="Vehicle behind per frame, 0 if none")

    @model_validator(mode="after")
    def _check_columns(self) -> "Track":
        n = len(self.frame)
        if n == 0:
            raise ValueError(f"vehicle {self.vehicle_id} has no frames")
        for name in ("x", "y", "speed", "accel", "lane_id", "preceding_id", "following_id"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"vehicle {self.vehicle_id}: column '{name}' length mismatch")
        if n > 1 and not np.all(np.diff(self.frame) == 1):
            raise ValueError(f"vehicle {self.vehicle_id}: frames are not contiguous")
        if not np.all(np.isfinite(self.speed)):
            raise ValueError(f"vehicle {self.vehicle_id}: non-finite speed")
        return self

    @property
    def first_frame(self) -> int:
        return int(self.frame[0])

    @property
    def last_frame(self) -> int:
        return int(self.frame[-1])

    def covers(self, frame_lo: int, frame_hi: int) -> bool:
        return self.first_frame <= frame_lo and frame_hi <= self.last_frame

    def index_of(self, frame: int) -> int:
        return frame - self.first_frame

    def frame_at(self, frame: int) -> TrackFrame:
        k = self.index_of(frame)
        if not 0 <= k < len(self.frame):
            raise IndexError(f"frame {frame} outside vehicle {self.vehicle_id}")
        return TrackFrame(
            frame=int(self.frame[k]),
            x=float(self.x[k]),
            y=float(self.y[k]),
            speed=float(self.speed[k]),
            accel=float(self.accel[k]),
            lane_id=int(self.lane_id[k]),
            preceding_id=int(self.preceding_id[k]) or None,
            following_id=int(self.following_id[k]) or None,
        )

    @property
    def frames(self) -> List[TrackFrame]:
        return [self.frame_at(int(f)) for f in self.frame]


class RecordingBundle(_Frozen):
    """A loaded recording: metadata plus every track keyed by vehicle id."""

    meta: RecordingMeta
    tracks: Dict[int, Track] = Field(default_factory=dict)

    def track(self, vehicle_id: int) -> Optional[Track]:
        return self.tracks.get(vehicle_id)


# ---------------------------------------------------------------------------
# Car-following extraction
# ---------------------------------------------------------------------------


class SegmentLabel(str, Enum):
    """Condition of the following vehicle during a segment."""

    TAILGATED = "Tailgated"
    GAPPED = "Gapped"
    NEITHER = "Neither"


class ExtractionCriteria(_Frozen):
    """Thresholds that decide what counts as a car-following segment."""

    max_lv_distance: float = Field(100.0, gt=0.0, description="Max LV head distance (m)")
    min_speed: float = Field(10.0 / 3.6, gt=0.0, description="Min LV and ego speed (m/s)")
    min_duration: float = Field(10.0, gt=0.0, description="Min segment duration (s)")
    tailgate_gap_max: float = Field(1.0, gt=0.0, description="FV time gap at or below which the ego is tailgated (s)")
    gapped_gap_min: float = Field(3.0, gt=0.0, description="FV time gap at or above which the ego is gapped (s)")

    @model_validator(mode="after")
    def _ordered_thresholds(self) -> "ExtractionCriteria":
        if not self.tailgate_gap_max < self.gapped_gap_min:
            raise ValueError("tailgate_gap_max must be smaller than gapped_gap_min")
        return self


class CFSegment(_Frozen):
    """A maximal LV/ego/FV car-following episode with its cached series."""

    recording_id: int
    lv_id: int
    ego_id: int
    fv_id: int
    frame_lo: int
    frame_hi: int
    frame_rate_hz: float = Field(..., gt=0.0)
    lv_length: float = Field(..., gt=0.0, description="Length L of the LV (m)")
    label: SegmentLabel = SegmentLabel.NEITHER
    lv_speed: FloatSeries
    ego_speed: FloatSeries
    ego_accel: FloatSeries
    spacing: FloatSeries = Field(..., description="Head-to-head distance X_L - X_E (m)")
    rel_speed: FloatSeries = Field(..., description="v_l - v_e (m/s)")
    fv_time_gap: FloatSeries = Field(..., description="FV-to-ego time gap (s)")

    @model_validator(mode="after")
    def _equal_lengths(self) -> "CFSegment":
        n = self.frame_hi - self.frame_lo + 1
        if n < 1:
            raise ValueError("frame_hi must not precede frame_lo")
        for name in ("lv_speed", "ego_speed", "ego_accel", "spacing", "rel_speed", "fv_time_gap"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series '{name}' has {len(getattr(self, name))} values, expected {n}")
        return self

    @property
    def key(self) -> str:
        return f"{self.recording_id}:{self.ego_id}:{self.frame_lo}"

    @property
    def n_frames(self) -> int:
        return self.frame_hi - self.frame_lo + 1

    @property
    def duration_s(self) -> float:
        return (self.frame_hi - self.frame_lo) / self.frame_rate_hz

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz


# ---------------------------------------------------------------------------
# DTW pairing
# ---------------------------------------------------------------------------


class DTWResult(_Frozen):
    """Outcome of one dynamic-time-warping comparison."""

    distance: float = Field(..., ge=0.0, description="Cumulative cost D(n, m)")
    path_length: int = Field(..., ge=1, description="Cells on the optimal warping path")
    normalized_distance: float = Field(..., ge=0.0, description="distance / path_length")


class SegmentPair(_Frozen):
    """One tailgated and one gapped segment with similar LV speed profiles."""

    tailgated: CFSegment
    gapped: CFSegment
    dtw: DTWResult

    @model_validator(mode="after")
    def _one_of_each(self) -> "SegmentPair":
        if self.tailgated.label != SegmentLabel.TAILGATED:
            raise ValueError("tailgated member must be labelled Tailgated")
        if self.gapped.label != SegmentLabel.GAPPED:
            raise ValueError("gapped member must be labelled Gapped")
        return self


# ---------------------------------------------------------------------------
# Behavior metrics
# ---------------------------------------------------------------------------


class FluctuationMetrics(_Frozen):
    """Speed-fluctuation metrics of one ego speed series."""

    std: float = Field(..., ge=0.0, description="Sample standard deviation (m/s)")
    dmean: float = Field(..., ge=0.0, description="Mean absolute deviation (m/s)")
    cv: float = Field(..., ge=0.0, description="Coefficient of variation (%)")
    vf: float = Field(..., ge=0.0, description="Volatility of log returns (%)")


class SafetyMetrics(_Frozen):
    """Headway and DRAC summary of one segment."""

    mean_thw: float = Field(..., gt=0.0, description="Mean time headway (s)")
    mean_drac: float = Field(..., ge=0.0, description="Mean DRAC over all frames (m/s^2)")
    max_drac: float = Field(..., ge=0.0, description="Peak DRAC (m/s^2)")


class PairedTestResult(_Frozen):
    """Two-tailed paired t-test of a against b."""

    t_stat: float
    df: int = Field(..., ge=1)
    p_value: float = Field(..., ge=0.0, le=1.0)
    mean_delta_pct: float = Field(..., description="(mean(a) - mean(b)) / mean(b) * 100")
    degenerate: bool = Field(False, description="Differences have zero spread but non-zero mean")


class PopulationStats(_Frozen):
    max: float
    min: float
    mean: float
    sd: float


class ComparisonRow(_Frozen):
    """One metric row of the tailgated-vs-gapped comparison."""

    metric: str
    unit: str
    group: str
    tailgated: PopulationStats
    gapped: PopulationStats
    delta_pct: float
    p_value: Optional[float] = None
    significant: bool = False
    degenerate: bool = False


class ComparisonTable(_Frozen):
    n_pairs: int = Field(..., ge=1)
    rows: List[ComparisonRow]

    def row(self, metric: str) -> ComparisonRow:
        for row in self.rows:
            if row.metric == metric:
                return row
        raise KeyError(metric)


# ---------------------------------------------------------------------------
# Car-following MDP
# ---------------------------------------------------------------------------


class CFState(_Frozen):
    """MDP state [dy_le, v_e, v_l, dv_le]."""

    dy_le: float = Field(..., description="Head-to-head distance ego to LV (m)")
    v_e: float = Field(..., ge=0.0, description="Ego speed (m/s)")
    v_l: float = Field(..., description="LV speed (m/s)")
    dv_le: float = Field(..., description="v_l - v_e (m/s)")

    @model_validator(mode="after")
    def _consistent_relative_speed(self) -> "CFState":
        if abs(self.dv_le - (self.v_l - self.v_e)) > 1e-9 * max(1.0, abs(self.v_l)):
            raise ValueError("dv_le must equal v_l - v_e")
        return self

    @classmethod
    def of(cls, dy_le: float, v_e: float, v_l: float) -> "CFState":
        return cls(dy_le=dy_le, v_e=v_e, v_l=v_l, dv_le=v_l - v_e)

    def as_array(self) -> np.ndarray:
        return np.array([self.dy_le, self.v_e, self.v_l, self.dv_le])


class Episode(_Frozen):
    """LV speed replay for one rollout, optionally with the recorded ego."""

    lv_speed_trace: FloatSeries
    lv_length: float = Field(..., gt=0.0)
    dt: float = Field(..., gt=0.0)
    initial: CFState
    ego_speed_trace: Optional[FloatSeries] = None
    ego_accel_trace: Optional[FloatSeries] = None
    spacing_trace: Optional[FloatSeries] = None
    segment_key: Optional[str] = None

    @model_validator(mode="after")
    def _valid_episode(self) -> "Episode":
        if len(self.lv_speed_trace) < 2:
            raise ValueError("LV trace needs at least 2 samples")
        if not self.initial.dy_le > self.lv_length:
            raise ValueError("initial spacing must exceed the LV length")
        return self

    @property
    def n_steps(self) -> int:
        return len(self.lv_speed_trace) - 1


class Transition(_Frozen):
    s: CFState
    a: float = Field(..., description="Ego acceleration (m/s^2)")
    s_next: CFState
    collided: bool = False


# ---------------------------------------------------------------------------
# Training and reporting
# ---------------------------------------------------------------------------


class EpochRecord(_Frozen):
    epoch: int = Field(..., ge=0)
    disc_ce: float = Field(..., description="Discriminator binary cross-entropy")
    mean_return: float = Field(..., description="Mean episode return under the learned reward")
    speed_loss: float = Field(..., description="Mean speed-discrepancy loss with collision penalty")
    collisions: int = Field(..., ge=0)


class TrainReport(_Frozen):
    condition: str
    configured_epochs: int = Field(..., ge=0)
    epochs: List[EpochRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _epoch_count(self) -> "TrainReport":
        if len(self.epochs) > self.configured_epochs:
            raise ValueError("more epoch records than configured epochs")
        return self


class Grid(_Frozen):
    """A rectangular grid of values over two binned axes.

    ``values[i, j]`` belongs to ``row_centers[i]`` and ``col_centers[j]``;
    NaN marks an invalid cell.
    """

    row_label: str
    col_label: str
    row_centers: FloatSeries
    col_centers: FloatSeries
    values: FloatMatrix
    meta: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _shape(self) -> "Grid":
        if self.values.shape != (len(self.row_centers), len(self.col_centers)):
            raise ValueError(
                f"grid shape {self.values.shape} does not match axes "
                f"({len(self.row_centers)}, {len(self.col_centers)})"
            )
        return self


class TrajectoryComparison(_Frozen):
    """A policy rollout next to what the recorded driver did."""

    segment_key: Optional[str] = None
    true_speed: FloatSeries = Field(..., description="Recorded ego speed after each step (m/s)")
    generated_speed: FloatSeries = Field(..., description="Policy ego speed after each step (m/s)")
    true_spacing: Optional[FloatSeries] = None
    generated_spacing: FloatSeries
    speed_rmse: float = Field(..., ge=0.0)
    speed_loss: float
    collided: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.generated_speed)
