"""
Extraction of car-following segments.

A segment is a maximal run of ego frames in which the same LV and FV stay
in the ego's lane, the LV head is ahead of the ego head by at most
``max_lv_distance``, LV and ego drive at least ``min_speed`` and the FV
is present. Runs shorter than ``min_duration`` are dropped; the FV time
gap decides the label.
"""

import logging
from typing import Iterable, List, Optional, Tuple

import numpy as np

from cfpp.errors import DataIntegrityError, DomainError
from cfpp.ingest import slice_series
from cfpp.models import (
    NO_VEHICLE,
    CFSegment,
    ExtractionCriteria,
    RecordingBundle,
    SegmentLabel,
    Track,
)


logger = logging.getLogger(__name__)


def time_gap_series(
    follower: Track,
    leader: Track,
    frame_lo: int,
    frame_hi: int,
) -> np.ndarray:
    """
    Per-frame time headway (X_L - X_F) / V_F between two vehicles.

    Args:
        follower: Vehicle behind; its speed is the denominator
        leader: Vehicle ahead
        frame_lo: First frame (inclusive)
        frame_hi: Last frame (inclusive)

    Returns:
        Headway in seconds, one value per frame

    Raises:
        SeriesRangeError: If either track does not cover the window
        DomainError: If the follower speed is not positive at some frame

    Example:
        Leader head at 50 m, follower head at 0 m driving 25 m/s gives 2.0 s.
    """
    follower_speed = slice_series(follower, frame_lo, frame_hi, "speed")
    if np.any(follower_speed <= 0):
        bad = frame_lo + int(np.flatnonzero(follower_speed <= 0)[0])
        raise DomainError(
            f"vehicle {follower.vehicle_id} has non-positive speed at frame {bad}"
        )
    leader_x = slice_series(leader, frame_lo, frame_hi, "x")
    follower_x = slice_series(follower, frame_lo, frame_hi, "x")
    return (leader_x - follower_x) / follower_speed


def classify_gaps(gaps: np.ndarray, criteria: ExtractionCriteria) -> SegmentLabel:
    """Label a time-gap series; the threshold must hold at every frame."""
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size and np.all(gaps <= criteria.tailgate_gap_max):
        return SegmentLabel.TAILGATED
    if gaps.size and np.all(gaps >= criteria.gapped_gap_min):
        return SegmentLabel.GAPPED
    return SegmentLabel.NEITHER


def classify_fv_state(segment: CFSegment, criteria: ExtractionCriteria) -> SegmentLabel:
    """
    Classify the FV condition of a segment from its FV-to-ego time gaps.

    Returns:
        TAILGATED if every gap is at most ``tailgate_gap_max``, GAPPED if
        every gap is at least ``gapped_gap_min``, otherwise NEITHER
    """
    return classify_gaps(segment.fv_time_gap, criteria)


def _align(track: Optional[Track], frames: np.ndarray, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rows of the ego covered by ``track`` and the matching track indices."""
    if track is None:
        return rows[:0], rows[:0]
    idx = frames[rows] - track.first_frame
    inside = (idx >= 0) & (idx < len(track.frame))
    return rows[inside], idx[inside]


def _criteria_mask(
    bundle: RecordingBundle,
    ego: Track,
    criteria: ExtractionCriteria,
) -> np.ndarray:
    """Per-frame criteria mask of an ego track."""
    n = len(ego.frame)
    lv_x = np.full(n, np.nan)
    lv_speed = np.full(n, np.nan)
    lv_lane = np.full(n, -1, dtype=np.int64)
    fv_speed = np.full(n, np.nan)
    fv_lane = np.full(n, -1, dtype=np.int64)

    for lv_id in np.unique(ego.preceding_id):
        if lv_id == NO_VEHICLE:
            continue
        lv = bundle.track(int(lv_id))
        rows, idx = _align(lv, ego.frame, np.flatnonzero(ego.preceding_id == lv_id))
        if len(rows):
            lv_x[rows] = lv.x[idx]
            lv_speed[rows] = lv.speed[idx]
            lv_lane[rows] = lv.lane_id[idx]

    for fv_id in np.unique(ego.following_id):
        if fv_id == NO_VEHICLE:
            continue
        fv = bundle.track(int(fv_id))
        rows, idx = _align(fv, ego.frame, np.flatnonzero(ego.following_id == fv_id))
        if len(rows):
            fv_speed[rows] = fv.speed[idx]
            fv_lane[rows] = fv.lane_id[idx]

    gap = lv_x - ego.x
    with np.errstate(invalid="ignore"):
        mask = (
            (ego.preceding_id != NO_VEHICLE)
            & (ego.following_id != NO_VEHICLE)
            & (lv_lane == ego.lane_id)
            & (fv_lane == ego.lane_id)
            & (gap > 0)
            & (gap <= criteria.max_lv_distance)
            & (ego.speed >= criteria.min_speed)
            & (lv_speed >= criteria.min_speed)
            & (fv_speed > 0)
        )
    return mask


def _runs(mask: np.ndarray, keys: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal index runs where ``mask`` holds and ``keys`` rows stay equal."""
    runs = []
    start = None
    for k in range(len(mask)):
        if start is not None and (not mask[k] or np.any(keys[k] != keys[start])):
            runs.append((start, k - 1))
            start = None
        if start is None and mask[k]:
            start = k
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _build_segment(
    bundle: RecordingBundle,
    ego: Track,
    lv: Track,
    fv: Track,
    frame_lo: int,
    frame_hi: int,
    criteria: ExtractionCriteria,
) -> CFSegment:
    lv_speed = slice_series(lv, frame_lo, frame_hi, "speed")
    ego_speed = slice_series(ego, frame_lo, frame_hi, "speed")
    fv_gap = time_gap_series(fv, ego, frame_lo, frame_hi)
    return CFSegment(
        recording_id=bundle.meta.recording_id,
        lv_id=lv.vehicle_id,
        ego_id=ego.vehicle_id,
        fv_id=fv.vehicle_id,
        frame_lo=frame_lo,
        frame_hi=frame_hi,
        frame_rate_hz=bundle.meta.frame_rate_hz,
        lv_length=lv.length,
        label=classify_gaps(fv_gap, criteria),
        lv_speed=lv_speed,
        ego_speed=ego_speed,
        ego_accel=slice_series(ego, frame_lo, frame_hi, "accel"),
        spacing=slice_series(lv, frame_lo, frame_hi, "x") - slice_series(ego, frame_lo, frame_hi, "x"),
        rel_speed=lv_speed - ego_speed,
        fv_time_gap=fv_gap,
    )


def detect_cf_segments(
    bundle: RecordingBundle,
    criteria: Optional[ExtractionCriteria] = None,
) -> List[CFSegment]:
    """
    Find every car-following segment of a direction-normalized recording.

    Args:
        bundle: Recording after ``normalize_direction``
        criteria: Extraction thresholds (defaults if None)

    Returns:
        Labelled segments ordered by (recording_id, ego_id, frame_lo)

    Raises:
        DataIntegrityError: If some track still moves towards negative x
    """
    criteria = criteria or ExtractionCriteria()
    backward = [vid for vid, t in bundle.tracks.items() if t.speed.mean() <= 0]
    if backward:
        raise DataIntegrityError(
            f"Recording {bundle.meta.recording_id} is not direction-normalized "
            f"(vehicles {backward[:5]})"
        )

    segments: List[CFSegment] = []
    for ego_id in sorted(bundle.tracks):
        ego = bundle.tracks[ego_id]
        mask = _criteria_mask(bundle, ego, criteria)
        if not mask.any():
            continue
        keys = np.stack([ego.preceding_id, ego.following_id, ego.lane_id], axis=1)
        for lo, hi in _runs(mask, keys):
            frame_lo = int(ego.frame[lo])
            frame_hi = int(ego.frame[hi])
            if (frame_hi - frame_lo) / bundle.meta.frame_rate_hz < criteria.min_duration:
                continue
            lv = bundle.tracks[int(ego.preceding_id[lo])]
            fv = bundle.tracks[int(ego.following_id[lo])]
            segments.append(_build_segment(bundle, ego, lv, fv, frame_lo, frame_hi, criteria))

    segments.sort(key=lambda s: (s.recording_id, s.ego_id, s.frame_lo))
    counts = {label: sum(s.label == label for s in segments) for label in SegmentLabel}
    logger.info(
        f"Recording {bundle.meta.recording_id}: {len(segments)} segments "
        f"({counts[SegmentLabel.TAILGATED]} tailgated, {counts[SegmentLabel.GAPPED]} gapped)"
    )
    return segments


def extract_segments(
    bundles: Iterable[RecordingBundle],
    criteria: Optional[ExtractionCriteria] = None,
) -> List[CFSegment]:
    """Extract from several recordings and merge in a deterministic order."""
    merged: List[CFSegment] = []
    for bundle in bundles:
        merged.extend(detect_cf_segments(bundle, criteria))
    merged.sort(key=lambda s: (s.recording_id, s.ego_id, s.frame_lo))
    return merged


def frame_violations(
    bundle: RecordingBundle,
    ego_id: int,
    lv_id: int,
    fv_id: int,
    frame: int,
    criteria: ExtractionCriteria,
) -> List[str]:
    """
    Check one frame of an ego/LV/FV triple against every criterion.

    Returns:
        Human-readable violations; empty if the frame qualifies
    """
    ego = bundle.track(ego_id)
    lv = bundle.track(lv_id)
    fv = bundle.track(fv_id)
    if ego is None or not ego.covers(frame, frame):
        return [f"ego {ego_id} absent at frame {frame}"]
    e = ego.frame_at(frame)
    problems = []
    if e.preceding_id != lv_id:
        problems.append(f"LV changed to {e.preceding_id}")
    if e.following_id != fv_id:
        problems.append(f"FV changed to {e.following_id}")
    if lv is None or not lv.covers(frame, frame):
        problems.append(f"LV {lv_id} absent")
    if fv is None or not fv.covers(frame, frame):
        problems.append(f"FV {fv_id} absent")
    if problems:
        return problems

    l = lv.frame_at(frame)
    f = fv.frame_at(frame)
    if not l.lane_id == e.lane_id == f.lane_id:
        problems.append(f"lanes differ (LV {l.lane_id}, ego {e.lane_id}, FV {f.lane_id})")
    gap = l.x - e.x
    if not 0 < gap <= criteria.max_lv_distance:
        problems.append(f"LV head distance {gap:.2f} m outside (0, {criteria.max_lv_distance}]")
    if e.speed < criteria.min_speed:
        problems.append(f"ego speed {e.speed:.2f} below {criteria.min_speed:.4f}")
    if l.speed < criteria.min_speed:
        problems.append(f"LV speed {l.speed:.2f} below {criteria.min_speed:.4f}")
    if f.speed <= 0:
        problems.append("FV not moving forward")
    return problems


def audit_segment(
    bundle: RecordingBundle,
    segment: CFSegment,
    criteria: ExtractionCriteria,
) -> List[str]:
    """
    Re-check a segment frame by frame, independently of the extractor.

    Returns:
        Violations prefixed with their frame; empty for a valid segment
    """
    problems = []
    if segment.duration_s < criteria.min_duration:
        problems.append(f"duration {segment.duration_s:.2f} s below {criteria.min_duration}")
    ego = bundle.track(segment.ego_id)
    lane = None
    for frame in range(segment.frame_lo, segment.frame_hi + 1):
        found = frame_violations(
            bundle, segment.ego_id, segment.lv_id, segment.fv_id, frame, criteria
        )
        if not found and ego is not None:
            current = ego.frame_at(frame).lane_id
            if lane is None:
                lane = current
            elif current != lane:
                found.append(f"lane changed from {lane} to {current}")
        problems.extend(f"frame {frame}: {p}" for p in found)
    if segment.label != classify_fv_state(segment, criteria):
        problems.append(f"label {segment.label.value} disagrees with FV time gaps")
    return problems
