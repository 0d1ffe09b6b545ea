"""
Synthetic highD-format recordings with scripted drivers.

Each platoon is an LV driving a smooth seeded speed profile, an ego
following it with a constant-time-gap controller, and an FV held at a
fixed time gap behind the ego. The FV gap decides whether the ego's
segment comes out Tailgated, Gapped or Neither. Ego kinematics are
integrated with ``cfpp.env.advance``, so the recorded accelerations
replay exactly through the environment.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from cfpp.config import FixtureConfig
from cfpp.env import advance
from cfpp.ingest import write_recording
from cfpp.models import (
    NO_VEHICLE,
    CFSegment,
    CFState,
    RecordingBundle,
    RecordingMeta,
    SegmentLabel,
    Track,
)


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ROAD_LENGTH = 2000.0
LANE_WIDTH = 3.5
LV_START_X = 250.0


def lv_speed_profile(
    rng: np.random.Generator,
    n_frames: int,
    dt: float,
    base_speed: float,
    amplitude: float,
    n_components: int = 3,
) -> np.ndarray:
    """
    Smooth LV speed trace: a base speed plus a mix of slow sinusoids.

    The mixing weights sum to one, so the trace stays within
    ``base_speed +/- amplitude``.
    """
    t = np.arange(n_frames) * dt
    freqs = rng.uniform(0.02, 0.1, n_components)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    weights = rng.dirichlet(np.ones(n_components))
    wave = np.sum(weights[:, None] * np.sin(2.0 * np.pi * freqs[:, None] * t + phases[:, None]), axis=0)
    return base_speed + amplitude * wave


def constant_gap_accel(
    dy_le: float,
    v_e: float,
    v_l: float,
    target_gap: float,
    k_gap: float = 0.5,
    k_speed: float = 0.6,
    low: float = -6.0,
    high: float = 4.0,
) -> float:
    """
    Constant-time-gap controller ``k_gap(dy - T v_e) + k_speed(v_l - v_e)``.

    The result is clipped to the ``[low, high]`` acceleration bounds.

    Example:
        >>> constant_gap_accel(30.0, 20.0, 20.0, 1.5)
        0.0
    """
    a = k_gap * (dy_le - target_gap * v_e) + k_speed * (v_l - v_e)
    return min(high, max(low, a))


class ConstantGapPolicy:
    """Scripted expert usable wherever the environment expects a policy."""

    def __init__(self, target_gap: float, k_gap: float = 0.5, k_speed: float = 0.6):
        self.target_gap = target_gap
        self.k_gap = k_gap
        self.k_speed = k_speed

    def __call__(self, state: CFState, rng: Optional[np.random.Generator] = None) -> float:
        return constant_gap_accel(
            state.dy_le, state.v_e, state.v_l, self.target_gap, self.k_gap, self.k_speed
        )


def follow(
    lv_speed: np.ndarray,
    dt: float,
    target_gap: float,
    k_gap: float = 0.5,
    k_speed: float = 0.6,
    initial_speed: Optional[float] = None,
    initial_gap: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Drive a scripted follower behind an LV speed trace.

    The follower starts at the LV speed and at its equilibrium spacing
    ``target_gap * v`` unless told otherwise.

    Returns:
        (speed, acceleration, head-to-head spacing), one value per frame;
        ``acceleration[k]`` is the action applied between frames k and k+1
    """
    lv_speed = np.asarray(lv_speed, dtype=float)
    n = len(lv_speed)
    speed = np.empty(n)
    accel = np.empty(n)
    spacing = np.empty(n)
    speed[0] = float(lv_speed[0]) if initial_speed is None else initial_speed
    spacing[0] = target_gap * speed[0] if initial_gap is None else initial_gap
    for k in range(n):
        accel[k] = constant_gap_accel(
            float(spacing[k]), float(speed[k]), float(lv_speed[k]), target_gap, k_gap, k_speed
        )
        if k + 1 < n:
            spacing[k + 1], speed[k + 1] = advance(
                float(spacing[k]),
                float(speed[k]),
                float(lv_speed[k]),
                float(accel[k]),
                dt,
                float(lv_speed[k + 1]),
            )
    return speed, accel, spacing


def _positions(speed: np.ndarray, dt: float, start: float) -> np.ndarray:
    steps = 0.5 * (speed[1:] + speed[:-1]) * dt
    return start + np.concatenate([[0.0], np.cumsum(steps)])


def condition_gaps(config: FixtureConfig, label: SegmentLabel) -> Tuple[float, float]:
    """(ego time gap, FV time gap) used for platoons of one FV condition."""
    if label == SegmentLabel.TAILGATED:
        return config.ego_gap_short, config.fv_gap_tailgated
    if label == SegmentLabel.GAPPED:
        return config.ego_gap_long, config.fv_gap_gapped
    return config.ego_gap_neither, config.fv_gap_neither


def build_platoon(
    rng: np.random.Generator,
    config: FixtureConfig,
    label: SegmentLabel,
    lv_speed: np.ndarray,
    first_id: int,
    lane_id: int,
    forward: bool = True,
) -> List[Track]:
    """
    LV, ego and FV tracks of one platoon in raw highD coordinates.

    Vehicle ids are ``first_id`` (LV), ``first_id + 1`` (ego) and
    ``first_id + 2`` (FV). Backward platoons are mirrored along the road
    and get negative velocities, as on highD's upper carriageway.
    """
    dt = 1.0 / config.frame_rate_hz
    ego_gap, fv_gap = condition_gaps(config, label)
    n = len(lv_speed)
    ego_speed, ego_accel, spacing = follow(lv_speed, dt, ego_gap, config.k_gap, config.k_speed)

    lv_x = _positions(lv_speed, dt, LV_START_X)
    ego_x = lv_x - spacing
    fv_x = ego_x - fv_gap * ego_speed

    lv_id, ego_id, fv_id = first_id, first_id + 1, first_id + 2
    none = np.full(n, NO_VEHICLE)
    vehicles = [
        (lv_id, lv_x, lv_speed, np.gradient(lv_speed, dt), none, np.full(n, ego_id)),
        (ego_id, ego_x, ego_speed, ego_accel, np.full(n, lv_id), np.full(n, fv_id)),
        (fv_id, fv_x, ego_speed.copy(), ego_accel.copy(), np.full(n, ego_id), none),
    ]
    sign = 1.0 if forward else -1.0
    tracks = []
    for vid, x, speed, accel, preceding, following in vehicles:
        tracks.append(
            Track(
                vehicle_id=vid,
                length=float(rng.uniform(4.2, 5.0)),
                width=float(rng.uniform(1.8, 2.0)),
                frame=np.arange(n),
                x=x if forward else ROAD_LENGTH - x,
                y=np.full(n, (lane_id - 0.5) * LANE_WIDTH),
                speed=sign * speed,
                accel=sign * accel,
                lane_id=np.full(n, lane_id),
                preceding_id=preceding,
                following_id=following,
            )
        )
    return tracks


def generate_recording(config: FixtureConfig, recording_id: int, seed: int) -> RecordingBundle:
    """
    One synthetic recording with platoons of every FV condition.

    For each platoon index the Tailgated and Gapped platoons share an LV
    profile up to a constant offset of at most ``pair_jitter``, so they
    pair under DTW; Neither platoons get their own profile. Platoons
    alternate travel direction and each has its own lane.
    """
    rng = np.random.default_rng([seed, recording_id])
    dt = 1.0 / config.frame_rate_hz
    n_frames = int(round(config.duration_s * config.frame_rate_hz))

    def profile() -> np.ndarray:
        base = rng.uniform(config.lv_speed_min, config.lv_speed_max)
        return lv_speed_profile(rng, n_frames, dt, base, config.lv_speed_amplitude)

    tracks: Dict[int, Track] = {}
    platoon = 0
    for _ in range(config.platoons_per_condition):
        shared = profile()
        offset = rng.uniform(-config.pair_jitter, config.pair_jitter)
        traces = [
            (SegmentLabel.TAILGATED, shared),
            (SegmentLabel.GAPPED, shared + offset),
            (SegmentLabel.NEITHER, profile()),
        ]
        for label, lv_speed in traces:
            for track in build_platoon(
                rng,
                config,
                label,
                lv_speed,
                first_id=3 * platoon + 1,
                lane_id=platoon + 2,
                forward=platoon % 2 == 0,
            ):
                tracks[track.vehicle_id] = track
            platoon += 1

    meta = RecordingMeta(
        recording_id=recording_id,
        frame_rate_hz=config.frame_rate_hz,
        duration_s=n_frames / config.frame_rate_hz,
    )
    return RecordingBundle(meta=meta, tracks=tracks)


def generate_fixtures(config: FixtureConfig, directory: PathLike, seed: int) -> List[int]:
    """
    Write ``config.n_recordings`` synthetic recordings in the highD schema.

    Returns:
        Ids of the written recordings, starting at 1
    """
    ids = list(range(1, config.n_recordings + 1))
    for rid in ids:
        bundle = generate_recording(config, rid, seed)
        write_recording(bundle, directory)
    logger.info(
        f"Wrote {len(ids)} synthetic recordings with "
        f"{3 * config.platoons_per_condition} platoons each to {directory}"
    )
    return ids


def scripted_segments(
    n_segments: int,
    target_gap: float,
    seed: int,
    label: SegmentLabel = SegmentLabel.TAILGATED,
    fv_gap: Optional[float] = None,
    duration_s: float = 12.0,
    frame_rate_hz: float = 25.0,
    speed_range: Tuple[float, float] = (15.0, 30.0),
    amplitude: float = 2.0,
    lv_length: float = 4.5,
    k_gap: float = 0.5,
    k_speed: float = 0.6,
) -> List[CFSegment]:
    """
    Expert segments built directly, without going through CSV files.

    Each segment is a scripted constant-time-gap ego behind a fresh LV
    profile; the FV sits at a constant ``fv_gap`` (default 0.8 s for
    Tailgated, 3.5 s for Gapped, 2.0 s otherwise).
    """
    if fv_gap is None:
        fv_gap = {SegmentLabel.TAILGATED: 0.8, SegmentLabel.GAPPED: 3.5}.get(label, 2.0)
    rng = np.random.default_rng(seed)
    dt = 1.0 / frame_rate_hz
    n_frames = int(round(duration_s * frame_rate_hz))
    segments = []
    for k in range(n_segments):
        base = rng.uniform(*speed_range)
        lv_speed = lv_speed_profile(rng, n_frames, dt, base, amplitude)
        ego_speed, ego_accel, spacing = follow(lv_speed, dt, target_gap, k_gap, k_speed)
        segments.append(
            CFSegment(
                recording_id=0,
                lv_id=3 * k + 1,
                ego_id=3 * k + 2,
                fv_id=3 * k + 3,
                frame_lo=0,
                frame_hi=n_frames - 1,
                frame_rate_hz=frame_rate_hz,
                lv_length=lv_length,
                label=label,
                lv_speed=lv_speed,
                ego_speed=ego_speed,
                ego_accel=ego_accel,
                spacing=spacing,
                rel_speed=lv_speed - ego_speed,
                fv_time_gap=np.full(n_frames, fv_gap),
            )
        )
    return segments
