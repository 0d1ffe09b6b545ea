"""
Shared pytest fixtures for all tests.

This module provides common fixtures used across unit, property, and integration tests.
"""

from typing import Optional

import numpy as np
import pytest

import cfpp.config as config_module
from cfpp.config import FixtureConfig, TrainingConfig
from cfpp.models import (
    NO_VEHICLE,
    CFSegment,
    ExtractionCriteria,
    RecordingBundle,
    RecordingMeta,
    SegmentLabel,
    Track,
)


@pytest.fixture(autouse=True)
def reset_global_config():
    """Leave no process-wide configuration behind between tests."""
    yield
    config_module._config = None


@pytest.fixture
def criteria():
    """Default extraction criteria (100 m, 10 km/h, 10 s, 1 s / 3 s)."""
    return ExtractionCriteria()


def build_track(
    vehicle_id: int,
    x: np.ndarray,
    speed: np.ndarray,
    lane: int = 2,
    preceding: int = NO_VEHICLE,
    following: int = NO_VEHICLE,
    length: float = 4.5,
    first_frame: int = 0,
    accel: Optional[np.ndarray] = None,
) -> Track:
    n = len(x)
    return Track(
        vehicle_id=vehicle_id,
        length=length,
        width=1.9,
        frame=np.arange(first_frame, first_frame + n),
        x=x,
        y=np.full(n, 5.25),
        speed=speed,
        accel=np.zeros(n) if accel is None else accel,
        lane_id=np.full(n, lane),
        preceding_id=np.full(n, preceding),
        following_id=np.full(n, following),
    )


@pytest.fixture
def make_track():
    """Factory for single tracks with constant lane and neighbours."""
    return build_track


def build_platoon_bundle(
    n_frames: int = 300,
    speed: float = 20.0,
    lv_gap: float = 50.0,
    fv_gap: float = 0.8,
    ego_speed: Optional[float] = None,
    frame_rate_hz: float = 25.0,
    lv_length: float = 5.0,
) -> RecordingBundle:
    """LV (id 1), ego (id 2) and FV (id 3) in one lane at constant speeds."""
    ego_speed = speed if ego_speed is None else ego_speed
    t = np.arange(n_frames) / frame_rate_hz
    ego_x = 200.0 + ego_speed * t
    lv_x = ego_x + lv_gap
    fv_x = ego_x - fv_gap * ego_speed
    tracks = {
        1: build_track(1, lv_x, np.full(n_frames, speed), following=2, length=lv_length),
        2: build_track(2, ego_x, np.full(n_frames, ego_speed), preceding=1, following=3),
        3: build_track(3, fv_x, np.full(n_frames, ego_speed), preceding=2),
    }
    meta = RecordingMeta(recording_id=1, frame_rate_hz=frame_rate_hz, duration_s=n_frames / frame_rate_hz)
    return RecordingBundle(meta=meta, tracks=tracks)


@pytest.fixture
def platoon_bundle():
    """Factory for a hand-built LV/ego/FV recording."""
    return build_platoon_bundle


def build_segment(
    label: SegmentLabel = SegmentLabel.TAILGATED,
    ego_speed=None,
    lv_speed=None,
    spacing=None,
    n: int = 50,
    ego_id: int = 2,
    recording_id: int = 1,
    lv_length: float = 5.0,
    fv_gap: Optional[float] = None,
) -> CFSegment:
    """Segment from explicit series; missing series default to a steady 20 m/s platoon."""
    ego_speed = np.full(n, 20.0) if ego_speed is None else np.asarray(ego_speed, dtype=float)
    n = len(ego_speed)
    lv_speed = np.full(n, 20.0) if lv_speed is None else np.asarray(lv_speed, dtype=float)
    spacing = np.full(n, 40.0) if spacing is None else np.asarray(spacing, dtype=float)
    if fv_gap is None:
        fv_gap = {SegmentLabel.TAILGATED: 0.8, SegmentLabel.GAPPED: 3.5}.get(label, 2.0)
    return CFSegment(
        recording_id=recording_id,
        lv_id=ego_id - 1,
        ego_id=ego_id,
        fv_id=ego_id + 1,
        frame_lo=0,
        frame_hi=n - 1,
        frame_rate_hz=25.0,
        lv_length=lv_length,
        label=label,
        lv_speed=lv_speed,
        ego_speed=ego_speed,
        ego_accel=np.zeros(n),
        spacing=spacing,
        rel_speed=lv_speed - ego_speed,
        fv_time_gap=np.full(n, fv_gap),
    )


@pytest.fixture
def make_segment():
    """Factory for segments built from explicit series."""
    return build_segment


@pytest.fixture
def small_fixture_config():
    """Synthetic recordings small enough for unit tests."""
    return FixtureConfig(n_recordings=1, platoons_per_condition=2, duration_s=12.0)


@pytest.fixture
def tiny_training_config():
    """A few short epochs; enough to exercise every code path quickly."""
    return TrainingConfig(
        epochs=2,
        transitions_per_epoch=64,
        disc_steps=2,
        disc_batch_size=32,
        ppo_epochs=2,
        minibatch_size=32,
        hidden=(8, 8),
        max_episode_steps=20,
        holdout_fraction=0.25,
        log_every=1,
    )
