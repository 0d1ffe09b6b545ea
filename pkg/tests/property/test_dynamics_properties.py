"""
Property tests for the kinematic update and direction normalization.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfpp.env import advance
from cfpp.ingest import normalize_direction
from cfpp.models import RecordingBundle, RecordingMeta, Track

speed = st.floats(min_value=0.0, max_value=40.0)
accel = st.floats(min_value=-6.0, max_value=4.0)
interval = st.floats(min_value=0.01, max_value=1.0)


def moving_track(vehicle_id, start, velocity, n=20):
    t = np.arange(n) * 0.04
    return Track(
        vehicle_id=vehicle_id,
        length=4.5,
        width=1.9,
        frame=np.arange(n),
        x=start + velocity * t,
        y=np.full(n, 5.25),
        speed=np.full(n, velocity),
        accel=np.zeros(n),
        lane_id=np.full(n, 2),
        preceding_id=np.zeros(n, dtype=int),
        following_id=np.zeros(n, dtype=int),
    )


class TestAdvanceProperties:
    """Test advance function."""

    @given(st.floats(min_value=0.0, max_value=200.0), speed, speed, accel, interval, speed)
    def test_spacing_balance(self, dy, v_e, v_l, a, dt, v_l_next):
        """Test that the spacing change equals LV travel minus ego travel."""
        dy_next, v_e_next = advance(dy, v_e, v_l, a, dt, v_l_next)
        assert v_e_next >= 0.0
        lv_travel = 0.5 * (v_l + v_l_next) * dt
        ego_travel = 0.5 * (v_e + v_e_next) * dt
        assert dy_next - dy == pytest.approx(lv_travel - ego_travel, abs=1e-9)

    @given(st.floats(min_value=5.0, max_value=200.0), speed, interval)
    def test_matched_speeds_keep_spacing(self, dy, v, dt):
        """Test that equal, steady speeds leave the spacing unchanged."""
        dy_next, v_next = advance(dy, v, v, 0.0, dt, v)
        assert v_next == v
        assert dy_next == pytest.approx(dy, abs=1e-12)


class TestNormalizeDirectionProperties:
    """Test normalize_direction function."""

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0.0, max_value=400.0),
                st.floats(min_value=1.0, max_value=40.0),
                st.booleans(),
            ),
            min_size=1,
            max_size=6,
        )
    )
    @settings(deadline=None)
    def test_idempotent_and_forward(self, specs):
        """Test that normalized tracks all move forward and a second pass is a no-op."""
        tracks = {
            k + 1: moving_track(k + 1, start, -velocity if backward else velocity)
            for k, (start, velocity, backward) in enumerate(specs)
        }
        bundle = RecordingBundle(
            meta=RecordingMeta(recording_id=1, frame_rate_hz=25.0, duration_s=1.0), tracks=tracks
        )
        once = normalize_direction(bundle)
        assert all(np.all(t.speed > 0) for t in once.tracks.values())
        assert normalize_direction(once) is once
        for vid, track in once.tracks.items():
            original = tracks[vid]
            np.testing.assert_allclose(np.diff(track.x), np.abs(np.diff(original.x)), atol=1e-9)
