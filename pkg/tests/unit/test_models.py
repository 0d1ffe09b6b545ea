"""
Unit tests for data models.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from cfpp.models import (
    CFSegment,
    CFState,
    DTWResult,
    Episode,
    ExtractionCriteria,
    Grid,
    SegmentLabel,
    SegmentPair,
    TrainReport,
)


class TestTrack:
    """Test Track model."""

    def test_arrays_are_read_only(self, make_track):
        """Test that per-frame series cannot be modified in place."""
        track = make_track(1, np.arange(5.0), np.full(5, 10.0))
        with pytest.raises(ValueError):
            track.x[0] = 100.0

    def test_non_contiguous_frames_rejected(self, make_track):
        """Test that a frame gap fails validation."""
        track = make_track(1, np.arange(3.0), np.full(3, 10.0))
        with pytest.raises(ValidationError, match="not contiguous"):
            type(track)(**{**track.model_dump(), "frame": [0, 1, 3]})

    def test_column_length_mismatch_rejected(self, make_track):
        """Test that columns must have one value per frame."""
        track = make_track(1, np.arange(3.0), np.full(3, 10.0))
        with pytest.raises(ValidationError, match="length mismatch"):
            type(track)(**{**track.model_dump(), "speed": [1.0, 2.0]})

    def test_frame_at_maps_zero_to_none(self, make_track):
        """Test that missing neighbours are exposed as None."""
        track = make_track(4, np.arange(3.0), np.full(3, 10.0), preceding=9, first_frame=10)
        frame = track.frame_at(11)
        assert frame.frame == 11
        assert frame.preceding_id == 9
        assert frame.following_id is None
        assert track.covers(10, 12)
        assert not track.covers(9, 12)

    def test_frame_at_outside_raises(self, make_track):
        """Test that reading outside the track raises IndexError."""
        track = make_track(4, np.arange(3.0), np.full(3, 10.0))
        with pytest.raises(IndexError):
            track.frame_at(3)


class TestCFSegment:
    """Test CFSegment model."""

    def test_derived_properties(self, make_segment):
        """Test key, frame count and duration."""
        segment = make_segment(n=251, ego_id=7, recording_id=3)
        assert segment.key == "3:7:0"
        assert segment.n_frames == 251
        assert segment.duration_s == pytest.approx(10.0)
        assert segment.dt == pytest.approx(0.04)

    def test_series_length_checked(self, make_segment):
        """Test that every cached series must cover the frame window."""
        segment = make_segment(n=10)
        data = segment.model_dump()
        data["spacing"] = np.full(9, 40.0)
        with pytest.raises(ValidationError, match="spacing"):
            CFSegment(**data)

    def test_json_roundtrip(self, make_segment):
        """Test that a segment survives JSON serialization."""
        segment = make_segment(ego_speed=np.linspace(18.0, 22.0, 20))
        restored = CFSegment.model_validate_json(segment.model_dump_json())
        assert restored.key == segment.key
        assert restored.label == segment.label
        np.testing.assert_array_equal(restored.ego_speed, segment.ego_speed)


class TestSegmentPair:
    """Test SegmentPair model."""

    def test_labels_enforced(self, make_segment):
        """Test that a pair needs one tailgated and one gapped member."""
        dtw = DTWResult(distance=0.0, path_length=1, normalized_distance=0.0)
        tailgated = make_segment(SegmentLabel.TAILGATED)
        gapped = make_segment(SegmentLabel.GAPPED, ego_id=5)
        SegmentPair(tailgated=tailgated, gapped=gapped, dtw=dtw)
        with pytest.raises(ValidationError, match="Tailgated"):
            SegmentPair(tailgated=gapped, gapped=tailgated, dtw=dtw)


class TestCFState:
    """Test CFState model."""

    def test_of_derives_relative_speed(self):
        """Test that dv_le is v_l - v_e."""
        state = CFState.of(30.0, 20.0, 15.0)
        assert state.dv_le == -5.0
        np.testing.assert_array_equal(state.as_array(), [30.0, 20.0, 15.0, -5.0])

    def test_inconsistent_relative_speed_rejected(self):
        """Test that dv_le must agree with the speeds."""
        with pytest.raises(ValidationError, match="dv_le"):
            CFState(dy_le=30.0, v_e=20.0, v_l=15.0, dv_le=1.0)

    def test_negative_ego_speed_rejected(self):
        """Test that the ego speed is non-negative."""
        with pytest.raises(ValidationError):
            CFState.of(30.0, -1.0, 15.0)


class TestEpisode:
    """Test Episode model."""

    def test_spacing_must_exceed_lv_length(self):
        """Test that an episode cannot start in collision."""
        with pytest.raises(ValidationError, match="LV length"):
            Episode(lv_speed_trace=[10.0, 10.0], lv_length=5.0, dt=0.04, initial=CFState.of(5.0, 10.0, 10.0))

    def test_n_steps(self):
        """Test that a trace of n samples gives n - 1 steps."""
        episode = Episode(lv_speed_trace=np.full(300, 10.0), lv_length=5.0, dt=0.04, initial=CFState.of(30.0, 10.0, 10.0))
        assert episode.n_steps == 299


class TestMiscModels:
    """Test criteria, grids and reports."""

    def test_criteria_defaults(self):
        """Test the default car-following thresholds."""
        criteria = ExtractionCriteria()
        assert criteria.max_lv_distance == 100.0
        assert criteria.min_speed == pytest.approx(2.7778, abs=1e-4)
        assert criteria.min_duration == 10.0

    def test_criteria_thresholds_ordered(self):
        """Test that the tailgated threshold must be below the gapped one."""
        with pytest.raises(ValidationError):
            ExtractionCriteria(tailgate_gap_max=3.0, gapped_gap_min=1.0)

    def test_grid_shape_checked(self):
        """Test that grid values must match the axes."""
        with pytest.raises(ValidationError, match="does not match"):
            Grid(row_label="r", col_label="c", row_centers=[0.0, 1.0], col_centers=[0.0], values=[[1.0, 2.0]])

    def test_train_report_epoch_count(self):
        """Test that a report cannot hold more epochs than configured."""
        record = {"epoch": 0, "disc_ce": 1.0, "mean_return": 0.0, "speed_loss": -1.0, "collisions": 0}
        with pytest.raises(ValidationError, match="more epoch records"):
            TrainReport(condition="Tailgated", configured_epochs=0, epochs=[record])
