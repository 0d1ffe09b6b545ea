"""
Property tests for behavior metrics and the paired t-test.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cfpp.extraction import classify_gaps
from cfpp.metrics import drac_series, paired_t_test, speed_fluctuation_metrics, time_headway_series
from cfpp.models import ExtractionCriteria, SegmentLabel

positive_speeds = st.lists(st.floats(min_value=1.0, max_value=40.0), min_size=3, max_size=40)
samples = st.lists(st.floats(min_value=0.1, max_value=100.0), min_size=2, max_size=15)


class TestFluctuationProperties:
    """Test scaling behavior of speed_fluctuation_metrics."""

    @given(positive_speeds, st.floats(min_value=0.1, max_value=10.0))
    @settings(deadline=None)
    def test_scale_equivariance(self, speeds, scale):
        """Test that spread scales with the speeds while relative metrics do not change."""
        base = speed_fluctuation_metrics(speeds)
        scaled = speed_fluctuation_metrics(np.asarray(speeds) * scale)
        assert scaled.std == pytest.approx(base.std * scale, rel=1e-9, abs=1e-9)
        assert scaled.dmean == pytest.approx(base.dmean * scale, rel=1e-9, abs=1e-9)
        assert scaled.cv == pytest.approx(base.cv, rel=1e-9, abs=1e-9)
        assert scaled.vf == pytest.approx(base.vf, rel=1e-6, abs=1e-6)

    @given(st.floats(min_value=1.0, max_value=40.0), st.integers(min_value=2, max_value=30))
    def test_constant_speed_has_no_fluctuation(self, speed, n):
        """Test that a constant series scores zero everywhere."""
        m = speed_fluctuation_metrics(np.full(n, speed))
        assert (m.std, m.dmean, m.cv, m.vf) == pytest.approx((0.0, 0.0, 0.0, 0.0), abs=1e-9)


class TestPairedTTestProperties:
    """Test symmetry of paired_t_test."""

    @given(samples, st.data())
    @settings(deadline=None)
    def test_antisymmetric(self, a, data):
        """Test that swapping the samples negates t and keeps p."""
        b = data.draw(st.lists(st.floats(min_value=0.1, max_value=100.0), min_size=len(a), max_size=len(a)))
        assume(np.std(np.subtract(a, b)) > 1e-6)
        forward = paired_t_test(a, b)
        backward = paired_t_test(b, a)
        assert backward.t_stat == pytest.approx(-forward.t_stat)
        assert backward.p_value == pytest.approx(forward.p_value)
        assert 0.0 <= forward.p_value <= 1.0
        assert forward.df == len(a) - 1

    @given(samples, st.floats(min_value=-5.0, max_value=5.0))
    @settings(deadline=None)
    def test_shift_invariance(self, a, shift):
        """Test that adding the same constant to both samples keeps t."""
        rng = np.random.default_rng(len(a))
        b = np.asarray(a) + rng.normal(0.0, 1.0, len(a))
        assume(np.std(np.asarray(a) - b) > 1e-6)
        plain = paired_t_test(a, b)
        moved = paired_t_test(np.asarray(a) + shift, b + shift)
        assert moved.t_stat == pytest.approx(plain.t_stat, rel=1e-6, abs=1e-6)


class TestLabelProperties:
    """Test classify_gaps as a partition."""

    @given(st.lists(st.floats(min_value=0.0, max_value=6.0), min_size=1, max_size=50))
    def test_exactly_one_label(self, gaps):
        """Test that a gap series gets the label its extremes dictate."""
        criteria = ExtractionCriteria()
        label = classify_gaps(np.asarray(gaps), criteria)
        if max(gaps) <= criteria.tailgate_gap_max:
            assert label == SegmentLabel.TAILGATED
        elif min(gaps) >= criteria.gapped_gap_min:
            assert label == SegmentLabel.GAPPED
        else:
            assert label == SegmentLabel.NEITHER


def literal_fluctuation(v):
    n = len(v)
    mean = sum(v) / n
    std = math.sqrt(sum((x - mean) ** 2 for x in v) / (n - 1))
    dmean = sum(abs(x - mean) for x in v) / n
    returns = [100.0 * math.log(v[k + 1] / v[k]) for k in range(n - 1)]
    r_mean = sum(returns) / len(returns)
    vf = math.sqrt(sum((r - r_mean) ** 2 for r in returns) / (len(returns) - 1))
    return std, dmean, std / mean * 100.0, vf


class TestMetricOracle:
    """Test metrics against literal summations."""

    @given(positive_speeds)
    @settings(max_examples=100, deadline=None)
    def test_fluctuation(self, speeds):
        """Test every fluctuation metric against its textbook sum."""
        m = speed_fluctuation_metrics(speeds)
        expected = literal_fluctuation(speeds)
        assert (m.std, m.dmean, m.cv, m.vf) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=1.0, max_value=40.0),
                st.floats(min_value=1.0, max_value=40.0),
                st.floats(min_value=6.0, max_value=120.0),
            ),
            min_size=1,
            max_size=40,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_headway_and_drac(self, frames):
        """Test time headway and the two-case DRAC frame by frame."""
        ego, lv, spacing = (np.array(column) for column in zip(*frames))
        thw = time_headway_series(spacing, ego)
        drac = drac_series(ego, lv, spacing, lv_length=5.0)
        for k, (v_e, v_l, dy) in enumerate(frames):
            assert thw[k] == pytest.approx(dy / v_e, rel=1e-12)
            expected = (v_e - v_l) ** 2 / (2.0 * (dy - 5.0)) if v_e > v_l else 0.0
            assert drac[k] == pytest.approx(expected, rel=1e-9, abs=1e-12)
