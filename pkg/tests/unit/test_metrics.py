"""
Unit tests for behavior metrics and paired comparisons.
"""

import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from cfpp.errors import DomainError
from cfpp.metrics import (
    METRICS,
    build_comparison_table,
    drac_series,
    paired_t_test,
    population_stats,
    safety_metrics,
    segment_metrics,
    speed_fluctuation_metrics,
    t_two_tailed_p,
    time_headway_series,
)
from cfpp.models import DTWResult, SegmentLabel, SegmentPair


def make_pair(make_segment, tailgated_speed, gapped_speed, ego_id):
    dtw = DTWResult(distance=0.0, path_length=1, normalized_distance=0.0)
    return SegmentPair(
        tailgated=make_segment(SegmentLabel.TAILGATED, ego_speed=tailgated_speed, ego_id=ego_id),
        gapped=make_segment(SegmentLabel.GAPPED, ego_speed=gapped_speed, ego_id=ego_id + 100),
        dtw=dtw,
    )


class TestSpeedFluctuation:
    """Test speed_fluctuation_metrics function."""

    def test_linear_series(self):
        """Test std, mean absolute deviation and CV of 1..5."""
        m = speed_fluctuation_metrics([1.0, 2.0, 3.0, 4.0, 5.0])
        assert m.std == pytest.approx(1.58114, abs=1e-5)
        assert m.dmean == pytest.approx(1.2)
        assert m.cv == pytest.approx(52.705, abs=1e-3)

    def test_volatility_of_log_returns(self):
        """Test that up-then-down gives the spread of +/- ln 2 in percent."""
        m = speed_fluctuation_metrics([1.0, 2.0, 1.0])
        assert m.vf == pytest.approx(100.0 * math.log(2.0) * math.sqrt(2.0))
        assert m.vf == pytest.approx(98.026, abs=1e-3)

    def test_constant_growth_has_no_volatility(self):
        """Test that equal log returns give zero volatility."""
        assert speed_fluctuation_metrics([1.0, 2.0, 4.0, 8.0]).vf == pytest.approx(0.0, abs=1e-12)

    def test_constant_speed(self):
        """Test that a constant speed has no fluctuation at all."""
        m = speed_fluctuation_metrics(np.full(10, 22.0))
        assert (m.std, m.dmean, m.cv, m.vf) == (0.0, 0.0, 0.0, 0.0)

    def test_two_speeds_single_return(self):
        """Test that a single log return gives zero volatility."""
        assert speed_fluctuation_metrics([10.0, 12.0]).vf == 0.0

    def test_too_short(self):
        """Test that one speed is not enough."""
        with pytest.raises(DomainError, match="at least 2"):
            speed_fluctuation_metrics([10.0])

    def test_non_positive_speed(self):
        """Test that log returns need positive speeds."""
        with pytest.raises(DomainError, match="positive"):
            speed_fluctuation_metrics([10.0, 0.0, 5.0])


class TestSafety:
    """Test headway and DRAC."""

    def test_time_headway(self):
        """Test spacing over follower speed."""
        np.testing.assert_allclose(time_headway_series([40.0, 30.0], [20.0, 15.0]), [2.0, 2.0])

    def test_drac_closing(self):
        """Test DRAC while the ego is faster than the LV."""
        drac = drac_series([30.0], [20.0], [100.0], lv_length=5.0)
        assert drac[0] == pytest.approx(100.0 / 190.0)

    def test_drac_zero_when_opening(self):
        """Test that DRAC is 0 when the gap is not closing."""
        np.testing.assert_array_equal(drac_series([20.0, 15.0], [20.0, 20.0], [50.0, 50.0], 5.0), [0.0, 0.0])

    def test_drac_rejects_overlap(self):
        """Test that a non-positive bumper gap is outside the domain."""
        with pytest.raises(DomainError, match="bumper gap"):
            drac_series([30.0], [20.0], [5.0], lv_length=5.0)

    def test_segment_safety(self, make_segment):
        """Test that zero DRAC frames count towards the mean."""
        segment = make_segment(ego_speed=[30.0, 20.0], lv_speed=[20.0, 20.0], spacing=[100.0, 40.0])
        metrics = safety_metrics(segment)
        assert metrics.mean_thw == pytest.approx((100.0 / 30.0 + 2.0) / 2.0)
        assert metrics.max_drac == pytest.approx(100.0 / 190.0)
        assert metrics.mean_drac == pytest.approx(50.0 / 190.0)


class TestPairedTTest:
    """Test paired_t_test and the t distribution tail."""

    def test_known_values(self):
        """Test the doubled sample against the original one."""
        result = paired_t_test([2.0, 4.0, 6.0, 8.0, 10.0], [1.0, 2.0, 3.0, 4.0, 5.0])
        assert result.t_stat == pytest.approx(4.24264, abs=1e-5)
        assert result.df == 4
        assert result.p_value == pytest.approx(0.0132, abs=1e-4)
        assert result.mean_delta_pct == pytest.approx(100.0)
        assert not result.degenerate

    def test_matches_scipy(self):
        """Test against scipy's paired t-test on random data."""
        rng = np.random.default_rng(3)
        a = rng.normal(10.0, 2.0, 12)
        b = a + rng.normal(0.5, 1.0, 12)
        expected = stats.ttest_rel(a, b)
        result = paired_t_test(a, b)
        assert result.t_stat == pytest.approx(expected.statistic, rel=1e-10)
        assert result.p_value == pytest.approx(expected.pvalue, rel=1e-8)

    @pytest.mark.parametrize("t_stat,df", [(0.3, 1), (1.96, 10), (-2.5, 7), (4.0, 30), (8.0, 3)])
    def test_tail_matches_mpmath(self, t_stat, df):
        """Test the two-tailed p-value against a high-precision integral."""
        mpmath.mp.dps = 30
        x = mpmath.mpf(df) / (df + mpmath.mpf(t_stat) ** 2)
        expected = mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, x, regularized=True)
        assert t_two_tailed_p(t_stat, df) == pytest.approx(float(expected), rel=1e-9)

    @pytest.mark.parametrize("df", range(2, 51))
    def test_p_value_matches_mpmath_oracle(self, df):
        """Test t and p on random pairs against a 30-digit computation from the raw differences."""
        rng = np.random.default_rng(df)
        a = rng.normal(20.0, 3.0, df + 1)
        b = a + rng.normal(0.4, 1.5, df + 1)
        result = paired_t_test(a, b)

        mpmath.mp.dps = 30
        d = [mpmath.mpf(float(x)) - mpmath.mpf(float(y)) for x, y in zip(a, b)]
        n = len(d)
        mean = mpmath.fsum(d) / n
        sd = mpmath.sqrt(mpmath.fsum((x - mean) ** 2 for x in d) / (n - 1))
        t = mean / (sd / mpmath.sqrt(n))
        expected = mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, df / (df + t**2), regularized=True)

        assert result.df == df
        assert result.t_stat == pytest.approx(float(t), rel=1e-9)
        assert abs(result.p_value - float(expected)) <= 1e-6

    def test_identical_samples(self):
        """Test that identical samples give t = 0 and p = 1."""
        result = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (result.t_stat, result.p_value, result.degenerate) == (0.0, 1.0, False)

    def test_constant_nonzero_difference(self):
        """Test that a constant shift is flagged as degenerate."""
        result = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert result.t_stat == math.inf
        assert result.p_value == 0.0
        assert result.degenerate
        negative = paired_t_test([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
        assert negative.t_stat == -math.inf

    def test_zero_reference_mean(self):
        """Test that the relative difference is NaN when mean(b) is 0."""
        result = paired_t_test([1.0, 2.0], [-1.0, 1.0])
        assert math.isnan(result.mean_delta_pct)
        assert 0.0 <= result.p_value <= 1.0

    def test_antisymmetric(self):
        """Test that swapping the samples flips t and keeps p."""
        a = [3.0, 5.0, 4.0, 8.0]
        b = [1.0, 4.0, 4.5, 6.0]
        forward = paired_t_test(a, b)
        backward = paired_t_test(b, a)
        assert forward.t_stat == pytest.approx(-backward.t_stat)
        assert forward.p_value == pytest.approx(backward.p_value)

    def test_length_mismatch(self):
        """Test that paired samples need the same length."""
        with pytest.raises(DomainError, match="differ in length"):
            paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_too_few_pairs(self):
        """Test that one pair cannot be tested."""
        with pytest.raises(DomainError, match="at least 2 pairs"):
            paired_t_test([1.0], [2.0])


class TestComparisonTable:
    """Test build_comparison_table function."""

    def test_rows_follow_paired_tests(self, make_segment):
        """Test that each row carries the paired test of that metric."""
        rng = np.random.default_rng(0)
        pairs = [
            make_pair(make_segment, 20.0 + rng.normal(0, 1.0, 40), 20.0 + rng.normal(0, 0.3, 40), ego_id=k)
            for k in range(2, 8)
        ]
        table = build_comparison_table(pairs)
        assert table.n_pairs == 6
        assert [row.metric for row in table.rows] == [name for name, _, _, _ in METRICS]

        tailgated = [segment_metrics(p.tailgated)["V_sd"] for p in pairs]
        gapped = [segment_metrics(p.gapped)["V_sd"] for p in pairs]
        expected = paired_t_test(tailgated, gapped)
        row = table.row("V_sd")
        assert row.p_value == pytest.approx(expected.p_value)
        assert row.delta_pct == pytest.approx(expected.mean_delta_pct)
        assert row.significant == (expected.p_value < 0.05)
        assert row.tailgated == population_stats(tailgated)
        assert row.unit == "m/s"
        assert table.row("Mean DRAC").group == "Driving safety"

    def test_single_pair_has_no_p_value(self, make_segment):
        """Test that one pair is summarised without a test."""
        pair = make_pair(make_segment, [20.0, 21.0, 20.5], [20.0, 20.2, 20.1], ego_id=2)
        table = build_comparison_table([pair])
        assert all(row.p_value is None and not row.significant for row in table.rows)
        assert table.row("V_sd").tailgated.sd == 0.0

    def test_empty_pairs(self):
        """Test that at least one pair is needed."""
        with pytest.raises(DomainError, match="empty"):
            build_comparison_table([])

    def test_unknown_metric(self, make_segment):
        """Test that row lookup by an unknown name raises KeyError."""
        pair = make_pair(make_segment, [20.0, 21.0, 20.5], [20.0, 20.2, 20.1], ego_id=2)
        with pytest.raises(KeyError):
            build_comparison_table([pair]).row("TTC")
