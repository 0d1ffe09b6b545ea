"""
Driving-behavior metrics and paired comparisons.

Speed fluctuation (standard deviation, mean absolute deviation,
coefficient of variation, log-return volatility) is computed on the ego
speed series of a segment; driving safety on its time headway to the LV
and its deceleration rate to avoid a crash (DRAC). Tailgated and gapped
populations are compared pair by pair with two-tailed paired t-tests.
"""

import logging
import math
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import betainc

from cfpp.errors import DomainError
from cfpp.models import (
    CFSegment,
    ComparisonRow,
    ComparisonTable,
    FluctuationMetrics,
    PairedTestResult,
    PopulationStats,
    SafetyMetrics,
    SegmentPair,
)


logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05


def _series(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def speed_fluctuation_metrics(speeds: Sequence[float]) -> FluctuationMetrics:
    """
    Fluctuation metrics of a speed series.

    Args:
        speeds: Speeds in m/s, at least 2 values, all positive

    Returns:
        FluctuationMetrics with the sample standard deviation, the mean
        absolute deviation (n denominator), the coefficient of variation
        in percent and the sample standard deviation of the percentage
        log returns

    Raises:
        DomainError: If fewer than 2 speeds are given or any speed is <= 0

    Example:
        >>> m = speed_fluctuation_metrics([1, 2, 3, 4, 5])
        >>> round(m.std, 5), m.dmean, round(m.cv, 3)
        (1.58114, 1.2, 52.705)
    """
    v = _series(speeds, "speeds")
    if len(v) < 2:
        raise DomainError(f"need at least 2 speeds, got {len(v)}")
    if np.any(v <= 0):
        raise DomainError("speeds must be positive for log returns")
    mean = v.mean()
    std = v.std(ddof=1)
    returns = np.log(v[1:] / v[:-1]) * 100.0
    # a single return has no spread
    vf = returns.std(ddof=1) if len(returns) >= 2 else 0.0
    return FluctuationMetrics(
        std=float(std),
        dmean=float(np.mean(np.abs(v - mean))),
        cv=float(std / abs(mean) * 100.0),
        vf=float(vf),
    )


def time_headway_series(spacing: Sequence[float], follower_speed: Sequence[float]) -> np.ndarray:
    """Head-to-head spacing divided by the follower's speed, per frame."""
    spacing = _series(spacing, "spacing")
    speed = _series(follower_speed, "follower_speed")
    if np.any(speed <= 0):
        raise DomainError("follower speed must be positive for time headway")
    return spacing / speed


def drac_series(
    ego_speed: Sequence[float],
    lv_speed: Sequence[float],
    spacing: Sequence[float],
    lv_length: float,
) -> np.ndarray:
    """
    Deceleration rate to avoid a crash, per frame.

    ``(V_E - V_L)^2 / (2 (X_L - X_E - L))`` while the ego is faster than
    the LV, 0 otherwise.

    Raises:
        DomainError: If the bumper-to-bumper gap is not positive at some frame
    """
    ve = _series(ego_speed, "ego_speed")
    vl = _series(lv_speed, "lv_speed")
    gap = _series(spacing, "spacing") - lv_length
    if np.any(gap <= 0):
        bad = int(np.flatnonzero(gap <= 0)[0])
        raise DomainError(f"non-positive bumper gap {gap[bad]:.3f} m at index {bad}")
    closing = ve > vl
    drac = np.zeros_like(ve)
    drac[closing] = (ve[closing] - vl[closing]) ** 2 / (2.0 * gap[closing])
    return drac


def safety_metrics(segment: CFSegment) -> SafetyMetrics:
    """
    Mean time headway to the LV and mean/peak DRAC of one segment.

    Zero DRAC frames count towards the mean.
    """
    thw = time_headway_series(segment.spacing, segment.ego_speed)
    drac = drac_series(segment.ego_speed, segment.lv_speed, segment.spacing, segment.lv_length)
    return SafetyMetrics(
        mean_thw=float(thw.mean()),
        mean_drac=float(drac.mean()),
        max_drac=float(drac.max()),
    )


def t_two_tailed_p(t_stat: float, df: int) -> float:
    """
    Two-tailed p-value of Student's t with ``df`` degrees of freedom.

    Uses ``P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)``.
    """
    if math.isinf(t_stat):
        return 0.0
    x = df / (df + t_stat * t_stat)
    return float(min(1.0, max(0.0, betainc(0.5 * df, 0.5, x))))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTestResult:
    """
    Two-tailed paired t-test of ``a`` against ``b``.

    Args:
        a: First sample, one value per pair
        b: Second sample, same length, at least 2

    Returns:
        PairedTestResult; ``mean_delta_pct`` is ``(mean(a) - mean(b)) /
        mean(b) * 100`` and NaN when ``mean(b)`` is 0

    Raises:
        DomainError: If lengths differ or fewer than 2 pairs are given

    Example:
        >>> r = paired_t_test([2, 4, 6, 8, 10], [1, 2, 3, 4, 5])
        >>> round(r.t_stat, 5), r.df, round(r.p_value, 4)
        (4.24264, 4, 0.0132)
    """
    a = _series(a, "a")
    b = _series(b, "b")
    if len(a) != len(b):
        raise DomainError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise DomainError(f"paired t-test needs at least 2 pairs, got {n}")

    d = a - b
    mean_d = d.mean()
    sd_d = d.std(ddof=1)
    df = n - 1

    mean_b = b.mean()
    if mean_b == 0:
        logger.warning("Mean of the reference sample is 0; relative difference is undefined")
        delta = float("nan")
    else:
        delta = float((a.mean() - mean_b) / mean_b * 100.0)

    degenerate = False
    if sd_d == 0:
        if mean_d == 0:
            t_stat, p = 0.0, 1.0
        else:
            t_stat, p, degenerate = math.copysign(math.inf, mean_d), 0.0, True
    else:
        t_stat = float(mean_d / (sd_d / math.sqrt(n)))
        p = t_two_tailed_p(t_stat, df)

    return PairedTestResult(
        t_stat=t_stat, df=df, p_value=p, mean_delta_pct=delta, degenerate=degenerate
    )


# name, unit, group, extractor
METRICS: List[Tuple[str, str, str, Callable[[FluctuationMetrics, SafetyMetrics], float]]] = [
    ("V_sd", "m/s", "Speed fluctuation", lambda f, s: f.std),
    ("D_mean", "m/s", "Speed fluctuation", lambda f, s: f.dmean),
    ("C_v", "%", "Speed fluctuation", lambda f, s: f.cv),
    ("V_f", "%", "Speed fluctuation", lambda f, s: f.vf),
    ("Mean THW", "s", "Driving safety", lambda f, s: s.mean_thw),
    ("Mean DRAC", "m/s^2", "Driving safety", lambda f, s: s.mean_drac),
]


def segment_metrics(segment: CFSegment) -> Dict[str, float]:
    """Every comparison metric of one segment, keyed by metric name."""
    fluctuation = speed_fluctuation_metrics(segment.ego_speed)
    safety = safety_metrics(segment)
    return {name: extract(fluctuation, safety) for name, _, _, extract in METRICS}


def population_stats(values: Sequence[float]) -> PopulationStats:
    """Max, min, mean and sample standard deviation (0 for one value)."""
    v = np.asarray(values, dtype=float)
    return PopulationStats(
        max=float(v.max()),
        min=float(v.min()),
        mean=float(v.mean()),
        sd=float(v.std(ddof=1)) if len(v) >= 2 else 0.0,
    )


def build_comparison_table(
    pairs: Sequence[SegmentPair],
    alpha: float = SIGNIFICANCE_LEVEL,
) -> ComparisonTable:
    """
    Compare tailgated and gapped segments metric by metric.

    Args:
        pairs: Accepted segment pairs, at least one
        alpha: Significance level of the mark (default 0.05)

    Returns:
        ComparisonTable with one row per metric; with a single pair the
        rows carry no p-value

    Raises:
        DomainError: If ``pairs`` is empty
    """
    if not pairs:
        raise DomainError("cannot compare an empty set of pairs")

    tailgated = [segment_metrics(p.tailgated) for p in pairs]
    gapped = [segment_metrics(p.gapped) for p in pairs]
    if len(pairs) < 2:
        logger.warning("Only one pair; paired t-tests are skipped")

    rows = []
    for name, unit, group, _ in METRICS:
        t_values = np.array([m[name] for m in tailgated])
        g_values = np.array([m[name] for m in gapped])
        p_value = None
        degenerate = False
        if len(pairs) >= 2:
            test = paired_t_test(t_values, g_values)
            p_value = test.p_value
            degenerate = test.degenerate
            delta = test.mean_delta_pct
        else:
            g_mean = g_values.mean()
            if g_mean == 0:
                logger.warning(f"Metric {name}: gapped mean is 0, relative difference undefined")
                delta = float("nan")
            else:
                delta = float((t_values.mean() - g_mean) / g_mean * 100.0)
        rows.append(
            ComparisonRow(
                metric=name,
                unit=unit,
                group=group,
                tailgated=population_stats(t_values),
                gapped=population_stats(g_values),
                delta_pct=delta,
                p_value=p_value,
                significant=p_value is not None and p_value < alpha,
                degenerate=degenerate,
            )
        )
    logger.info(f"Compared {len(pairs)} pairs over {len(rows)} metrics")
    return ComparisonTable(n_pairs=len(pairs), rows=rows)
