"""
Dynamic time warping of LV speed profiles and tailgated/gapped pairing.

The accumulated-cost matrix is filled one anti-diagonal at a time: every
cell of a diagonal depends only on the two previous diagonals, so each
cell receives exactly the same floating-point operations as the scalar
recursion.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from cfpp.errors import DomainError
from cfpp.models import CFSegment, DTWResult, SegmentLabel, SegmentPair


logger = logging.getLogger(__name__)

DistanceFn = Callable[[CFSegment, CFSegment], DTWResult]


def _as_series(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError(f"sequence '{name}' is empty")
    return arr


def accumulated_cost(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """
    Accumulated cost matrix with a zero origin and infinite borders.

    ``D[i, j]`` (1-based) is the minimum cumulative |x - y| cost of
    aligning ``x[:i]`` with ``y[:j]``; row 0 and column 0 are padding.
    """
    x = _as_series(x, "x")
    y = _as_series(y, "y")
    n, m = len(x), len(y)
    cost = np.abs(x[:, None] - y[None, :])
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for k in range(2, n + m + 1):
        i = np.arange(max(1, k - m), min(n, k - 1) + 1)
        j = k - i
        D[i, j] = cost[i - 1, j - 1] + np.minimum(
            np.minimum(D[i - 1, j - 1], D[i - 1, j]), D[i, j - 1]
        )
    return D


def _backtrack(D: np.ndarray) -> List[Tuple[int, int]]:
    i, j = D.shape[0] - 1, D.shape[1] - 1
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        # tie order: diagonal, up, left
        best_i, best_j = i - 1, j - 1
        best = D[best_i, best_j]
        if D[i - 1, j] < best:
            best_i, best_j, best = i - 1, j, D[i - 1, j]
        if D[i, j - 1] < best:
            best_i, best_j = i, j - 1
        i, j = best_i, best_j
        path.append((i - 1, j - 1))
    path.reverse()
    return path


def warping_path(x: Sequence[float], y: Sequence[float]) -> List[Tuple[int, int]]:
    """Optimal alignment as 0-based (i, j) index pairs from start to end."""
    return _backtrack(accumulated_cost(x, y))


def dtw_distance(x: Sequence[float], y: Sequence[float]) -> DTWResult:
    """
    DTW distance between two scalar series with d = |x_i - y_j|.

    Args:
        x: First series, non-empty
        y: Second series, non-empty

    Returns:
        DTWResult with D(n, m), the optimal path length and their ratio

    Raises:
        DomainError: If either series is empty

    Example:
        >>> dtw_distance([1, 3], [1, 2, 3]).distance
        1.0
    """
    D = accumulated_cost(x, y)
    path_length = len(_backtrack(D))
    distance = float(D[-1, -1])
    return DTWResult(
        distance=distance,
        path_length=path_length,
        normalized_distance=distance / path_length,
    )


def _lv_profile_distance(tailgated: CFSegment, gapped: CFSegment) -> DTWResult:
    return dtw_distance(tailgated.lv_speed, gapped.lv_speed)


def _dtw_args(args: Tuple[np.ndarray, np.ndarray]) -> DTWResult:
    return dtw_distance(*args)


def pair_segments(
    tailgated_pool: Sequence[CFSegment],
    gapped_pool: Sequence[CFSegment],
    max_normalized_distance: float = 1.0,
    distance_fn: Optional[DistanceFn] = None,
    max_workers: int = 1,
) -> List[SegmentPair]:
    """
    Greedily pair tailgated with gapped segments by LV speed similarity.

    All cross-pool candidates are sorted by normalized DTW distance and
    accepted in that order when both members are still free and the
    distance is within the threshold.

    Args:
        tailgated_pool: Segments labelled Tailgated
        gapped_pool: Segments labelled Gapped
        max_normalized_distance: Acceptance threshold (m/s per path cell)
        distance_fn: Optional replacement for the LV-profile DTW distance
        max_workers: Processes for the distance matrix (default distance only)

    Returns:
        Accepted pairs ordered by normalized distance

    Raises:
        ValueError: If the threshold is not positive or the pools overlap
    """
    if max_normalized_distance <= 0:
        raise ValueError("max_normalized_distance must be positive")
    if not tailgated_pool or not gapped_pool:
        return []
    overlap = {s.key for s in tailgated_pool} & {s.key for s in gapped_pool}
    if overlap:
        raise ValueError(f"pools are not disjoint: {sorted(overlap)[:3]}")
    for segment in tailgated_pool:
        if segment.label != SegmentLabel.TAILGATED:
            raise ValueError(f"segment {segment.key} in tailgated pool is {segment.label.value}")
    for segment in gapped_pool:
        if segment.label != SegmentLabel.GAPPED:
            raise ValueError(f"segment {segment.key} in gapped pool is {segment.label.value}")

    index = [(ti, gi) for ti in range(len(tailgated_pool)) for gi in range(len(gapped_pool))]
    if distance_fn is None and max_workers > 1:
        jobs = [(tailgated_pool[ti].lv_speed, gapped_pool[gi].lv_speed) for ti, gi in index]
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_dtw_args, jobs, chunksize=16))
    else:
        fn = distance_fn or _lv_profile_distance
        results = [fn(tailgated_pool[ti], gapped_pool[gi]) for ti, gi in index]

    order = sorted(
        range(len(index)), key=lambda k: (results[k].normalized_distance, index[k])
    )
    used_t, used_g = set(), set()
    pairs: List[SegmentPair] = []
    for k in order:
        result = results[k]
        if result.normalized_distance > max_normalized_distance:
            break
        ti, gi = index[k]
        if ti in used_t or gi in used_g:
            continue
        used_t.add(ti)
        used_g.add(gi)
        pairs.append(
            SegmentPair(tailgated=tailgated_pool[ti], gapped=gapped_pool[gi], dtw=result)
        )
    logger.info(
        f"Paired {len(pairs)} of {len(tailgated_pool)} tailgated / {len(gapped_pool)} gapped "
        f"segments (threshold {max_normalized_distance})"
    )
    return pairs
