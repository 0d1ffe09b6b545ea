"""
The car-following MDP: kinematic transition, LV-replay episodes, rollouts.

The environment is a pure kinematic map. Action bounds are the policy's
business; the only clamp applied here is the non-negative ego speed.
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from cfpp.models import CFSegment, CFState, Episode, Transition


logger = logging.getLogger(__name__)

Policy = Callable[[CFState, np.random.Generator], float]

DEFAULT_DT = 0.04


def advance(
    dy_le: float,
    v_e: float,
    v_l: float,
    a: float,
    dt: float,
    v_l_next: float,
) -> Tuple[float, float]:
    """
    Kinematic update of spacing and ego speed over one interval.

    Both vehicles move by the trapezoid rule over their speeds at the two
    ends of the interval; the ego speed is floored at 0.

    Returns:
        (dy_le', v_e')
    """
    v_e_next = max(0.0, v_e + a * dt)
    ego_disp = 0.5 * (v_e + v_e_next) * dt
    lv_disp = 0.5 * (v_l + v_l_next) * dt
    return dy_le + lv_disp - ego_disp, v_e_next


def step(s: CFState, a: float, dt: float, v_l_next: float, lv_length: float) -> Transition:
    """
    Apply acceleration ``a`` for ``dt`` seconds while the LV reaches ``v_l_next``.

    Args:
        s: Current state
        a: Ego acceleration (m/s^2), unbounded here
        dt: Interval (s), positive
        v_l_next: LV speed at the end of the interval (m/s)
        lv_length: LV length L used by the collision predicate (m)

    Returns:
        Transition whose ``collided`` flag is ``dy_le' - L <= 0``

    Example:
        >>> t = step(CFState.of(30.0, 10.0, 10.0), 2.0, 0.2, 10.0, 5.0)
        >>> round(t.s_next.v_e, 6), round(t.s_next.dy_le, 6)
        (10.4, 29.96)
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    dy_next, v_e_next = advance(s.dy_le, s.v_e, s.v_l, a, dt, v_l_next)
    s_next = CFState.of(dy_next, v_e_next, v_l_next)
    return Transition(s=s, a=a, s_next=s_next, collided=dy_next - lv_length <= 0)


def make_episode(segment: CFSegment, dt: Optional[float] = None) -> Episode:
    """
    Build an LV-replay episode from a segment, starting at its first frame.

    The recorded ego speeds, accelerations and spacing are attached so a
    rollout can be compared with what the driver actually did.
    """
    dt = segment.dt if dt is None else dt
    return Episode(
        lv_speed_trace=segment.lv_speed,
        lv_length=segment.lv_length,
        dt=dt,
        initial=CFState.of(
            float(segment.spacing[0]), float(segment.ego_speed[0]), float(segment.lv_speed[0])
        ),
        ego_speed_trace=segment.ego_speed,
        ego_accel_trace=segment.ego_accel,
        spacing_trace=segment.spacing,
        segment_key=segment.key,
    )


def rollout(
    policy: Policy,
    episode: Episode,
    seed: int,
    max_steps: Optional[int] = None,
) -> List[Transition]:
    """
    Drive the ego with ``policy`` along the episode's LV trace.

    Args:
        policy: Maps (state, rng) to an acceleration
        episode: LV replay
        seed: Seed of the generator handed to the policy
        max_steps: Optional cap on the number of transitions

    Returns:
        Transitions in order; the last one has ``collided`` set if the
        rollout ended in a collision
    """
    rng = np.random.default_rng(seed)
    trace = episode.lv_speed_trace
    n_steps = episode.n_steps if max_steps is None else min(max_steps, episode.n_steps)
    s = episode.initial
    transitions: List[Transition] = []
    for k in range(n_steps):
        a = float(policy(s, rng))
        transition = step(s, a, episode.dt, float(trace[k + 1]), episode.lv_length)
        transitions.append(transition)
        if transition.collided:
            logger.debug(f"Collision after {k + 1} steps in episode {episode.segment_key}")
            break
        s = transition.s_next
    return transitions


def replay_recorded(episode: Episode) -> List[Transition]:
    """
    Step the episode with the recorded ego accelerations.

    Raises:
        ValueError: If the episode carries no recorded accelerations
    """
    if episode.ego_accel_trace is None:
        raise ValueError("episode has no recorded ego accelerations")
    accel = episode.ego_accel_trace
    trace = episode.lv_speed_trace
    s = episode.initial
    transitions = []
    for k in range(episode.n_steps):
        transition = step(s, float(accel[k]), episode.dt, float(trace[k + 1]), episode.lv_length)
        transitions.append(transition)
        if transition.collided:
            break
        s = transition.s_next
    return transitions


def transition_record(transition: Transition) -> Dict[str, float]:
    """Flatten a transition into one record for training-set export."""
    s, n = transition.s, transition.s_next
    return {
        "dy_le": s.dy_le,
        "v_e": s.v_e,
        "v_l": s.v_l,
        "dv_le": s.dv_le,
        "a": transition.a,
        "next_dy_le": n.dy_le,
        "next_v_e": n.v_e,
        "next_v_l": n.v_l,
        "next_dv_le": n.dv_le,
        "collided": transition.collided,
    }
