"""
Adversarial inverse reinforcement learning of car-following rewards.

The discriminator scores a transition with
``f(s, s') = g(s) + gamma * h(s') - h(s)`` and compares it with the
current policy's log density: ``D = sigmoid(f - log_pi)``. ``g`` is the
recovered state-only reward, ``h`` a shaping term. The generator is a
Gaussian policy trained with PPO on the reward ``f - log_pi``.

Every network sees the same three features of a state: spacing,
relative speed and ego speed, each mapped affinely from its configured
range to [0, 1].
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_ndtr
from scipy.stats import mannwhitneyu

from cfpp.config import TrainingConfig
from cfpp.env import make_episode, rollout
from cfpp.errors import ConfigError, DomainError, TrainingDivergenceError
from cfpp.models import (
    CFSegment,
    CFState,
    Episode,
    EpochRecord,
    Grid,
    TrainReport,
    TrajectoryComparison,
    Transition,
)
from cfpp.nn import MLP, AdamState, adam_step


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Features and batches
# ---------------------------------------------------------------------------


class FeatureScaler:
    """Maps states ``[dy_le, v_e, v_l, dv_le]`` to normalized (dy, dv, v_e)."""

    def __init__(
        self,
        dy_range: Tuple[float, float] = (0.0, 100.0),
        dv_range: Tuple[float, float] = (-10.0, 10.0),
        ve_range: Tuple[float, float] = (0.0, 40.0),
    ):
        self.dy_range = tuple(float(v) for v in dy_range)
        self.dv_range = tuple(float(v) for v in dv_range)
        self.ve_range = tuple(float(v) for v in ve_range)

    @classmethod
    def from_config(cls, config: TrainingConfig) -> "FeatureScaler":
        return cls(config.dy_range, config.dv_range, config.ve_range)

    def features(self, dy: np.ndarray, dv: np.ndarray, ve: np.ndarray) -> np.ndarray:
        """Normalized feature matrix of shape (N, 3)."""
        columns = []
        for values, (lo, hi) in ((dy, self.dy_range), (dv, self.dv_range), (ve, self.ve_range)):
            columns.append((np.asarray(values, dtype=float) - lo) / (hi - lo))
        return np.column_stack(columns)

    def transform(self, states: np.ndarray) -> np.ndarray:
        """Features of a state matrix (N, 4) or a single state vector."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        return self.features(states[:, 0], states[:, 3], states[:, 1])

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "dy_range": list(self.dy_range),
            "dv_range": list(self.dv_range),
            "ve_range": list(self.ve_range),
        }


def states_array(states: Sequence[CFState]) -> np.ndarray:
    """Stack states into an (N, 4) matrix ``[dy_le, v_e, v_l, dv_le]``."""
    return np.array([[s.dy_le, s.v_e, s.v_l, s.dv_le] for s in states], dtype=float).reshape(-1, 4)


@dataclass
class RolloutBatch:
    """Flat arrays of transitions from one or more trajectories.

    ``ends`` marks the last transition of each trajectory; ``dones``
    marks terminal transitions (collisions).
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    ends: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx: np.ndarray) -> "RolloutBatch":
        return RolloutBatch(
            states=self.states[idx],
            actions=self.actions[idx],
            next_states=self.next_states[idx],
            dones=self.dones[idx],
            ends=self.ends[idx],
        )


def batch_from_transitions(trajectories: Sequence[Sequence[Transition]]) -> RolloutBatch:
    """Concatenate trajectories into one batch."""
    flat = [t for trajectory in trajectories for t in trajectory]
    ends = np.zeros(len(flat), dtype=bool)
    k = 0
    for trajectory in trajectories:
        k += len(trajectory)
        if trajectory:
            ends[k - 1] = True
    return RolloutBatch(
        states=states_array([t.s for t in flat]),
        actions=np.array([t.a for t in flat], dtype=float),
        next_states=states_array([t.s_next for t in flat]),
        dones=np.array([t.collided for t in flat], dtype=bool),
        ends=ends,
    )


def expert_batch(segments: Sequence[CFSegment]) -> RolloutBatch:
    """Recorded transitions of expert segments; actions are the recorded accelerations."""
    parts = []
    for seg in segments:
        s = np.column_stack([seg.spacing, seg.ego_speed, seg.lv_speed, seg.lv_speed - seg.ego_speed])
        n = len(s) - 1
        ends = np.zeros(n, dtype=bool)
        ends[-1] = True
        parts.append(
            RolloutBatch(
                states=s[:-1],
                actions=np.asarray(seg.ego_accel[:-1], dtype=float),
                next_states=s[1:],
                dones=np.zeros(n, dtype=bool),
                ends=ends,
            )
        )
    return RolloutBatch(
        states=np.concatenate([p.states for p in parts]),
        actions=np.concatenate([p.actions for p in parts]),
        next_states=np.concatenate([p.next_states for p in parts]),
        dones=np.concatenate([p.dones for p in parts]),
        ends=np.concatenate([p.ends for p in parts]),
    )


def _apply(net: MLP, params: List[np.ndarray], what: str) -> None:
    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingDivergenceError(f"{what} parameters became non-finite")
    net.set_params(params)


# ---------------------------------------------------------------------------
# Discriminator
# ---------------------------------------------------------------------------


class Discriminator:
    """Reward net ``g`` and shaping net ``h`` with discount ``gamma``."""

    def __init__(self, g: MLP, h: MLP, gamma: float, scaler: FeatureScaler, lr: float = 3e-4):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        self.g = g
        self.h = h
        self.gamma = gamma
        self.scaler = scaler
        self._adam = AdamState.zeros_like(g.params + h.params, lr=lr)

    def f(self, states: np.ndarray, next_states: np.ndarray, dones: Optional[np.ndarray] = None) -> np.ndarray:
        """Shaped score ``g(s) + gamma (1 - done) h(s') - h(s)`` per transition."""
        keep = 1.0 if dones is None else 1.0 - np.asarray(dones, dtype=float)
        x = self.scaler.transform(states)
        x_next = self.scaler.transform(next_states)
        return self.g(x)[:, 0] + self.gamma * keep * self.h(x_next)[:, 0] - self.h(x)[:, 0]

    def logits(self, batch: RolloutBatch, log_pi: np.ndarray) -> np.ndarray:
        return self.f(batch.states, batch.next_states, batch.dones) - log_pi

    def loss_and_grads(
        self,
        expert: RolloutBatch,
        expert_log_pi: np.ndarray,
        generated: RolloutBatch,
        generated_log_pi: np.ndarray,
    ) -> Tuple[float, List[np.ndarray]]:
        """
        Binary cross-entropy with expert transitions labelled 1.

        Returns:
            (mean cross-entropy, gradients for ``g.params + h.params``)
        """
        states = np.concatenate([expert.states, generated.states])
        next_states = np.concatenate([expert.next_states, generated.next_states])
        keep = 1.0 - np.concatenate([expert.dones, generated.dones]).astype(float)
        log_pi = np.concatenate([expert_log_pi, generated_log_pi])
        labels = np.concatenate([np.ones(len(expert)), np.zeros(len(generated))])
        n = len(labels)

        x = self.scaler.transform(states)
        x_next = self.scaler.transform(next_states)
        g_out, g_cache = self.g.forward(x)
        h_out, h_cache = self.h.forward(x)
        hn_out, hn_cache = self.h.forward(x_next)
        z = g_out[:, 0] + self.gamma * keep * hn_out[:, 0] - h_out[:, 0] - log_pi

        loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
        dz = ((expit(z) - labels) / n)[:, None]
        g_grads, _ = self.g.backward(g_cache, dz)
        h_grads, _ = self.h.backward(h_cache, -dz)
        hn_grads, _ = self.h.backward(hn_cache, self.gamma * keep[:, None] * dz)
        return loss, g_grads + [a + b for a, b in zip(h_grads, hn_grads)]

    def update(
        self,
        expert: RolloutBatch,
        expert_log_pi: np.ndarray,
        generated: RolloutBatch,
        generated_log_pi: np.ndarray,
    ) -> float:
        """One Adam step on the cross-entropy; returns the loss before the step."""
        loss, grads = self.loss_and_grads(expert, expert_log_pi, generated, generated_log_pi)
        if not math.isfinite(loss):
            raise TrainingDivergenceError(f"discriminator loss is {loss}")
        params, self._adam = adam_step(self.g.params + self.h.params, grads, self._adam)
        n_g = len(self.g.params)
        _apply(self.g, params[:n_g], "reward net")
        _apply(self.h, params[n_g:], "shaping net")
        return loss


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise DomainError(f"non-finite discriminator input in {values}")


def discriminator_output(
    disc: Discriminator,
    s: CFState,
    a: float,
    s_next: CFState,
    log_pi: float,
) -> float:
    """
    ``D(s, a, s') = exp(f) / (exp(f) + pi(a|s))``, evaluated as a logistic.

    Raises:
        DomainError: If ``a``, ``log_pi`` or a state component is not finite
    """
    _check_finite(a, log_pi, *s.as_array(), *s_next.as_array())
    f = disc.f(states_array([s]), states_array([s_next]))[0]
    return float(expit(f - log_pi))


def airl_reward(
    disc: Discriminator,
    s: CFState,
    a: float,
    s_next: CFState,
    log_pi: float,
) -> float:
    """
    Reward ``log D - log(1 - D)``, which equals ``f - log_pi``.

    Raises:
        DomainError: If ``a``, ``log_pi`` or a state component is not finite
    """
    _check_finite(a, log_pi, *s.as_array(), *s_next.as_array())
    f = disc.f(states_array([s]), states_array([s_next]))[0]
    return float(f - log_pi)


# ---------------------------------------------------------------------------
# Policy and PPO
# ---------------------------------------------------------------------------


class GaussianPolicy:
    """Gaussian acceleration policy with a tanh-squashed mean.

    The mean is ``center + half_range * tanh(m(x))`` so it always lies
    inside the action bounds; the log standard deviation is one learnable
    scalar. Sampled actions are clipped to the bounds, so an action on a
    bound is scored with the Gaussian tail mass beyond it.
    """

    def __init__(
        self,
        mean_net: MLP,
        scaler: FeatureScaler,
        log_std: float = 0.0,
        action_low: float = -6.0,
        action_high: float = 4.0,
    ):
        self.mean_net = mean_net
        self.scaler = scaler
        self.log_std = float(log_std)
        self.action_low = action_low
        self.action_high = action_high

    @property
    def center(self) -> float:
        return 0.5 * (self.action_high + self.action_low)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.action_high - self.action_low)

    @property
    def params(self) -> List[np.ndarray]:
        return self.mean_net.params + [np.array([self.log_std])]

    def set_params(self, params: List[np.ndarray]) -> None:
        _apply(self.mean_net, params[:-1], "policy")
        log_std = float(params[-1][0])
        if not math.isfinite(log_std):
            raise TrainingDivergenceError("policy log-std became non-finite")
        self.log_std = log_std

    def mean(self, states: np.ndarray) -> np.ndarray:
        """Mean action per state row."""
        m = self.mean_net(self.scaler.transform(states))[:, 0]
        return self.center + self.half_range * np.tanh(m)

    def log_prob_terms(self, mu: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Log-likelihood of clipped actions and its derivatives.

        Interior actions use the Gaussian density; actions on a bound use
        the log probability of landing beyond it.

        Returns:
            (log_prob, d log_prob / d mu, d log_prob / d log_std)
        """
        std = math.exp(self.log_std)
        actions = np.asarray(actions, dtype=float)
        z = (actions - mu) / std
        log_prob = -0.5 * z * z - self.log_std - 0.5 * LOG_2PI
        d_mu = z / std
        d_log_std = z * z - 1.0

        lower = actions <= self.action_low
        censored = lower | (actions >= self.action_high)
        # mass beyond the bound is Phi(w)
        w = np.where(lower, (self.action_low - mu) / std, (mu - self.action_high) / std)
        tail = np.where(censored, log_ndtr(w), 0.0)
        hazard = np.exp(-0.5 * w * w - 0.5 * LOG_2PI - tail)
        sign = np.where(lower, -1.0, 1.0)
        log_prob = np.where(censored, tail, log_prob)
        d_mu = np.where(censored, sign * hazard / std, d_mu)
        d_log_std = np.where(censored, -hazard * w, d_log_std)
        return log_prob, d_mu, d_log_std

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.log_prob_terms(self.mean(states), actions)[0]

    def sample(self, state: CFState, rng: np.random.Generator) -> float:
        mu = float(self.mean(states_array([state]))[0])
        a = mu + math.exp(self.log_std) * rng.standard_normal()
        return min(self.action_high, max(self.action_low, a))

    def __call__(self, state: CFState, rng: np.random.Generator) -> float:
        return self.sample(state, rng)

    def deterministic(self, state: CFState, rng: Optional[np.random.Generator] = None) -> float:
        return float(self.mean(states_array([state]))[0])

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(
            self.mean_net.copy(), self.scaler, self.log_std, self.action_low, self.action_high
        )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    dones: np.ndarray,
    ends: np.ndarray,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimates over a flat batch of trajectories.

    Terminal transitions do not bootstrap; trajectory ends that are not
    terminal bootstrap from the value of the next state.

    Returns:
        (advantages, value targets)
    """
    n = len(rewards)
    keep = 1.0 - dones.astype(float)
    deltas = rewards + gamma * keep * next_values - values
    advantages = np.zeros(n)
    running = 0.0
    for k in reversed(range(n)):
        if ends[k]:
            running = 0.0
        running = deltas[k] + gamma * lam * keep[k] * running
        advantages[k] = running
    return advantages, advantages + values


class PPOAgent:
    """Clipped-surrogate PPO over a Gaussian policy and a value net."""

    def __init__(self, policy: GaussianPolicy, value: MLP, config: TrainingConfig):
        self.policy = policy
        self.value = value
        self.config = config
        self._policy_adam = AdamState.zeros_like(policy.params, lr=config.policy_lr)
        self._value_adam = AdamState.zeros_like(value.params, lr=config.value_lr)

    def values(self, states: np.ndarray) -> np.ndarray:
        return self.value(self.policy.scaler.transform(states))[:, 0]

    def policy_step(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        log_prob_old: np.ndarray,
        advantages: np.ndarray,
    ) -> Dict[str, float]:
        """One Adam step on the clipped surrogate of a minibatch."""
        eps = self.config.clip_ratio
        n = len(actions)
        x = self.policy.scaler.transform(states)
        m_out, cache = self.policy.mean_net.forward(x)
        squash = np.tanh(m_out[:, 0])
        mu = self.policy.center + self.policy.half_range * squash
        log_prob, dlp_dmu, dlp_dlog_std = self.policy.log_prob_terms(mu, actions)

        ratio = np.exp(log_prob - log_prob_old)
        unclipped = ratio * advantages
        clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
        active = unclipped <= clipped
        entropy = self.policy.log_std + 0.5 * (LOG_2PI + 1.0)
        loss = -float(np.mean(np.minimum(unclipped, clipped))) - self.config.ent_coef * entropy

        d_log_prob = -(active * advantages * ratio) / n
        d_mu = d_log_prob * dlp_dmu
        d_m = d_mu * self.policy.half_range * (1.0 - squash ** 2)
        d_log_std = float(np.sum(d_log_prob * dlp_dlog_std)) - self.config.ent_coef
        grads, _ = self.policy.mean_net.backward(cache, d_m[:, None])
        grads.append(np.array([d_log_std]))

        params, self._policy_adam = adam_step(self.policy.params, grads, self._policy_adam)
        self.policy.set_params(params)
        return {"policy_loss": loss, "clip_fraction": float(np.mean(~active))}

    def value_step(self, states: np.ndarray, targets: np.ndarray) -> float:
        """One Adam step on ``0.5 * mean((V - target)^2)``."""
        x = self.policy.scaler.transform(states)
        out, cache = self.value.forward(x)
        err = out[:, 0] - targets
        grads, _ = self.value.backward(cache, (err / len(err))[:, None])
        params, self._value_adam = adam_step(self.value.params, grads, self._value_adam)
        _apply(self.value, params, "value net")
        return float(0.5 * np.mean(err * err))

    def update(
        self,
        batch: RolloutBatch,
        rewards: np.ndarray,
        rng: np.random.Generator,
    ) -> Dict[str, float]:
        """
        PPO update on one batch with the given per-transition rewards.

        Raises:
            TrainingDivergenceError: If an advantage is not finite
        """
        cfg = self.config
        values = self.values(batch.states)
        next_values = self.values(batch.next_states)
        advantages, targets = compute_gae(
            rewards, values, next_values, batch.dones, batch.ends, cfg.gamma, cfg.gae_lambda
        )
        if not np.all(np.isfinite(advantages)):
            raise TrainingDivergenceError("non-finite advantage in PPO batch")
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        log_prob_old = self.policy.log_prob(batch.states, batch.actions)

        diagnostics = {"policy_loss": 0.0, "clip_fraction": 0.0, "value_loss": 0.0}
        steps = 0
        for _ in range(cfg.ppo_epochs):
            order = rng.permutation(len(batch))
            for lo in range(0, len(order), cfg.minibatch_size):
                idx = order[lo : lo + cfg.minibatch_size]
                step = self.policy_step(
                    batch.states[idx], batch.actions[idx], log_prob_old[idx], advantages[idx]
                )
                diagnostics["policy_loss"] += step["policy_loss"]
                diagnostics["clip_fraction"] += step["clip_fraction"]
                diagnostics["value_loss"] += self.value_step(batch.states[idx], targets[idx])
                steps += 1
        if steps:
            diagnostics = {key: value / steps for key, value in diagnostics.items()}
        return diagnostics


def ppo_update(
    agent: PPOAgent,
    batch: RolloutBatch,
    rewards: np.ndarray,
    rng: np.random.Generator,
) -> Dict[str, float]:
    """Run ``agent.update``; the agent's networks are updated in place."""
    return agent.update(batch, rewards, rng)


# ---------------------------------------------------------------------------
# Reward model
# ---------------------------------------------------------------------------


class RewardModel:
    """Trained reward, shaping, policy and value networks with their settings."""

    def __init__(
        self,
        g: MLP,
        h: MLP,
        policy: GaussianPolicy,
        value: MLP,
        gamma: float,
        seed: int = 0,
        config_hash: str = "",
    ):
        self.g = g
        self.h = h
        self.policy = policy
        self.value = value
        self.gamma = gamma
        self.seed = seed
        self.config_hash = config_hash

    @property
    def scaler(self) -> FeatureScaler:
        return self.policy.scaler

    @classmethod
    def initialize(cls, config: TrainingConfig, seed: int, config_hash: str = "") -> "RewardModel":
        """Fresh networks drawn from child seeds of ``seed``."""
        children = np.random.SeedSequence(seed).spawn(4)
        widths = [3, *config.hidden, 1]
        scaler = FeatureScaler.from_config(config)
        policy = GaussianPolicy(
            MLP(widths, rng=np.random.default_rng(children[2])),
            scaler,
            config.init_log_std,
            config.action_low,
            config.action_high,
        )
        return cls(
            g=MLP(widths, rng=np.random.default_rng(children[0])),
            h=MLP(widths, rng=np.random.default_rng(children[1])),
            policy=policy,
            value=MLP(widths, rng=np.random.default_rng(children[3])),
            gamma=config.gamma,
            seed=seed,
            config_hash=config_hash,
        )

    def reward(self, states: np.ndarray) -> np.ndarray:
        """Recovered reward ``g`` per state row."""
        return self.g(self.scaler.transform(states))[:, 0]

    def copy(self) -> "RewardModel":
        return RewardModel(
            self.g.copy(), self.h.copy(), self.policy.copy(), self.value.copy(),
            self.gamma, self.seed, self.config_hash,
        )

    def manifest(self) -> dict:
        return {
            **self.scaler.to_dict(),
            "gamma": self.gamma,
            "log_std": self.policy.log_std,
            "action_low": self.policy.action_low,
            "action_high": self.policy.action_high,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }

    def save(self, directory: PathLike) -> None:
        """Write ``g.json``, ``h.json``, ``policy.json``, ``value.json`` and ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.g.save(directory / "g.json")
        self.h.save(directory / "h.json")
        self.policy.mean_net.save(directory / "policy.json")
        self.value.save(directory / "value.json")
        (directory / "manifest.json").write_text(
            json.dumps(self.manifest(), sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: PathLike) -> "RewardModel":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        scaler = FeatureScaler(manifest["dy_range"], manifest["dv_range"], manifest["ve_range"])
        policy = GaussianPolicy(
            MLP.load(directory / "policy.json"),
            scaler,
            manifest["log_std"],
            manifest["action_low"],
            manifest["action_high"],
        )
        return cls(
            g=MLP.load(directory / "g.json"),
            h=MLP.load(directory / "h.json"),
            policy=policy,
            value=MLP.load(directory / "value.json"),
            gamma=manifest["gamma"],
            seed=manifest["seed"],
            config_hash=manifest["config_hash"],
        )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def eval_episode_loss(
    true_ego_speeds: Sequence[float],
    generated_ego_speeds: Sequence[float],
    collided: bool,
    floor: float = 1e-6,
    collision_penalty: float = 1000.0,
) -> float:
    """
    Speed-discrepancy loss ``ln(max(e, floor)) - penalty * c``.

    ``e`` is the mean relative error ``|V_true - V_gen| / V_true`` over
    the steps, ``c`` is 1 for a collided rollout.

    Raises:
        DomainError: If lengths differ, are 0, or a true speed is <= 0

    Example:
        >>> round(eval_episode_loss([20.0], [19.0], False), 4)
        -2.9957
    """
    true = np.asarray(true_ego_speeds, dtype=float)
    gen = np.asarray(generated_ego_speeds, dtype=float)
    if len(true) != len(gen):
        raise DomainError(f"speed series differ in length ({len(true)} vs {len(gen)})")
    if len(true) == 0:
        raise DomainError("speed series are empty")
    if np.any(true <= 0):
        raise DomainError("true ego speeds must be positive")
    error = max(float(np.mean(np.abs(true - gen) / true)), floor)
    return math.log(error) - collision_penalty * (1.0 if collided else 0.0)


def split_episodes(
    episodes: Sequence[Episode], holdout_fraction: float, seed: int
) -> Tuple[List[Episode], List[Episode]]:
    """
    Deterministic train/hold-out split; at least one episode is kept for training.
    """
    order = np.random.default_rng(seed).permutation(len(episodes))
    n_hold = min(int(math.floor(holdout_fraction * len(episodes))), len(episodes) - 1)
    held = sorted(order[:n_hold].tolist())
    train = sorted(order[n_hold:].tolist())
    return [episodes[k] for k in train], [episodes[k] for k in held]


def _collect(
    policy: GaussianPolicy,
    episodes: Sequence[Episode],
    n_transitions: int,
    rng: np.random.Generator,
    max_steps: Optional[int],
) -> List[Tuple[Episode, List[Transition]]]:
    rollouts = []
    total = 0
    order = rng.permutation(len(episodes))
    k = 0
    while total < n_transitions:
        episode = episodes[order[k % len(order)]]
        k += 1
        transitions = rollout(policy, episode, int(rng.integers(2**31)), max_steps)
        rollouts.append((episode, transitions))
        total += len(transitions)
    return rollouts


def _speed_loss(episode: Episode, transitions: Sequence[Transition], config: TrainingConfig) -> float:
    true = episode.ego_speed_trace[1 : len(transitions) + 1]
    generated = [t.s_next.v_e for t in transitions]
    return eval_episode_loss(
        true, generated, transitions[-1].collided, config.loss_floor, config.collision_penalty
    )


def train_airl(
    expert_segments: Sequence[CFSegment],
    config: TrainingConfig,
    seed: int,
    config_hash: str = "",
) -> Tuple[RewardModel, TrainReport]:
    """
    Learn a reward from expert segments of one FV condition.

    Each epoch rolls the policy out on LV replays of the training
    episodes, fits the discriminator to tell expert from policy
    transitions, then improves the policy with PPO on the discriminator
    reward. The run is a deterministic function of ``seed``.

    Args:
        expert_segments: Segments sharing one label
        config: Training hyperparameters
        seed: Master seed
        config_hash: Recorded in the model manifest

    Returns:
        (trained RewardModel, TrainReport with one record per epoch)

    Raises:
        ConfigError: If there are no expert segments or their labels differ
        TrainingDivergenceError: If a loss or parameter turns non-finite;
            ``last_model`` holds the model from the last finite epoch
    """
    if not expert_segments:
        raise ConfigError("training needs at least one expert segment")
    labels = {s.label for s in expert_segments}
    if len(labels) != 1:
        raise ConfigError(f"expert segments mix labels {sorted(l.value for l in labels)}")
    condition = next(iter(labels)).value

    model = RewardModel.initialize(config, seed, config_hash)
    report = TrainReport(condition=condition, configured_epochs=config.epochs)
    if config.epochs == 0:
        return model, report

    episodes = [make_episode(s) for s in expert_segments]
    train_episodes, _ = split_episodes(episodes, config.holdout_fraction, seed)
    train_keys = {e.segment_key for e in train_episodes}
    expert = expert_batch([s for s in expert_segments if s.key in train_keys])

    disc = Discriminator(model.g, model.h, config.gamma, model.scaler, config.disc_lr)
    agent = PPOAgent(model.policy, model.value, config)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(5)[4])

    records: List[EpochRecord] = []
    last_good = model.copy()
    for epoch in range(config.epochs):
        try:
            rollouts = _collect(
                model.policy, train_episodes, config.transitions_per_epoch, rng, config.max_episode_steps
            )
            generated = batch_from_transitions([t for _, t in rollouts])

            losses = []
            for _ in range(config.disc_steps):
                e_idx = rng.integers(len(expert), size=config.disc_batch_size)
                g_idx = rng.integers(len(generated), size=config.disc_batch_size)
                e_batch, g_batch = expert.subset(e_idx), generated.subset(g_idx)
                losses.append(
                    disc.update(
                        e_batch,
                        model.policy.log_prob(e_batch.states, e_batch.actions),
                        g_batch,
                        model.policy.log_prob(g_batch.states, g_batch.actions),
                    )
                )
            if not losses:
                loss, _ = disc.loss_and_grads(
                    expert,
                    model.policy.log_prob(expert.states, expert.actions),
                    generated,
                    model.policy.log_prob(generated.states, generated.actions),
                )
                losses.append(loss)
            disc_ce = float(np.mean(losses))

            rewards = disc.logits(generated, model.policy.log_prob(generated.states, generated.actions))
            if not np.all(np.isfinite(rewards)):
                raise TrainingDivergenceError("non-finite discriminator reward")
            agent.update(generated, rewards, rng)

            returns, speed_losses, collisions = [], [], 0
            k = 0
            for episode, transitions in rollouts:
                returns.append(float(np.sum(rewards[k : k + len(transitions)])))
                k += len(transitions)
                speed_losses.append(_speed_loss(episode, transitions, config))
                collisions += int(transitions[-1].collided)
            record = EpochRecord(
                epoch=epoch,
                disc_ce=disc_ce,
                mean_return=float(np.mean(returns)),
                speed_loss=float(np.mean(speed_losses)),
                collisions=collisions,
            )
            if not all(math.isfinite(v) for v in (record.disc_ce, record.mean_return, record.speed_loss)):
                raise TrainingDivergenceError("non-finite epoch summary")
        except TrainingDivergenceError as e:
            logger.error(f"{condition}: training diverged in epoch {epoch}: {e}")
            raise TrainingDivergenceError(str(e), epoch=epoch, last_model=last_good) from e

        records.append(record)
        last_good = model.copy()
        if (epoch + 1) % config.log_every == 0 or epoch + 1 == config.epochs:
            logger.info(
                f"{condition} epoch {epoch + 1}/{config.epochs}: disc_ce={record.disc_ce:.4f} "
                f"return={record.mean_return:.3f} speed_loss={record.speed_loss:.3f} "
                f"collisions={record.collisions}"
            )

    return model, TrainReport(condition=condition, configured_epochs=config.epochs, epochs=records)


def evaluate_model(
    model: RewardModel,
    episodes: Sequence[Episode],
    config: Optional[TrainingConfig] = None,
) -> List[TrajectoryComparison]:
    """
    Roll the mean policy over each episode and compare with the recording.

    Episodes without a recorded ego speed trace are skipped.
    """
    config = config or TrainingConfig()
    comparisons = []
    for episode in episodes:
        if episode.ego_speed_trace is None:
            continue
        transitions = rollout(model.policy.deterministic, episode, 0, config.max_episode_steps)
        n = len(transitions)
        true = np.asarray(episode.ego_speed_trace[1 : n + 1])
        generated = np.array([t.s_next.v_e for t in transitions])
        comparisons.append(
            TrajectoryComparison(
                segment_key=episode.segment_key,
                true_speed=true,
                generated_speed=generated,
                true_spacing=(
                    None if episode.spacing_trace is None else episode.spacing_trace[1 : n + 1]
                ),
                generated_spacing=np.array([t.s_next.dy_le for t in transitions]),
                speed_rmse=float(np.sqrt(np.mean((true - generated) ** 2))),
                speed_loss=_speed_loss(episode, transitions, config),
                collided=transitions[-1].collided,
            )
        )
    return comparisons


# ---------------------------------------------------------------------------
# Reading the recovered reward
# ---------------------------------------------------------------------------


def bin_centers(lo: float, hi: float, bins: int) -> np.ndarray:
    edges = np.linspace(lo, hi, bins + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def reward_grid(
    model: RewardModel,
    v_l_fixed: float,
    bins: int = 10,
    dy_range: Tuple[float, float] = (0.0, 100.0),
    dv_range: Tuple[float, float] = (-10.0, 10.0),
) -> Grid:
    """
    Recovered reward over (relative speed, spacing) at a fixed LV speed.

    Rows are relative-speed bin centers, columns spacing bin centers; the
    ego speed of a cell is ``v_l_fixed - dv``. Cells where that speed is
    negative are NaN and not evaluated.

    Raises:
        ValueError: If ``bins < 2`` or a range is not increasing
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if not (dy_range[0] < dy_range[1] and dv_range[0] < dv_range[1]):
        raise ValueError("ranges must be increasing (low, high) pairs")
    dv = bin_centers(dv_range[0], dv_range[1], bins)
    dy = bin_centers(dy_range[0], dy_range[1], bins)
    dv_grid, dy_grid = np.meshgrid(dv, dy, indexing="ij")
    ve_grid = v_l_fixed - dv_grid
    valid = ve_grid >= 0

    values = np.full((bins, bins), np.nan)
    if valid.any():
        x = model.scaler.features(dy_grid[valid], dv_grid[valid], ve_grid[valid])
        values[valid] = model.g(x)[:, 0]
    invalid = int((~valid).sum())
    if invalid:
        logger.warning(f"Reward grid at v_l={v_l_fixed}: {invalid} cells with negative ego speed")
    return Grid(
        row_label="dv_le",
        col_label="dy_le",
        row_centers=dv,
        col_centers=dy,
        values=values,
        meta={"v_l": v_l_fixed, "bins": bins},
    )


def positive_spacing_bins(grid: Grid) -> np.ndarray:
    """Number of spacing bins with positive reward in each relative-speed row."""
    with np.errstate(invalid="ignore"):
        return np.sum(np.nan_to_num(grid.values, nan=-np.inf) > 0, axis=1)


def reward_auc(model: RewardModel, expert_states: np.ndarray, other_states: np.ndarray) -> float:
    """
    Probability that ``g`` ranks a random expert state above a random other one.

    Ties count one half (Mann-Whitney U divided by the pair count).
    """
    expert_scores = model.reward(expert_states)
    other_scores = model.reward(other_states)
    u = mannwhitneyu(expert_scores, other_scores, alternative="two-sided").statistic
    return float(u / (len(expert_scores) * len(other_scores)))
