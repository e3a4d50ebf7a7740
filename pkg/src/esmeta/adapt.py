"""Inner adaptation loop: exploration rollouts, replay, and DPG updates.

Exploration is parameter-space only: each of the K perturbed actors keeps
its parameters fixed for its entire trajectory. The mean actor and the
sampled critic are then adapted with a handful of deterministic-policy-
gradient steps on the collected buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from esmeta import seeding
from esmeta.errors import InsufficientBuffer
from esmeta.nn import (
    FlatParams,
    actor_backward_batch,
    actor_forward_batch,
    build_actor_layout,
    build_critic_layout,
    critic_backward_batch,
    critic_forward_batch,
    xavier_init,
)
from esmeta.tasks import Task, Trajectory, Transition, rollout


@dataclass(frozen=True)
class AdaptConfig:
    gamma: float = 0.99
    critic_lr: float = 0.1
    actor_lr: float = 0.1
    batch_size: int = 64
    grad_steps_per_adapt: int = 1
    use_target_nets: bool = False  # enabled for the standalone regime only
    tau: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.critic_lr < 0.0 or self.actor_lr < 0.0:
            raise ValueError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.grad_steps_per_adapt < 1:
            raise ValueError("grad_steps_per_adapt must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")


class ReplayBuffer:
    """Array-backed FIFO ring of transitions with uniform resampling."""

    def __init__(self, capacity: int, obs_dim: int = 4, action_dim: int = 2):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._obs = np.empty((capacity, obs_dim))
        self._act = np.empty((capacity, action_dim))
        self._rew = np.empty(capacity)
        self._nxt = np.empty((capacity, obs_dim))
        self._done = np.empty(capacity, dtype=bool)
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    def _slot(self, i: int) -> int:
        # FIFO position i counted from the oldest stored transition
        if not 0 <= i < self._size:
            raise IndexError(i)
        if self._size < self.capacity:
            return i
        return (self._next + i) % self.capacity

    def __getitem__(self, i: int) -> Transition:
        s = self._slot(i)
        return Transition(
            obs=self._obs[s].copy(),
            action=self._act[s].copy(),
            reward=float(self._rew[s]),
            next_obs=self._nxt[s].copy(),
            done=bool(self._done[s]),
        )

    def push(self, tr: Transition):
        s = self._next
        self._obs[s] = tr.obs
        self._act[s] = tr.action
        self._rew[s] = tr.reward
        self._nxt[s] = tr.next_obs
        self._done[s] = tr.done
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, traj: Trajectory):
        for t in range(len(traj)):
            s = self._next
            self._obs[s] = traj.observations[t]
            self._act[s] = traj.actions[t]
            self._rew[s] = traj.rewards[t]
            self._nxt[s] = traj.next_observations[t]
            self._done[s] = traj.dones[t]
            self._next = (self._next + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform with replacement: (obs, actions, rewards, next_obs, dones)."""
        if self._size < batch_size:
            raise InsufficientBuffer(f"buffer holds {self._size} < batch {batch_size}")
        idx = rng.integers(0, self._size, batch_size)
        if self._size == self.capacity:
            idx = (self._next + idx) % self.capacity
        return (
            self._obs[idx],
            self._act[idx],
            self._rew[idx],
            self._nxt[idx],
            self._done[idx],
        )


def collect_exploration_rollouts(
    task: Task,
    actors: list[FlatParams],
    trajectories_per_actor: int = 1,
    horizon: int | None = None,
    rng: np.random.Generator | None = None,
) -> ReplayBuffer:
    """Fill a fresh buffer with K actors' trajectories (one fixed actor per episode)."""
    if len(actors) == 0:
        raise ValueError("need at least one exploration actor")
    if trajectories_per_actor < 1:
        raise ValueError("trajectories_per_actor must be >= 1")
    h = horizon if horizon is not None else task.family.horizon
    buf = ReplayBuffer(len(actors) * trajectories_per_actor * h)
    for actor in actors:
        for _ in range(trajectories_per_actor):
            buf.extend(rollout(actor, task, horizon=h, rng=rng))
    return buf


def critic_update(
    critic: FlatParams,
    buffer: ReplayBuffer,
    actor: FlatParams,
    cfg: AdaptConfig,
    rng: np.random.Generator,
    target_critic: FlatParams | None = None,
    target_actor: FlatParams | None = None,
) -> FlatParams:
    """One SGD step on the mean squared TD error of the critic."""
    obs, act, rew, nxt, done = buffer.sample(cfg.batch_size, rng)
    next_action = actor_forward_batch(target_actor if target_actor is not None else actor, nxt)
    q_next = critic_forward_batch(
        target_critic if target_critic is not None else critic, nxt, next_action
    )
    targets = rew + cfg.gamma * (1.0 - done) * q_next
    q = critic_forward_batch(critic, obs, act)
    upstream = 2.0 * (q - targets) / cfg.batch_size  # d(mean TD^2)/dq
    grads, _ = critic_backward_batch(critic, obs, act, upstream)
    return FlatParams(critic.layout, critic.values - cfg.critic_lr * grads)


def actor_update(
    actor: FlatParams,
    critic: FlatParams,
    buffer: ReplayBuffer,
    cfg: AdaptConfig,
    rng: np.random.Generator,
) -> FlatParams:
    """One ascent step on batch-mean Q(s, actor(s)); the critic is untouched."""
    obs, _, _, _, _ = buffer.sample(cfg.batch_size, rng)
    actions = actor_forward_batch(actor, obs)
    _, dq_da = critic_backward_batch(
        critic, obs, actions, np.full(cfg.batch_size, 1.0 / cfg.batch_size)
    )
    grads = actor_backward_batch(actor, obs, dq_da)
    return FlatParams(actor.layout, actor.values + cfg.actor_lr * grads)


def adapt(
    init_actor: FlatParams,
    init_critic: FlatParams,
    buffer: ReplayBuffer,
    cfg: AdaptConfig,
    rng: np.random.Generator,
) -> tuple[FlatParams, FlatParams]:
    """grad_steps_per_adapt rounds of critic-then-actor updates on one buffer.

    Pure with respect to its inputs: callers keep the pre-adaptation
    parameters (the meta-update weights the sampled ones, not these).
    """
    if len(buffer) == 0:
        raise InsufficientBuffer("adaptation buffer is empty")
    actor, critic = init_actor, init_critic
    target_actor = init_actor if cfg.use_target_nets else None
    target_critic = init_critic if cfg.use_target_nets else None
    for _ in range(cfg.grad_steps_per_adapt):
        critic = critic_update(critic, buffer, actor, cfg, rng, target_critic, target_actor)
        actor = actor_update(actor, critic, buffer, cfg, rng)
        if cfg.use_target_nets:
            target_actor = FlatParams(
                actor.layout, (1.0 - cfg.tau) * target_actor.values + cfg.tau * actor.values
            )
            target_critic = FlatParams(
                critic.layout, (1.0 - cfg.tau) * target_critic.values + cfg.tau * critic.values
            )
    return actor, critic


def monte_carlo_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted reward-to-go: G_t = r_t + gamma * G_{t+1}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape[0] == 0:
        raise ValueError("rewards must be a non-empty 1-D array")
    returns = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        returns[t] = acc
    return returns


def run_ddpg(
    task: Task,
    hidden: int,
    episodes: int,
    cfg: AdaptConfig,
    seed: int,
    noise_std: float = 0.1,
    updates_per_episode: int = 200,
    buffer_capacity: int | None = None,
) -> list[float]:
    """Standalone DDPG on one fixed task, exploring with parameter-space noise.

    Each episode samples one perturbed actor (fixed for the whole episode),
    stores its trajectory, then trains on the buffer. Returns the greedy
    actor's episode return after each episode.
    """
    h = task.family.horizon
    actor_layout = build_actor_layout(4, 2, hidden)
    critic_layout = build_critic_layout(4, 2, hidden)
    actor = xavier_init(actor_layout, seeding.generator(seed, 0))
    critic = xavier_init(critic_layout, seeding.generator(seed, 1))
    target_actor, target_critic = actor, critic
    noise_rng = seeding.generator(seed, 2)
    batch_rng = seeding.generator(seed, 3)
    buf = ReplayBuffer(buffer_capacity or episodes * h)

    returns: list[float] = []
    for _ in range(episodes):
        perturbed = FlatParams(
            actor_layout,
            actor.values + noise_std * noise_rng.standard_normal(actor_layout.total_params),
        )
        buf.extend(rollout(perturbed, task))
        for _ in range(updates_per_episode):
            critic = critic_update(
                critic, buf, actor, cfg, batch_rng,
                target_critic if cfg.use_target_nets else None,
                target_actor if cfg.use_target_nets else None,
            )
            actor = actor_update(actor, critic, buf, cfg, batch_rng)
            if cfg.use_target_nets:
                target_actor = FlatParams(
                    actor_layout,
                    (1.0 - cfg.tau) * target_actor.values + cfg.tau * actor.values,
                )
                target_critic = FlatParams(
                    critic_layout,
                    (1.0 - cfg.tau) * target_critic.values + cfg.tau * critic.values,
                )
        returns.append(rollout(actor, task).episode_return)
    return returns
