"""Desk-scale continuous-control task families on a 2D point-mass robot.

Three families of hidden-goal tasks share one dynamics model: reach a goal
speed, run in a goal direction, or reach a goal position. The goal is never
observed (obs = position then velocity), so an agent must infer it from
rewards. Episodes have a fixed horizon with no early termination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from esmeta import kernels
from esmeta.nn import RELU, TANH, FlatParams

GOAL_VELOCITY = "goal_velocity"
GOAL_DIRECTION = "goal_direction"
GOAL_POSITION = "goal_position"
FAMILY_KINDS = (GOAL_VELOCITY, GOAL_DIRECTION, GOAL_POSITION)

# CLI/config names for the families.
FAMILY_NAMES = {
    "point-vel": GOAL_VELOCITY,
    "point-dir": GOAL_DIRECTION,
    "point-goal": GOAL_POSITION,
}

_DEFAULT_GOAL_RANGE = {
    GOAL_VELOCITY: (0.0, 2.0),
    GOAL_DIRECTION: (-1.0, 1.0),  # two-point support, range unused
    GOAL_POSITION: (-2.0, 2.0),
}

OBS_DIM = 4
ACTION_DIM = 2
_FAMILY_CODES = {
    GOAL_VELOCITY: kernels.FAMILY_VELOCITY,
    GOAL_DIRECTION: kernels.FAMILY_DIRECTION,
    GOAL_POSITION: kernels.FAMILY_POSITION,
}


@dataclass(frozen=True)
class TaskFamily:
    """A task distribution plus the shared dynamics constants.

    dt/accel_max/speed_max default so a competent policy can match any goal
    velocity within ~15 steps. A degenerate goal range (low == high) pins
    the family to a single task.
    """

    kind: str
    goal_low: float | None = None
    goal_high: float | None = None
    horizon: int = 200
    dt: float = 0.05
    accel_max: float = 4.0
    speed_max: float = 3.0

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown task family {self.kind!r}")
        low, high = _DEFAULT_GOAL_RANGE[self.kind]
        if self.goal_low is None:
            object.__setattr__(self, "goal_low", low)
        if self.goal_high is None:
            object.__setattr__(self, "goal_high", high)
        if self.goal_low > self.goal_high:
            raise ValueError("goal_low must be <= goal_high")
        if self.kind == GOAL_VELOCITY and self.goal_low < 0.0:
            raise ValueError("goal velocities must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class Task:
    family: TaskFamily
    goal: np.ndarray  # 1 value for velocity/direction, 2 for position
    task_seed: int

    def __post_init__(self):
        goal = np.atleast_1d(np.asarray(self.goal, dtype=np.float64))
        expected = 2 if self.family.kind == GOAL_POSITION else 1
        if goal.shape != (expected,):
            raise ValueError(f"goal for {self.family.kind} must have {expected} value(s)")
        object.__setattr__(self, "goal", goal)


@dataclass(frozen=True)
class PointState:
    position: np.ndarray
    velocity: np.ndarray
    step_index: int


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass(frozen=True)
class Trajectory:
    """One fixed-horizon episode, array-backed for cheap buffer ingestion."""

    observations: np.ndarray  # [T, 4]
    actions: np.ndarray  # [T, 2]
    rewards: np.ndarray  # [T]
    next_observations: np.ndarray  # [T, 4]
    dones: np.ndarray  # [T] bool
    episode_return: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "episode_return", float(np.sum(self.rewards)))

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def transitions(self) -> list[Transition]:
        return [
            Transition(
                obs=self.observations[t],
                action=self.actions[t],
                reward=float(self.rewards[t]),
                next_obs=self.next_observations[t],
                done=bool(self.dones[t]),
            )
            for t in range(len(self))
        ]


def sample_task(family: TaskFamily, rng: np.random.Generator) -> Task:
    """Draw a goal uniformly from the family's range."""
    if family.kind == GOAL_VELOCITY:
        goal = rng.uniform(family.goal_low, family.goal_high, 1)
    elif family.kind == GOAL_DIRECTION:
        goal = np.array([float(rng.integers(0, 2) * 2 - 1)])
    else:
        goal = rng.uniform(family.goal_low, family.goal_high, 2)
    task_seed = int(rng.integers(0, 2**63))
    return Task(family=family, goal=goal, task_seed=task_seed)


def observe(state: PointState) -> np.ndarray:
    return np.concatenate([state.position, state.velocity])


def reset(task: Task, rng: np.random.Generator | None = None) -> PointState:
    """Fixed start at the origin at rest (the rng argument is unused)."""
    return PointState(position=np.zeros(2), velocity=np.zeros(2), step_index=0)


def step(state: PointState, action: np.ndarray, task: Task) -> tuple[PointState, float, bool]:
    """Semi-implicit Euler step; actions outside [-1, 1]^2 are clipped.

    Keep the arithmetic in lockstep with the rollout kernels.
    """
    fam = task.family
    act = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    vel = state.velocity + act * fam.accel_max * fam.dt
    speed = np.sqrt(vel[0] * vel[0] + vel[1] * vel[1])
    if speed > fam.speed_max:
        vel = vel * (fam.speed_max / speed)
        speed = np.sqrt(vel[0] * vel[0] + vel[1] * vel[1])
    pos = state.position + vel * fam.dt

    if fam.kind == GOAL_VELOCITY:
        reward = -abs(speed - task.goal[0])
    elif fam.kind == GOAL_DIRECTION:
        reward = task.goal[0] * vel[0]
    else:
        dx = pos[0] - task.goal[0]
        dy = pos[1] - task.goal[1]
        reward = -np.sqrt(dx * dx + dy * dy)

    next_state = PointState(position=pos, velocity=vel, step_index=state.step_index + 1)
    done = next_state.step_index >= fam.horizon
    return next_state, float(reward), done


def _check_point_actor(params: FlatParams):
    layers = params.layout.layers
    ok = (
        params.layout.critic_action_injection is None
        and len(layers) == 3
        and layers[0].input_dim == OBS_DIM
        and layers[0].output_dim == layers[1].input_dim == layers[1].output_dim
        and layers[2].output_dim == ACTION_DIM
        and layers[0].activation == RELU
        and layers[1].activation == RELU
        and layers[2].activation == TANH
    )
    if not ok:
        raise ValueError("actor layout is not the fixed point-task architecture")


def rollout(
    actor: FlatParams,
    task: Task,
    horizon: int | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """One deterministic episode under a fixed actor (the rng is unused:
    dynamics, reset and policy are all deterministic)."""
    _check_point_actor(actor)
    fam = task.family
    h = horizon if horizon is not None else fam.horizon
    if h < 1:
        raise ValueError("horizon must be >= 1")
    obs = np.empty((h, OBS_DIM))
    act = np.empty((h, ACTION_DIM))
    rew = np.empty(h)
    nxt = np.empty((h, OBS_DIM))
    goal_x = float(task.goal[0])
    goal_y = float(task.goal[1]) if task.goal.shape[0] > 1 else 0.0
    kernels.point_rollout(
        actor.values,
        actor.layout.layers[0].output_dim,
        _FAMILY_CODES[fam.kind],
        goal_x,
        goal_y,
        h,
        fam.dt,
        fam.accel_max,
        fam.speed_max,
        obs,
        act,
        rew,
        nxt,
    )
    dones = np.zeros(h, dtype=bool)
    dones[-1] = True
    return Trajectory(observations=obs, actions=act, rewards=rew, next_observations=nxt, dones=dones)


def scripted_position_return(task: Task, kp: float = 2.0, kd: float = 1.0) -> float:
    """Episode return of a PD controller driving to the goal position.

    Serves as a competent-policy reference for the goal-position family.
    """
    if task.family.kind != GOAL_POSITION:
        raise ValueError("scripted controller is defined for goal_position tasks")
    state = reset(task)
    total = 0.0
    for _ in range(task.family.horizon):
        action = kp * (task.goal - state.position) - kd * state.velocity
        state, reward, _ = step(state, action, task)
        total += reward
    return total
