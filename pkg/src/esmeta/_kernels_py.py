"""Pure-numpy fallback for the fused point-mass rollout kernel.

Mirrors _kernels.pyx operation for operation (same update order, same
reward expressions) so both backends agree to floating-point rounding.
"""

from __future__ import annotations

import numpy as np

FAMILY_VELOCITY = 0
FAMILY_DIRECTION = 1
FAMILY_POSITION = 2


def point_rollout(
    params: np.ndarray,
    hidden: int,
    family: int,
    goal_x: float,
    goal_y: float,
    horizon: int,
    dt: float,
    accel_max: float,
    speed_max: float,
    obs_out: np.ndarray,
    act_out: np.ndarray,
    rew_out: np.ndarray,
    next_obs_out: np.ndarray,
) -> None:
    """Roll the 3-layer tanh actor through the point-mass dynamics."""
    h = hidden
    o = 0
    w1 = params[o : o + h * 4].reshape(h, 4)
    o += h * 4
    b1 = params[o : o + h]
    o += h
    w2 = params[o : o + h * h].reshape(h, h)
    o += h * h
    b2 = params[o : o + h]
    o += h
    w3 = params[o : o + 2 * h].reshape(2, h)
    o += 2 * h
    b3 = params[o : o + 2]

    pos = np.zeros(2)
    vel = np.zeros(2)
    obs = np.empty(4)
    for t in range(horizon):
        obs[0:2] = pos
        obs[2:4] = vel
        obs_out[t] = obs
        h1 = np.maximum(w1 @ obs + b1, 0.0)
        h2 = np.maximum(w2 @ h1 + b2, 0.0)
        act = np.tanh(w3 @ h2 + b3)
        act_out[t] = act

        vel = vel + act * accel_max * dt
        speed = np.sqrt(vel[0] * vel[0] + vel[1] * vel[1])
        if speed > speed_max:
            vel = vel * (speed_max / speed)
            speed = np.sqrt(vel[0] * vel[0] + vel[1] * vel[1])
        pos = pos + vel * dt

        if family == FAMILY_VELOCITY:
            reward = -abs(speed - goal_x)
        elif family == FAMILY_DIRECTION:
            reward = goal_x * vel[0]
        else:
            dx = pos[0] - goal_x
            dy = pos[1] - goal_y
            reward = -np.sqrt(dx * dx + dy * dy)
        rew_out[t] = reward
        next_obs_out[t, 0:2] = pos
        next_obs_out[t, 2:4] = vel
