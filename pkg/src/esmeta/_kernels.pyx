# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loop: fused point-mass rollout for the fixed 3-layer tanh actor.

Keep in lockstep with _kernels_py.point_rollout; the test suite checks
that both backends agree.
"""

from libc.math cimport fabs, sqrt, tanh
from libc.stdlib cimport free, malloc

FAMILY_VELOCITY = 0
FAMILY_DIRECTION = 1
FAMILY_POSITION = 2


def point_rollout(
    double[::1] params,
    int hidden,
    int family,
    double goal_x,
    double goal_y,
    int horizon,
    double dt,
    double accel_max,
    double speed_max,
    double[:, ::1] obs_out,
    double[:, ::1] act_out,
    double[::1] rew_out,
    double[:, ::1] next_obs_out,
):
    """Roll the 3-layer tanh actor through the point-mass dynamics."""
    cdef int h = hidden
    cdef Py_ssize_t w1_off = 0
    cdef Py_ssize_t b1_off = w1_off + h * 4
    cdef Py_ssize_t w2_off = b1_off + h
    cdef Py_ssize_t b2_off = w2_off + h * h
    cdef Py_ssize_t w3_off = b2_off + h
    cdef Py_ssize_t b3_off = w3_off + 2 * h

    cdef double* h1 = <double*> malloc(h * sizeof(double))
    cdef double* h2 = <double*> malloc(h * sizeof(double))
    if h1 == NULL or h2 == NULL:
        free(h1)
        free(h2)
        raise MemoryError()

    cdef double px = 0.0, py = 0.0, vx = 0.0, vy = 0.0
    cdef double ax, ay, s, speed, scale, reward, dx, dy
    cdef Py_ssize_t t, i, j, base
    cdef const double* p = &params[0]

    try:
        with nogil:
            for t in range(horizon):
                obs_out[t, 0] = px
                obs_out[t, 1] = py
                obs_out[t, 2] = vx
                obs_out[t, 3] = vy

                for i in range(h):
                    base = w1_off + i * 4
                    s = p[base] * px + p[base + 1] * py + p[base + 2] * vx \
                        + p[base + 3] * vy + p[b1_off + i]
                    h1[i] = s if s > 0.0 else 0.0
                for i in range(h):
                    base = w2_off + i * h
                    s = p[b2_off + i]
                    for j in range(h):
                        s += p[base + j] * h1[j]
                    h2[i] = s if s > 0.0 else 0.0
                s = p[b3_off]
                for j in range(h):
                    s += p[w3_off + j] * h2[j]
                ax = tanh(s)
                s = p[b3_off + 1]
                base = w3_off + h
                for j in range(h):
                    s += p[base + j] * h2[j]
                ay = tanh(s)
                act_out[t, 0] = ax
                act_out[t, 1] = ay

                vx = vx + ax * accel_max * dt
                vy = vy + ay * accel_max * dt
                speed = sqrt(vx * vx + vy * vy)
                if speed > speed_max:
                    scale = speed_max / speed
                    vx = vx * scale
                    vy = vy * scale
                    speed = sqrt(vx * vx + vy * vy)
                px = px + vx * dt
                py = py + vy * dt

                if family == 0:
                    reward = -fabs(speed - goal_x)
                elif family == 1:
                    reward = goal_x * vx
                else:
                    dx = px - goal_x
                    dy = py - goal_y
                    reward = -sqrt(dx * dx + dy * dy)
                rew_out[t] = reward
                next_obs_out[t, 0] = px
                next_obs_out[t, 1] = py
                next_obs_out[t, 2] = vx
                next_obs_out[t, 3] = vy
    finally:
        free(h1)
        free(h2)
