"""Rollout throughput: compiled kernel vs the pure-numpy fallback.

Usage: python benchmarks/bench_rollout.py [hidden] [episodes]
"""

import sys
import time

import numpy as np

from esmeta import _kernels_py, nn
from esmeta.seeding import generator
from esmeta.tasks import TaskFamily

try:
    from esmeta import _kernels
except ImportError:
    _kernels = None


def bench(impl, params, hidden, horizon, episodes):
    obs = np.empty((horizon, 4))
    act = np.empty((horizon, 2))
    rew = np.empty(horizon)
    nxt = np.empty((horizon, 4))
    start = time.perf_counter()
    for _ in range(episodes):
        impl.point_rollout(
            params.values, hidden, 0, 1.0, 0.0, horizon, 0.05, 4.0, 3.0,
            obs, act, rew, nxt,
        )
    elapsed = time.perf_counter() - start
    return episodes * horizon / elapsed, float(rew.sum())


def main():
    hidden = int(sys.argv[1]) if len(sys.argv) > 1 else 64
    episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 300
    horizon = 200
    family = TaskFamily("goal_velocity")
    layout = nn.build_actor_layout(4, 2, hidden)
    params = nn.xavier_init(layout, generator(0, 0, 0, 0))

    py_rate, py_ret = bench(_kernels_py, params, hidden, horizon, episodes)
    print(f"python   backend: {py_rate/1e3:8.1f}k steps/s (episode return {py_ret:.3f})")
    if _kernels is None:
        print("compiled backend: not built")
        return
    c_rate, c_ret = bench(_kernels, params, hidden, horizon, episodes)
    print(f"compiled backend: {c_rate/1e3:8.1f}k steps/s (episode return {c_ret:.3f})")
    print(f"speedup: {c_rate/py_rate:.1f}x  (hidden={hidden}, horizon={horizon}, "
          f"dynamics dt={family.dt})")


if __name__ == "__main__":
    main()
