"""Outer meta-training loop: M workers, seed aggregation, four SGD updates.

Per iteration the coordinator publishes an immutable snapshot of the actor
and critic distributions, runs M independent workers (sample K actors plus
one critic, collect exploration rollouts, adapt, score fitness), regenerates
the sampled parameters from the reported seeds, and steps both
distributions along the score-function gradients. Workers are pure
functions of their arguments and results are aggregated in worker-index
order, so the outcome is independent of thread count and completion order.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from esmeta import seeding
from esmeta.adapt import AdaptConfig, adapt, collect_exploration_rollouts, monte_carlo_returns
from esmeta.dist import (
    GaussianParamDist,
    MetaGradients,
    PerturbationSeed,
    SHAPING_MODES,
    initial_dist,
    nes_gradient_actor,
    nes_gradient_critic,
    sample,
    sample_k_and_mean,
    sgd_step,
    shape_fitness,
)
from esmeta.errors import IterationFailure, NumericFailure
from esmeta.nn import FlatParams, build_actor_layout, build_critic_layout, critic_forward_batch
from esmeta.tasks import ACTION_DIM, OBS_DIM, Task, TaskFamily, Trajectory, rollout, sample_task

log = logging.getLogger("esmeta")

# Stream-role tags. Perturbation streams are keyed by exactly three
# integers (master_seed, worker_index, member_index); every other stream
# uses a four-integer key with one of these tags, so roles never collide.
_ROLE_INIT = 101
_ROLE_TASKS = 102
_ROLE_ADAPT = 103
_ROLE_PERTURB = 104


@dataclass(frozen=True)
class MetaConfig:
    family: TaskFamily = field(default_factory=lambda: TaskFamily("goal_velocity"))
    M: int = 16
    K: int = 20
    tasks_per_iteration: int = 1
    trajectories_per_actor: int = 1
    hidden: int = 64
    # score-function gradients scale like |fitness|/sigma, so mu rates sized
    # for rank-shaped fitness (|F| <= 0.5) and raw-MSE critic fitness
    lr_mu_actor: float = 0.002
    lr_sigma_actor: float = 0.0002
    lr_mu_critic: float = 1e-5
    lr_sigma_critic: float = 1e-6
    fitness_shaping: str = "centered_rank"
    critic_fitness_shaping: str = "none"
    sigma_init: float = 0.05
    sigma_min: float = 1e-4
    sigma_max: float = 1.0
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    master_seed: int = 0
    iterations: int = 500

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be >= 1")
        if self.tasks_per_iteration < 1 or self.trajectories_per_actor < 1:
            raise ValueError("per-iteration counts must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        for name in ("lr_mu_actor", "lr_sigma_actor", "lr_mu_critic", "lr_sigma_critic"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.fitness_shaping not in SHAPING_MODES:
            raise ValueError(f"unknown fitness_shaping {self.fitness_shaping!r}")
        if self.critic_fitness_shaping not in SHAPING_MODES:
            raise ValueError(f"unknown critic_fitness_shaping {self.critic_fitness_shaping!r}")
        if not 0.0 < self.sigma_init <= self.sigma_max or self.sigma_init < self.sigma_min:
            raise ValueError("sigma_init must lie in [sigma_min, sigma_max]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")

    @property
    def horizon(self) -> int:
        return self.family.horizon


@dataclass(frozen=True)
class WorkerResult:
    worker_index: int
    actor_seeds: tuple[PerturbationSeed, ...]
    critic_seed: PerturbationSeed
    actor_fitness: float
    critic_fitness: float

    def __post_init__(self):
        if not (np.isfinite(self.actor_fitness) and np.isfinite(self.critic_fitness)):
            raise NumericFailure(f"worker {self.worker_index} produced non-finite fitness")


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    fitness_mean: float
    fitness_max: float
    fitness_min: float
    fitness_std: float
    sigma_mean_actor: float
    sigma_mean_critic: float
    wall_seconds: float


def thread_count() -> int:
    """Worker concurrency cap: ESMETA_THREADS, else the host's CPU count."""
    raw = os.environ.get("ESMETA_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    n = int(raw)
    if n < 1:
        raise ValueError("ESMETA_THREADS must be >= 1")
    return n


def actor_fitness(
    adapted_actor: FlatParams,
    tasks: Task | list[Task],
    horizon: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean post-adaptation episode return over the given task(s)."""
    if isinstance(tasks, Task):
        tasks = [tasks]
    if len(tasks) == 0:
        raise ValueError("need at least one task")
    returns = [rollout(adapted_actor, t, horizon=horizon, rng=rng).episode_return for t in tasks]
    return float(np.mean(returns))


def critic_fitness(adapted_critic: FlatParams, test_trajectory: Trajectory, gamma: float) -> float:
    """Negative mean squared error against Monte-Carlo returns (max is 0)."""
    if len(test_trajectory) == 0:
        raise ValueError("test trajectory is empty")
    targets = monte_carlo_returns(test_trajectory.rewards, gamma)
    q = critic_forward_batch(
        adapted_critic, test_trajectory.observations, test_trajectory.actions
    )
    err = q - targets
    return float(-np.mean(err * err))


def evaluate_worker(
    dist_actor: GaussianParamDist,
    dist_critic: GaussianParamDist,
    tasks: list[Task],
    worker_index: int,
    master_seed: int,
    cfg: MetaConfig,
) -> WorkerResult:
    """One worker: sample by seed, explore, adapt per task, score fitness.

    Pure function of its arguments; any blow-up during adaptation raises
    NumericFailure, which the coordinator treats as a dropped worker.
    """
    actor_seeds = tuple(
        PerturbationSeed(worker_index=worker_index, member_index=j, master_seed=master_seed)
        for j in range(cfg.K)
    )
    critic_seed = PerturbationSeed(
        worker_index=worker_index, member_index=cfg.K, master_seed=master_seed
    )
    samples, mean_actor = sample_k_and_mean(dist_actor, list(actor_seeds))
    init_critic = sample(dist_critic, critic_seed)

    actor_scores = []
    critic_scores = []
    for t_idx, task in enumerate(tasks):
        rng = seeding.generator(master_seed, worker_index, _ROLE_ADAPT, t_idx)
        buffer = collect_exploration_rollouts(
            task, samples, cfg.trajectories_per_actor, cfg.horizon, rng
        )
        adapted_actor, adapted_critic = adapt(mean_actor, init_critic, buffer, cfg.adapt, rng)
        test_traj = rollout(adapted_actor, task, horizon=cfg.horizon)
        actor_scores.append(test_traj.episode_return)
        critic_scores.append(critic_fitness(adapted_critic, test_traj, cfg.adapt.gamma))

    return WorkerResult(
        worker_index=worker_index,
        actor_seeds=actor_seeds,
        critic_seed=critic_seed,
        actor_fitness=float(np.mean(actor_scores)),
        critic_fitness=float(np.mean(critic_scores)),
    )


def iteration_tasks(cfg: MetaConfig, iteration_index: int) -> list[Task]:
    """The task mini-batch, shared by all workers of the iteration."""
    rng = seeding.generator(cfg.master_seed, iteration_index, _ROLE_TASKS, 0)
    return [sample_task(cfg.family, rng) for _ in range(cfg.tasks_per_iteration)]


def aggregate_gradients(
    results: list[WorkerResult],
    dist_actor: GaussianParamDist,
    dist_critic: GaussianParamDist,
    cfg: MetaConfig,
) -> tuple[MetaGradients, MetaGradients]:
    """Regenerate sampled parameters from seeds and form the two estimators."""
    actor_f = shape_fitness(
        np.array([r.actor_fitness for r in results]), cfg.fitness_shaping
    )
    critic_f = shape_fitness(
        np.array([r.critic_fitness for r in results]), cfg.critic_fitness_shaping
    )
    worker_samples = [[sample(dist_actor, s) for s in r.actor_seeds] for r in results]
    phi_samples = [sample(dist_critic, r.critic_seed) for r in results]
    grads_actor = nes_gradient_actor(worker_samples, actor_f, dist_actor)
    grads_critic = nes_gradient_critic(phi_samples, critic_f, dist_critic)
    return grads_actor, grads_critic


def meta_iteration(
    dist_actor: GaussianParamDist,
    dist_critic: GaussianParamDist,
    cfg: MetaConfig,
    iteration_index: int,
) -> tuple[GaussianParamDist, GaussianParamDist, IterationStats]:
    """One full outer-loop step; deterministic for fixed (cfg, iteration)."""
    start = time.perf_counter()
    tasks = iteration_tasks(cfg, iteration_index)
    iter_seed = seeding.derive_seed(cfg.master_seed, iteration_index, _ROLE_PERTURB, 0)

    def run_worker(i: int) -> WorkerResult | None:
        try:
            return evaluate_worker(dist_actor, dist_critic, tasks, i, iter_seed, cfg)
        except NumericFailure as exc:
            log.warning("iteration %d: dropping worker %d: %s", iteration_index, i, exc)
            return None

    threads = min(thread_count(), cfg.M)
    if threads == 1:
        results = [run_worker(i) for i in range(cfg.M)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_worker, range(cfg.M)))

    survivors = [r for r in results if r is not None]
    if not survivors:
        raise IterationFailure(f"iteration {iteration_index}: all {cfg.M} workers failed")

    grads_actor, grads_critic = aggregate_gradients(survivors, dist_actor, dist_critic, cfg)
    new_actor = sgd_step(dist_actor, grads_actor, cfg.lr_mu_actor, cfg.lr_sigma_actor)
    new_critic = sgd_step(dist_critic, grads_critic, cfg.lr_mu_critic, cfg.lr_sigma_critic)

    raw = np.array([r.actor_fitness for r in survivors])
    stats = IterationStats(
        iteration=iteration_index,
        fitness_mean=float(raw.mean()),
        fitness_max=float(raw.max()),
        fitness_min=float(raw.min()),
        fitness_std=float(raw.std()),
        sigma_mean_actor=float(new_actor.sigma.mean()),
        sigma_mean_critic=float(new_critic.sigma.mean()),
        wall_seconds=time.perf_counter() - start,
    )
    return new_actor, new_critic, stats


def initial_distributions(cfg: MetaConfig) -> tuple[GaussianParamDist, GaussianParamDist]:
    actor_layout = build_actor_layout(OBS_DIM, ACTION_DIM, cfg.hidden)
    critic_layout = build_critic_layout(OBS_DIM, ACTION_DIM, cfg.hidden)
    dist_actor = initial_dist(
        actor_layout,
        seeding.generator(cfg.master_seed, _ROLE_INIT, 0, 0),
        cfg.sigma_init,
        cfg.sigma_min,
        cfg.sigma_max,
    )
    dist_critic = initial_dist(
        critic_layout,
        seeding.generator(cfg.master_seed, _ROLE_INIT, 1, 0),
        cfg.sigma_init,
        cfg.sigma_min,
        cfg.sigma_max,
    )
    return dist_actor, dist_critic


def train(
    cfg: MetaConfig,
    on_iteration=None,
) -> tuple[GaussianParamDist, GaussianParamDist, list[IterationStats]]:
    """Run cfg.iterations meta-iterations from a fresh initialization.

    on_iteration(iteration_index, dist_actor, dist_critic, stats) is called
    after each successful iteration (checkpointing/metrics hook). Raises
    after three consecutive failed iterations.
    """
    dist_actor, dist_critic = initial_distributions(cfg)
    series: list[IterationStats] = []
    consecutive_failures = 0
    for it in range(cfg.iterations):
        try:
            dist_actor, dist_critic, stats = meta_iteration(dist_actor, dist_critic, cfg, it)
        except (IterationFailure, NumericFailure) as exc:
            consecutive_failures += 1
            log.warning("iteration %d failed (%d consecutive): %s", it, consecutive_failures, exc)
            if consecutive_failures >= 3:
                raise
            continue
        consecutive_failures = 0
        series.append(stats)
        log.info(
            "iter %d fitness mean %.3f max %.3f sigma_a %.4f sigma_c %.4f (%.2fs)",
            it,
            stats.fitness_mean,
            stats.fitness_max,
            stats.sigma_mean_actor,
            stats.sigma_mean_critic,
            stats.wall_seconds,
        )
        if on_iteration is not None:
            on_iteration(it, dist_actor, dist_critic, stats)
    return dist_actor, dist_critic, series
