"""Held-out-task evaluation: pre- vs post-adaptation returns.

For each held-out task the evaluation samples K actors and one critic from
the checkpointed distributions with task-specific seeds, measures the
mean-of-K actor's return before any adaptation, runs the full inner loop,
and measures the adapted actor's return. The whole procedure is a pure
function of (checkpoint, number of tasks, adaptation steps, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from esmeta import seeding
from esmeta.adapt import adapt, collect_exploration_rollouts
from esmeta.checkpoint import Checkpoint
from esmeta.dist import GaussianParamDist, PerturbationSeed, sample, sample_k_and_mean
from esmeta.tasks import Task, rollout, sample_task
from esmeta.trainer import MetaConfig

_ROLE_EVAL_TASKS = 201
_ROLE_EVAL_PERTURB = 202
_ROLE_EVAL_ADAPT = 203


@dataclass(frozen=True)
class EvalRow:
    task_index: int
    goal_x: float
    goal_y: float
    pre_return: float
    post_return: float


@dataclass(frozen=True)
class EvalReport:
    rows: list[EvalRow]
    adapt_steps: int
    seed: int

    @property
    def mean_pre(self) -> float:
        return float(np.mean([r.pre_return for r in self.rows]))

    @property
    def mean_post(self) -> float:
        return float(np.mean([r.post_return for r in self.rows]))


def dists_from_checkpoint(ckpt: Checkpoint, cfg: MetaConfig) -> tuple[GaussianParamDist, GaussianParamDist]:
    """Rebuild the distribution pair, widening sigma bounds if needed."""

    def build(layout, mu, sigma):
        return GaussianParamDist(
            mu=mu,
            sigma=sigma,
            layout=layout,
            sigma_min=min(cfg.sigma_min, float(sigma.min())),
            sigma_max=max(cfg.sigma_max, float(sigma.max())),
        )

    actor = build(ckpt.actor_layout, ckpt.mu_a, ckpt.sigma_a)
    critic = build(ckpt.critic_layout, ckpt.mu_c, ckpt.sigma_c)
    return actor, critic


def held_out_tasks(cfg: MetaConfig, n_tasks: int, seed: int) -> list[Task]:
    rng = seeding.generator(seed, _ROLE_EVAL_TASKS, 0, 0)
    return [sample_task(cfg.family, rng) for _ in range(n_tasks)]


def evaluate_task(
    dist_actor: GaussianParamDist,
    dist_critic: GaussianParamDist,
    task: Task,
    cfg: MetaConfig,
    adapt_steps: int,
    seed: int,
    task_index: int,
) -> tuple[float, float]:
    """(pre_return, post_return) of the inner loop on one task."""
    master = seeding.derive_seed(seed, task_index, _ROLE_EVAL_PERTURB, 0)
    actor_seeds = [
        PerturbationSeed(worker_index=0, member_index=j, master_seed=master)
        for j in range(cfg.K)
    ]
    critic_seed = PerturbationSeed(worker_index=0, member_index=cfg.K, master_seed=master)
    samples, mean_actor = sample_k_and_mean(dist_actor, actor_seeds)
    pre_return = rollout(mean_actor, task, horizon=cfg.horizon).episode_return
    if adapt_steps == 0:
        return pre_return, pre_return

    init_critic = sample(dist_critic, critic_seed)
    rng = seeding.generator(seed, task_index, _ROLE_EVAL_ADAPT, 0)
    buffer = collect_exploration_rollouts(
        task, samples, cfg.trajectories_per_actor, cfg.horizon, rng
    )
    adapt_cfg = replace(cfg.adapt, grad_steps_per_adapt=adapt_steps)
    adapted_actor, _ = adapt(mean_actor, init_critic, buffer, adapt_cfg, rng)
    post_return = rollout(adapted_actor, task, horizon=cfg.horizon).episode_return
    return pre_return, post_return


def run_eval(
    ckpt: Checkpoint,
    eval_tasks: int,
    adapt_steps: int,
    seed: int,
    cfg: MetaConfig,
) -> EvalReport:
    """Pre/post-adaptation pairs on eval_tasks held-out tasks."""
    if eval_tasks < 1:
        raise ValueError("eval_tasks must be >= 1")
    if adapt_steps < 0:
        raise ValueError("adapt_steps must be >= 0")
    dist_actor, dist_critic = dists_from_checkpoint(ckpt, cfg)
    tasks = held_out_tasks(cfg, eval_tasks, seed)
    rows = []
    for i, task in enumerate(tasks):
        pre, post = evaluate_task(dist_actor, dist_critic, task, cfg, adapt_steps, seed, i)
        goal_y = float(task.goal[1]) if task.goal.shape[0] > 1 else 0.0
        rows.append(
            EvalRow(
                task_index=i,
                goal_x=float(task.goal[0]),
                goal_y=goal_y,
                pre_return=pre,
                post_return=post,
            )
        )
    return EvalReport(rows=rows, adapt_steps=adapt_steps, seed=seed)


EVAL_HEADER = "task_index,goal_x,goal_y,pre_return,post_return"


def eval_report_csv(report: EvalReport) -> str:
    lines = [EVAL_HEADER]
    for r in report.rows:
        lines.append(
            f"{r.task_index},{r.goal_x!r},{r.goal_y!r},{r.pre_return!r},{r.post_return!r}"
        )
    return "\n".join(lines) + "\n"


def write_eval_report(report: EvalReport, path: str | Path):
    Path(path).write_text(eval_report_csv(report))
