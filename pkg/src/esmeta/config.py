"""Flat key=value run configuration with CLI overrides.

The file format is one `key = value` pair per line; `#` starts a comment.
Command-line `--set key=value` pairs win over the file. Unknown keys and
out-of-range values are rejected with the offending key named.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from esmeta.adapt import AdaptConfig
from esmeta.errors import ConfigError
from esmeta.tasks import FAMILY_NAMES, TaskFamily
from esmeta.trainer import MetaConfig

_BASE_META = MetaConfig()
_BASE_ADAPT = AdaptConfig()
_BASE_FAMILY = TaskFamily("goal_velocity")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class _Key:
    convert: type | object
    default: object
    check: object = None  # predicate(value) -> bool
    constraint: str = ""


_KEYS: dict[str, _Key] = {
    # outer loop
    "M": _Key(int, _BASE_META.M, lambda v: v >= 1, ">= 1"),
    "K": _Key(int, _BASE_META.K, lambda v: v >= 1, ">= 1"),
    "tasks_per_iteration": _Key(int, _BASE_META.tasks_per_iteration, lambda v: v >= 1, ">= 1"),
    "trajectories_per_actor": _Key(
        int, _BASE_META.trajectories_per_actor, lambda v: v >= 1, ">= 1"
    ),
    "iterations": _Key(int, _BASE_META.iterations, lambda v: v >= 0, ">= 0"),
    "master_seed": _Key(int, _BASE_META.master_seed, lambda v: v >= 0, ">= 0"),
    "hidden": _Key(int, _BASE_META.hidden, lambda v: v >= 1, ">= 1"),
    "lr_mu_actor": _Key(float, _BASE_META.lr_mu_actor, lambda v: v >= 0.0, ">= 0"),
    "lr_sigma_actor": _Key(float, _BASE_META.lr_sigma_actor, lambda v: v >= 0.0, ">= 0"),
    "lr_mu_critic": _Key(float, _BASE_META.lr_mu_critic, lambda v: v >= 0.0, ">= 0"),
    "lr_sigma_critic": _Key(float, _BASE_META.lr_sigma_critic, lambda v: v >= 0.0, ">= 0"),
    "fitness_shaping": _Key(
        str, _BASE_META.fitness_shaping, lambda v: v in ("none", "centered_rank"),
        "one of none|centered_rank",
    ),
    "critic_fitness_shaping": _Key(
        str, _BASE_META.critic_fitness_shaping, lambda v: v in ("none", "centered_rank"),
        "one of none|centered_rank",
    ),
    "sigma_init": _Key(float, _BASE_META.sigma_init, lambda v: v > 0.0, "> 0"),
    "sigma_min": _Key(float, _BASE_META.sigma_min, lambda v: v > 0.0, "> 0"),
    "sigma_max": _Key(float, _BASE_META.sigma_max, lambda v: v > 0.0, "> 0"),
    # inner loop
    "gamma": _Key(float, _BASE_ADAPT.gamma, lambda v: 0.0 <= v < 1.0, "in [0, 1)"),
    "critic_lr": _Key(float, _BASE_ADAPT.critic_lr, lambda v: v >= 0.0, ">= 0"),
    "actor_lr": _Key(float, _BASE_ADAPT.actor_lr, lambda v: v >= 0.0, ">= 0"),
    "batch_size": _Key(int, _BASE_ADAPT.batch_size, lambda v: v >= 1, ">= 1"),
    "grad_steps_per_adapt": _Key(
        int, _BASE_ADAPT.grad_steps_per_adapt, lambda v: v >= 1, ">= 1"
    ),
    "use_target_nets": _Key(_parse_bool, _BASE_ADAPT.use_target_nets),
    "tau": _Key(float, _BASE_ADAPT.tau, lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
    # task family
    "task_family": _Key(
        str, "point-vel", lambda v: v in FAMILY_NAMES, "one of " + "|".join(FAMILY_NAMES)
    ),
    "horizon": _Key(int, _BASE_FAMILY.horizon, lambda v: v >= 1, ">= 1"),
    "goal_low": _Key(float, None),
    "goal_high": _Key(float, None),
    "dt": _Key(float, _BASE_FAMILY.dt, lambda v: v > 0.0, "> 0"),
    "accel_max": _Key(float, _BASE_FAMILY.accel_max, lambda v: v > 0.0, "> 0"),
    "speed_max": _Key(float, _BASE_FAMILY.speed_max, lambda v: v > 0.0, "> 0"),
    # experiment surface
    "output_dir": _Key(str, "out"),
    "checkpoint_every": _Key(int, 100, lambda v: v >= 1, ">= 1"),
    "eval_tasks": _Key(int, 25, lambda v: v >= 1, ">= 1"),
}


@dataclass(frozen=True)
class RunConfig:
    meta: MetaConfig
    task_family: str
    output_dir: Path
    checkpoint_every: int
    eval_tasks: int


def _parse_pair(line: str, source: str) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"{source}: expected key=value, got {line!r}")
    key, value = line.split("=", 1)
    return key.strip(), value.strip()


def _convert(key: str, text: str):
    spec = _KEYS[key]
    try:
        value = spec.convert(text)
    except (ValueError, TypeError):
        raise ConfigError(f"invalid value for {key!r}: {text!r}") from None
    if spec.check is not None and not spec.check(value):
        raise ConfigError(f"value for {key!r} must be {spec.constraint}, got {text!r}")
    return value


def parse_config(path: str | Path | None = None, overrides: list[str] = ()) -> RunConfig:
    """Resolve file values plus overrides against the defaults."""
    values = {key: spec.default for key, spec in _KEYS.items()}

    raw: list[tuple[str, str, str]] = []
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            key, value = _parse_pair(stripped, f"{path}:{lineno}")
            raw.append((key, value, f"{path}:{lineno}"))
    for item in overrides:
        key, value = _parse_pair(item, "--set")
        raw.append((key, value, "--set"))

    for key, value, source in raw:
        if key not in _KEYS:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        values[key] = _convert(key, value)

    try:
        family = TaskFamily(
            kind=FAMILY_NAMES[values["task_family"]],
            goal_low=values["goal_low"],
            goal_high=values["goal_high"],
            horizon=values["horizon"],
            dt=values["dt"],
            accel_max=values["accel_max"],
            speed_max=values["speed_max"],
        )
        adapt = AdaptConfig(
            gamma=values["gamma"],
            critic_lr=values["critic_lr"],
            actor_lr=values["actor_lr"],
            batch_size=values["batch_size"],
            grad_steps_per_adapt=values["grad_steps_per_adapt"],
            use_target_nets=values["use_target_nets"],
            tau=values["tau"],
        )
        meta = MetaConfig(
            family=family,
            M=values["M"],
            K=values["K"],
            tasks_per_iteration=values["tasks_per_iteration"],
            trajectories_per_actor=values["trajectories_per_actor"],
            hidden=values["hidden"],
            lr_mu_actor=values["lr_mu_actor"],
            lr_sigma_actor=values["lr_sigma_actor"],
            lr_mu_critic=values["lr_mu_critic"],
            lr_sigma_critic=values["lr_sigma_critic"],
            fitness_shaping=values["fitness_shaping"],
            critic_fitness_shaping=values["critic_fitness_shaping"],
            sigma_init=values["sigma_init"],
            sigma_min=values["sigma_min"],
            sigma_max=values["sigma_max"],
            adapt=adapt,
            master_seed=values["master_seed"],
            iterations=values["iterations"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    return RunConfig(
        meta=meta,
        task_family=values["task_family"],
        output_dir=Path(values["output_dir"]),
        checkpoint_every=values["checkpoint_every"],
        eval_tasks=values["eval_tasks"],
    )
