"""Operator surface: train / eval / inspect subcommands.

Exit codes: 0 success, 1 configuration error, 2 runtime error. Results are
deterministic for a fixed config; ESMETA_THREADS only changes wall time.
The metrics CSV is part of the deterministic artifact set, so its
wall_seconds column is zeroed; measured timings go to the stderr log.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from esmeta import checkpoint as ckpt_io
from esmeta import metrics
from esmeta.config import parse_config
from esmeta.errors import ConfigError
from esmeta.evaluate import eval_report_csv, run_eval, write_eval_report
from esmeta.trainer import initial_distributions, train

log = logging.getLogger("esmeta")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esmeta",
        description="Meta-train Gaussian policy-parameter distributions by "
        "evolution strategies with inner-loop adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="run meta-training from a config file")
    train_p.add_argument("--config", type=Path, default=None, help="key=value config file")
    train_p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable; wins over the file)",
    )

    eval_p = sub.add_parser("eval", help="pre/post-adaptation returns on held-out tasks")
    eval_p.add_argument("--checkpoint", type=Path, required=True)
    eval_p.add_argument("--tasks", type=int, default=25)
    eval_p.add_argument("--adapt-steps", type=int, default=1)
    eval_p.add_argument("--seed", type=int, default=0)
    eval_p.add_argument("--config", type=Path, default=None, help="eval hyperparameters")
    eval_p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    eval_p.add_argument("--output", type=Path, default=None, help="CSV path (default stdout)")

    inspect_p = sub.add_parser("inspect", help="print checkpoint dimensions and sigma stats")
    inspect_p.add_argument("--checkpoint", type=Path, required=True)
    return parser


def _checkpoint_of(dist_actor, dist_critic, iteration: int, master_seed: int) -> ckpt_io.Checkpoint:
    return ckpt_io.Checkpoint(
        format_version=ckpt_io.FORMAT_VERSION,
        actor_layout=dist_actor.layout,
        critic_layout=dist_critic.layout,
        mu_a=dist_actor.mu,
        sigma_a=dist_actor.sigma,
        mu_c=dist_critic.mu,
        sigma_c=dist_critic.sigma,
        iteration=iteration,
        master_seed=master_seed,
    )


def _cmd_train(args) -> int:
    run_cfg = parse_config(args.config, args.set)
    cfg = run_cfg.meta
    out = run_cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    def on_iteration(it, dist_actor, dist_critic, stats):
        completed = it + 1
        if completed % run_cfg.checkpoint_every == 0:
            ckpt_io.save_checkpoint(
                _checkpoint_of(dist_actor, dist_critic, completed, cfg.master_seed),
                out / f"checkpoint_{completed:06d}.esml",
            )

    dist_actor, dist_critic, series = train(cfg, on_iteration=on_iteration)

    completed = series[-1].iteration + 1 if series else 0
    ckpt_io.save_checkpoint(
        _checkpoint_of(dist_actor, dist_critic, completed, cfg.master_seed),
        out / "checkpoint_final.esml",
    )
    if series:
        deterministic = [replace(s, wall_seconds=0.0) for s in series]
        metrics.emit_metrics(deterministic, out / "metrics.csv")
        total = sum(s.wall_seconds for s in series)
        log.info("trained %d iterations in %.1fs; artifacts in %s", len(series), total, out)
    return 0


def _cmd_eval(args) -> int:
    run_cfg = parse_config(args.config, args.set)
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    report = run_eval(ckpt, args.tasks, args.adapt_steps, args.seed, run_cfg.meta)
    if args.output is not None:
        write_eval_report(report, args.output)
    else:
        sys.stdout.write(eval_report_csv(report))
    print(
        f"tasks={args.tasks} adapt_steps={args.adapt_steps} "
        f"mean_pre={report.mean_pre:.3f} mean_post={report.mean_post:.3f}",
        file=sys.stderr,
    )
    return 0


def _cmd_inspect(args) -> int:
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)

    def dims(layout):
        return "-".join(str(s.input_dim) for s in layout.layers) + f"-{layout.layers[-1].output_dim}"

    print(f"format_version: {ckpt.format_version}")
    print(f"iteration: {ckpt.iteration}")
    print(f"master_seed: {ckpt.master_seed}")
    print(f"actor: dims {dims(ckpt.actor_layout)}, {ckpt.actor_layout.total_params} params")
    print(f"critic: dims {dims(ckpt.critic_layout)}, {ckpt.critic_layout.total_params} params")
    for name, sigma in (("sigma_a", ckpt.sigma_a), ("sigma_c", ckpt.sigma_c)):
        print(
            f"{name}: min {sigma.min():.6g} mean {sigma.mean():.6g} max {sigma.max():.6g}"
        )
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = _build_parser().parse_args(argv)
    handlers = {"train": _cmd_train, "eval": _cmd_eval, "inspect": _cmd_inspect}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
