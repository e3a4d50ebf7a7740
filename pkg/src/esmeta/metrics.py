"""CSV emission/parsing for per-iteration training metrics.

Floats are written with repr (shortest exact round-trip), so
emit -> parse -> emit is a fixed point.
"""

from __future__ import annotations

from pathlib import Path

from esmeta.trainer import IterationStats

HEADER = (
    "iteration,fitness_mean,fitness_max,fitness_min,fitness_std,"
    "sigma_mean_actor,sigma_mean_critic,wall_seconds"
)

_FIELDS = (
    "fitness_mean",
    "fitness_max",
    "fitness_min",
    "fitness_std",
    "sigma_mean_actor",
    "sigma_mean_critic",
    "wall_seconds",
)


def emit_metrics(series: list[IterationStats], path: str | Path):
    """One row per iteration under the fixed header."""
    if len(series) == 0:
        raise ValueError("metrics series is empty")
    lines = [HEADER]
    for stats in series:
        values = [str(int(stats.iteration))]
        values += [repr(float(getattr(stats, name))) for name in _FIELDS]
        lines.append(",".join(values))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_metrics(path: str | Path) -> list[IterationStats]:
    text = Path(path).read_text()
    lines = [line for line in text.splitlines() if line]
    if not lines or lines[0] != HEADER:
        raise ValueError(f"unexpected metrics header in {path}")
    series = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 1 + len(_FIELDS):
            raise ValueError(f"bad metrics row: {line!r}")
        series.append(
            IterationStats(
                iteration=int(cells[0]),
                **{name: float(cell) for name, cell in zip(_FIELDS, cells[1:])},
            )
        )
    return series
