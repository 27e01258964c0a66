"""Timing sweep over optimization levels and the held-out generalization study."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from pydantic import BaseModel, Field, field_validator

from .kb_language import Program, TaskDef, load_program
from .optimizer import OptLevel, optimize
from .planner import Failure, PlanLimits, Planner, compile_and_plan
from .world_model import FactBase, SceneGraph

logger = logging.getLogger(__name__)

CSV_HEADER = ("task", "level", "status", "compile_s", "median_s", "min_s", "max_s", "total_s", "plan_length")
LEVEL_ORDER = {level: position for position, level in enumerate(OptLevel)}

# Step counts of hand-checked household scripts for the seed tasks.
REFERENCE_PLAN_LENGTHS = {
    "go_to_sleep": 3,
    "browse_internet": 8,
    "wash_teeth": 10,
    "brush_teeth": 10,
    "vacuum": 5,
    "change_sheets": 30,
    "wash_dirty_dishes": 12,
    "feed_me": 8,
    "breakfast": 7,
    "read": 6,
}


class BenchSpec(BaseModel):
    tasks: list[str] = Field(default_factory=list)
    levels: list[OptLevel] = Field(default_factory=lambda: list(OptLevel))
    repetitions: int = Field(default=5, ge=1)
    timeout_s: float = Field(default=600.0, gt=0)

    @field_validator("levels", mode="before")
    @classmethod
    def _parse_levels(cls, value: object) -> object:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value


@dataclass(frozen=True)
class BenchRow:
    task: str
    level: str
    status: str
    compile_s: float | None = None
    median_s: float | None = None
    min_s: float | None = None
    max_s: float | None = None
    plan_length: int | None = None

    @property
    def total_s(self) -> float | None:
        if self.compile_s is None or self.median_s is None:
            return None
        return self.compile_s + self.median_s

    def cells(self) -> list[str]:
        def fmt(value: float | None) -> str:
            return "" if value is None else f"{value:.6f}"

        return [
            self.task,
            self.level,
            self.status,
            fmt(self.compile_s),
            fmt(self.median_s),
            fmt(self.min_s),
            fmt(self.max_s),
            fmt(self.total_s),
            "" if self.plan_length is None else str(self.plan_length),
        ]


def bench_cell(
    program: Program,
    facts: FactBase,
    scene: SceneGraph,
    task: TaskDef,
    level: OptLevel,
    repetitions: int,
    limits: PlanLimits,
) -> BenchRow:
    started = time.perf_counter()
    compiled = optimize(program, facts, scene, task, level)
    compile_s = time.perf_counter() - started

    times: list[float] = []
    length: int | None = None
    for repetition in range(repetitions):
        begun = time.perf_counter()
        result = Planner(compiled, limits).plan(task)
        elapsed = time.perf_counter() - begun
        if isinstance(result, Failure):
            status = "timeout" if result.reason == "timeout" else "failure"
            logger.warning("[Bench] %s at %s: %s on repetition %d", task.name, level.value, result, repetition + 1)
            if status == "timeout":
                return BenchRow(task.name, level.value, status)
            return BenchRow(task.name, level.value, status, compile_s=compile_s)
        times.append(elapsed)
        length = len(result[0])

    return BenchRow(
        task.name,
        level.value,
        "ok",
        compile_s=compile_s,
        median_s=statistics.median(times),
        min_s=min(times),
        max_s=max(times),
        plan_length=length,
    )


def run_bench(
    spec: BenchSpec,
    program: Program,
    facts: FactBase,
    scene: SceneGraph,
    limits: PlanLimits | None = None,
) -> list[BenchRow]:
    """One row per task and level, sorted task-then-level. Never aborts the sweep."""

    if spec.repetitions < 3:
        logger.warning("[Bench] %d repetitions give a noisy median", spec.repetitions)
    base = limits or PlanLimits()
    cell_limits = PlanLimits(base.max_depth, base.max_expansions, spec.timeout_s)
    rows: list[BenchRow] = []
    for name in sorted(spec.tasks):
        task = program.task(name)
        for level in sorted(spec.levels, key=LEVEL_ORDER.__getitem__):
            logger.info("[Bench] %s at %s", name, level.value)
            rows.append(bench_cell(program, facts, scene, task, level, spec.repetitions, cell_limits))
    return rows


def summarize(rows: Sequence[BenchRow]) -> list[BenchRow]:
    """Per-level averages over the rows that completed."""

    summary: list[BenchRow] = []
    levels = sorted({row.level for row in rows}, key=lambda value: LEVEL_ORDER[OptLevel(value)])
    for level in levels:
        done = [row for row in rows if row.level == level and row.status == "ok"]
        if not done:
            summary.append(BenchRow("AVERAGE", level, "none"))
            continue
        summary.append(
            BenchRow(
                "AVERAGE",
                level,
                "ok",
                compile_s=statistics.fmean(row.compile_s for row in done),  # type: ignore[misc]
                median_s=statistics.fmean(row.median_s for row in done),  # type: ignore[misc]
                min_s=min(row.min_s for row in done),  # type: ignore[type-var]
                max_s=max(row.max_s for row in done),  # type: ignore[type-var]
            )
        )
    return summary


def write_csv(rows: Sequence[BenchRow], stream: TextIO, with_summary: bool = True) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.cells())
    if with_summary:
        for row in summarize(rows):
            writer.writerow(row.cells())


def to_csv(rows: Sequence[BenchRow], with_summary: bool = True) -> str:
    buffer = io.StringIO()
    write_csv(rows, buffer, with_summary)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Generalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskOutcome:
    task: str
    solved: bool
    plan_length: int | None = None
    reason: str | None = None
    gap: str | None = None
    level: str | None = None


@dataclass
class GeneralizationReport:
    outcomes: list[TaskOutcome] = field(default_factory=list)

    @property
    def solved(self) -> list[str]:
        return [outcome.task for outcome in self.outcomes if outcome.solved]

    @property
    def solved_fraction(self) -> float:
        return len(self.solved) / len(self.outcomes) if self.outcomes else 0.0

    def by_gap(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for outcome in self.outcomes:
            if not outcome.solved:
                groups.setdefault(outcome.gap or outcome.reason or "unknown", []).append(outcome.task)
        return groups

    def render(self) -> str:
        lines = []
        for outcome in self.outcomes:
            if outcome.solved:
                lines.append(f"{outcome.task}\tsolved\t{outcome.plan_length} steps at {outcome.level}")
            else:
                lines.append(f"{outcome.task}\tunsolved\t{outcome.gap or outcome.reason}")
        lines.append(f"solved {len(self.solved)}/{len(self.outcomes)} ({self.solved_fraction:.0%})")
        for gap, tasks in sorted(self.by_gap().items()):
            lines.append(f"missing capability `{gap}`: {', '.join(tasks)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "solved_fraction": self.solved_fraction,
            "tasks": [outcome.__dict__ for outcome in self.outcomes],
            "gaps": self.by_gap(),
        }


def load_holdout(directory: str | Path) -> Program:
    """Every ``*.vkb`` file under ``directory``, in file-name order."""

    paths = sorted(Path(directory).glob("*.vkb"))
    return load_program(*paths) if paths else Program()


def run_generalization(
    program: Program,
    holdout: Program,
    facts: FactBase,
    scene: SceneGraph,
    level: OptLevel | str = OptLevel.FULL,
    limits: PlanLimits | None = None,
) -> GeneralizationReport:
    """Plan every held-out task with the actions ``program`` already has."""

    combined = program.merged(Program(tasks=holdout.tasks))
    report = GeneralizationReport()
    for task in holdout.tasks:
        outcome = compile_and_plan(combined, facts, scene, task, level, limits)
        if outcome.ok:
            plan = outcome.plan
            assert plan is not None
            report.outcomes.append(TaskOutcome(task.name, True, len(plan), level=outcome.compiled.level.value))
        else:
            failure = outcome.failure
            assert failure is not None
            report.outcomes.append(TaskOutcome(task.name, False, reason=failure.reason, gap=failure.gap))
    logger.info("[Bench] generalization solved %d of %d", len(report.solved), len(report.outcomes))
    return report


def plan_lengths(
    program: Program,
    facts: FactBase,
    scene: SceneGraph,
    tasks: Iterable[str],
    level: OptLevel | str = OptLevel.FULL,
    limits: PlanLimits | None = None,
) -> list[tuple[str, int | None, int | None]]:
    """(task, our plan length, reference length) for each named task."""

    rows = []
    for name in tasks:
        outcome = compile_and_plan(program, facts, scene, program.task(name), level, limits)
        length = len(outcome.plan) if outcome.plan is not None else None
        rows.append((name, length, REFERENCE_PLAN_LENGTHS.get(name)))
    return rows


__all__ = [
    "BenchRow",
    "BenchSpec",
    "CSV_HEADER",
    "GeneralizationReport",
    "REFERENCE_PLAN_LENGTHS",
    "TaskOutcome",
    "bench_cell",
    "load_holdout",
    "plan_lengths",
    "run_bench",
    "run_generalization",
    "summarize",
    "to_csv",
    "write_csv",
]
