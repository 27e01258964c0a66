"""``kbplan`` command line.

Exit codes: 0 success, 1 usage or I/O error, 2 planning or execution
failure, 3 benchmark finished with timeouts.
"""

from __future__ import annotations

import functools
import json
import logging
from pathlib import Path
from typing import Any, Callable

import click
from pydantic import ValidationError

from . import HOLDOUT_DIR, SEED_KB
from .bench import BenchSpec, load_holdout, run_bench, run_generalization, write_csv
from .errors import KBPlanError
from .executor_sim import WorldModel, execute, parse_script, score_script
from .kb_language import Program, load_program
from .optimizer import CompiledKB, OptLevel, optimize
from .planner import Failure, PlanLimits, Planner, explain
from .scenes import reference_scene, synthetic_scene, write_scene
from .settings import Settings, configure_logging, load_settings
from .world_model import load_scene, to_facts

logger = logging.getLogger(__name__)

EXIT_FAILURE = 2
EXIT_TIMEOUTS = 3

LEVEL_CHOICE = click.Choice([level.value for level in OptLevel], case_sensitive=False)


def _usage_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    """Report engine and I/O errors as click usage errors (exit 1)."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except (KBPlanError, OSError, ValidationError, json.JSONDecodeError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _settings() -> Settings:
    return click.get_current_context().find_object(Settings) or Settings()


def _limits() -> PlanLimits:
    return PlanLimits.from_settings(_settings())


def _program(paths: tuple[Path, ...]) -> Program:
    return load_program(*(paths or (SEED_KB,)))


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text, encoding="utf-8")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="key=value file of default limits.")
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
@click.version_option(package_name="kbplan")
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, verbose: bool) -> None:
    """Plan household tasks against a scene-derived knowledge base."""

    try:
        settings = load_settings(config_path)
    except ValidationError as exc:
        raise click.ClickException(f"Invalid settings: {exc}") from exc
    configure_logging(settings, verbose)
    ctx.obj = settings


@cli.command()
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Fact dump destination (stdout when omitted).")
@_usage_errors
def ingest(scene_path: Path, output: Path | None) -> None:
    """Convert a scene graph to a fact dump."""

    facts = to_facts(load_scene(scene_path))
    _emit(facts.dump(), output)
    logger.info("[CLI] %d fact lines from %s", facts.line_count(), scene_path)


@cli.command(name="compile")
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kb", "kb_paths", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path), help="KB files (default: the shipped seed KB).")
@click.option("--task", "task_name", required=True)
@click.option("--opt", "--level", "level", type=LEVEL_CHOICE, default=OptLevel.FULL.value, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--dump-provenance", "--provenance", "provenance", type=click.Path(dir_okay=False, path_type=Path), help="Write the pruning report here.")
@_usage_errors
def compile_kb(scene_path: Path, kb_paths: tuple[Path, ...], task_name: str, level: str, output: Path, provenance: Path | None) -> None:
    """Optimize a KB for one task and save the compiled artifact."""

    scene = load_scene(scene_path)
    program = _program(kb_paths)
    task = program.task(task_name)
    compiled = optimize(program, to_facts(scene), scene, task, level)
    compiled.save(output)
    if provenance is not None:
        provenance.write_text(compiled.provenance_report(), encoding="utf-8")
    click.echo(f"{task.name} at {compiled.level.value}: {compiled.fact_count()} facts, {len(compiled.program.rules)} rules")


@cli.command()
@click.argument("compiled_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--task", "task_name", help="Task to plan (default: the task the KB was compiled for).")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Plan file (stdout when omitted).")
@click.option("--justify", type=click.Path(dir_okay=False, path_type=Path), help="Write the justification trace here.")
@click.option("--trace", is_flag=True, help="Stream the inference derivations behind the plan to stderr.")
@click.pass_context
@_usage_errors
def plan(
    ctx: click.Context, compiled_path: Path, task_name: str | None, output: Path | None, justify: Path | None, trace: bool
) -> None:
    """Plan on a compiled KB."""

    compiled = CompiledKB.load(compiled_path)
    if task_name:
        task = compiled.program.task(task_name)
    elif compiled.task is not None:
        task = compiled.task
    else:
        raise click.UsageError("The compiled KB names no task; pass --task")

    result = Planner(compiled, _limits(), _settings().inference_max_depth).plan(task)
    if isinstance(result, Failure):
        click.echo(f"planning failed: {result}", err=True)
        ctx.exit(EXIT_FAILURE)
    steps, justification = result
    _emit(steps.render(), output)
    if justify is not None:
        justify.write_text(justification.render(), encoding="utf-8")
    if trace:
        emit = functools.partial(click.echo, err=True)
        explain(compiled, steps.steps, compiled.goal(task), emit, _settings().inference_max_depth)


@cli.command(name="exec")
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("script_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--log", "log_path", type=click.Path(dir_okay=False, path_type=Path), help="JSON-lines step log.")
@click.pass_context
@_usage_errors
def exec_script(ctx: click.Context, scene_path: Path, script_path: Path, log_path: Path | None) -> None:
    """Run a plan-format script in the simulator."""

    world = WorldModel.from_scene(load_scene(scene_path))
    try:
        steps = parse_script(script_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    result = execute(world, steps)
    if log_path is not None:
        log_path.write_text(result.log_lines(), encoding="utf-8")
    if not result.completed:
        click.echo(f"failed at step {result.failed_step}: {result.reason}", err=True)
        ctx.exit(EXIT_FAILURE)
    click.echo(f"completed {len(steps)} steps")


@cli.command()
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("script_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kb", "kb_paths", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--task", "task_name", required=True)
@_usage_errors
def score(scene_path: Path, script_path: Path, kb_paths: tuple[Path, ...], task_name: str) -> None:
    """Score a script's executability and correctness for a task."""

    program = _program(kb_paths)
    world = WorldModel.from_scene(load_scene(scene_path))
    verdict = score_script(world, script_path.read_text(encoding="utf-8"), program.task(task_name), program)
    click.echo(json.dumps(verdict.to_json()))


@cli.command()
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kb", "kb_paths", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tasks", default="", help="Comma-separated task names (default: every task in the KB).")
@click.option("--levels", default=",".join(level.value for level in OptLevel), show_default=True)
@click.option("--repetitions", type=int, help="Plan repetitions per cell (default from settings).")
@click.option("--timeout", "timeout_s", type=float, help="Per-cell plan timeout in seconds (default from settings).")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="CSV destination (stdout when omitted).")
@click.pass_context
@_usage_errors
def bench(
    ctx: click.Context,
    scene_path: Path,
    kb_paths: tuple[Path, ...],
    tasks: str,
    levels: str,
    repetitions: int | None,
    timeout_s: float | None,
    output: Path | None,
) -> None:
    """Time every task at every optimization level."""

    settings = _settings()
    program = _program(kb_paths)
    names = [name.strip() for name in tasks.split(",") if name.strip()] or [task.name for task in program.tasks]
    spec = BenchSpec(
        tasks=names,
        levels=levels,  # type: ignore[arg-type]
        repetitions=repetitions or settings.bench_repetitions,
        timeout_s=timeout_s or settings.wall_timeout_s,
    )
    scene = load_scene(scene_path)
    rows = run_bench(spec, program, to_facts(scene), scene, _limits())
    if output is None:
        write_csv(rows, click.get_text_stream("stdout"))
    else:
        with output.open("w", encoding="utf-8", newline="") as handle:
            write_csv(rows, handle)
    if any(row.status == "timeout" for row in rows):
        ctx.exit(EXIT_TIMEOUTS)


@cli.command()
@click.argument("scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kb", "kb_paths", multiple=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--holdout", "holdout_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=HOLDOUT_DIR, show_default=True)
@click.option("--opt", "--level", "level", type=LEVEL_CHOICE, default=OptLevel.FULL.value, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
@_usage_errors
def generalize(scene_path: Path, kb_paths: tuple[Path, ...], holdout_dir: Path, level: str, as_json: bool) -> None:
    """Plan held-out tasks with the KB's existing actions."""

    program = _program(kb_paths)
    scene = load_scene(scene_path)
    report = run_generalization(program, load_holdout(holdout_dir), to_facts(scene), scene, level, _limits())
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(report.render(), nl=False)


@cli.command(name="gen-scene")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--objects", type=int, help="Node count of the synthetic scene (default from settings).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--reference", is_flag=True, help="Write the small reference household instead.")
@_usage_errors
def gen_scene(output: Path, objects: int | None, seed: int, reference: bool) -> None:
    """Write a scene graph JSON file."""

    document = reference_scene() if reference else synthetic_scene(objects or _settings().scene_objects, seed)
    write_scene(document, output)
    click.echo(f"wrote {len(document['nodes'])} nodes and {len(document['edges'])} edges to {output}")


__all__ = ["cli"]
