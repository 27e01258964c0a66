from __future__ import annotations

import json
import shutil

import pytest
from click.testing import CliRunner

from kbplan import HOLDOUT_DIR, SCRIPTS_DIR, SEED_KB
from kbplan.bench import CSV_HEADER
from kbplan.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def _compile(runner, scene_file, tmp_path, task, *extra):
    out = tmp_path / f"{task}.json"
    result = runner.invoke(cli, ["compile", str(scene_file), "--task", task, "-o", str(out), *extra])
    assert result.exit_code == 0, result.output
    return out


def test_gen_scene_reference(runner, tmp_path):
    out = tmp_path / "ref.json"
    result = runner.invoke(cli, ["gen-scene", "--reference", "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert len(json.loads(out.read_text())["nodes"]) == 42


def test_gen_scene_synthetic(runner, tmp_path):
    out = tmp_path / "big.json"
    result = runner.invoke(cli, ["gen-scene", "-o", str(out), "--objects", "120", "--seed", "4"])
    assert result.exit_code == 0, result.output
    assert len(json.loads(out.read_text())["nodes"]) == 120


def test_ingest_prints_the_fact_dump(runner, scene_file):
    result = runner.invoke(cli, ["ingest", str(scene_file)])
    assert result.exit_code == 0
    assert "type(bed17, bed)." in result.stdout.splitlines()


def test_ingest_rejects_broken_json(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    result = runner.invoke(cli, ["ingest", str(bad)])
    assert result.exit_code == 1


def test_compile_then_plan(runner, scene_file, tmp_path):
    report = tmp_path / "pruned.tsv"
    compiled = _compile(runner, scene_file, tmp_path, "go_to_sleep", "--provenance", str(report))
    assert report.read_text().startswith("stage\tkind\titem\n")

    trace = tmp_path / "trace.txt"
    result = runner.invoke(cli, ["plan", str(compiled), "--justify", str(trace)])
    assert result.exit_code == 0, result.output
    assert result.stdout.splitlines() == ["[Walk] <bedroom> (3)", "[Walk] <bed> (17)", "[Lie] <bed> (17)"]
    assert "Step 3: lie(bed17)" in trace.read_text()


def test_unknown_task_is_a_usage_error(runner, scene_file, tmp_path):
    result = runner.invoke(cli, ["compile", str(scene_file), "--task", "make_coffee", "-o", str(tmp_path / "x.json")])
    assert result.exit_code == 1
    assert "make_coffee" in result.output


def test_plan_failure_exits_two(runner, scene_file, tmp_path):
    holdout = HOLDOUT_DIR / "store_meat_in_freezer.vkb"
    compiled = _compile(
        runner, scene_file, tmp_path, "store_meat_in_freezer", "--kb", str(SEED_KB), "--kb", str(holdout)
    )
    result = runner.invoke(cli, ["plan", str(compiled)])
    assert result.exit_code == 2
    assert "planning failed: exhausted: no schema adds open(_)" in result.stderr


def test_config_file_limits_the_search(runner, scene_file, tmp_path):
    compiled = _compile(runner, scene_file, tmp_path, "change_sheets")
    config = tmp_path / "kbplan.cfg"
    config.write_text("max_depth=2\n", encoding="utf-8")
    result = runner.invoke(cli, ["--config", str(config), "plan", str(compiled)])
    assert result.exit_code == 2
    assert "depth_exceeded" in result.stderr


def test_exec_reports_the_failing_step(runner, scene_file, tmp_path):
    log = tmp_path / "steps.jsonl"
    script = SCRIPTS_DIR / "grab_before_find.txt"
    result = runner.invoke(cli, ["exec", str(scene_file), str(script), "--log", str(log)])
    assert result.exit_code == 2
    assert "failed at step 1: close(book11)" in result.stderr
    assert json.loads(log.read_text().splitlines()[-1])["ok"] is False


def test_exec_rejects_malformed_scripts(runner, scene_file):
    result = runner.invoke(cli, ["exec", str(scene_file), str(SCRIPTS_DIR / "missing_index.txt")])
    assert result.exit_code == 1


def test_score_prints_json(runner, scene_file):
    script = SCRIPTS_DIR / "incomplete_goal.txt"
    result = runner.invoke(cli, ["score", str(scene_file), str(script), "--task", "go_to_sleep"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout) == {
        "parsed": True,
        "executable": True,
        "correct": False,
        "first_bad_step": None,
        "reason": "goal not satisfied",
    }


def test_bench_writes_csv(runner, scene_file, tmp_path):
    out = tmp_path / "bench.csv"
    args = ["bench", str(scene_file), "--tasks", "go_to_sleep", "--levels", "standard,full", "--repetitions", "1", "-o", str(out)]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("go_to_sleep,standard,ok,")


def test_bench_timeouts_exit_three(runner, scene_file):
    args = ["bench", str(scene_file), "--tasks", "change_sheets", "--levels", "standard", "--repetitions", "1", "--timeout", "1e-9"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 3
    assert "change_sheets,standard,timeout" in result.stdout


def test_bench_rejects_unknown_levels(runner, scene_file):
    result = runner.invoke(cli, ["bench", str(scene_file), "--tasks", "go_to_sleep", "--levels", "warp"])
    assert result.exit_code == 1


@pytest.mark.parametrize("extra", [(), ("--opt", "standard"), ("--level", "standard")])
def test_generalize_reports_gaps(runner, scene_file, tmp_path, extra):
    holdout = tmp_path / "holdout"
    holdout.mkdir()
    for name in ("turn_on_tv", "open_fridge"):
        shutil.copy(HOLDOUT_DIR / f"{name}.vkb", holdout)
    result = runner.invoke(cli, ["generalize", str(scene_file), "--holdout", str(holdout), "--json", *extra])
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report["solved_fraction"] == 0.5
    assert report["gaps"] == {"no schema adds open(_)": ["open_fridge"]}


def test_compile_accepts_opt_and_dump_provenance(runner, scene_file, tmp_path):
    report = tmp_path / "depgraph.tsv"
    compiled = _compile(runner, scene_file, tmp_path, "go_to_sleep", "--opt", "depgraph", "--dump-provenance", str(report))
    assert json.loads(compiled.read_text())["level"] == "depgraph"
    assert "depgraph\trule\twater_running :- type(F, faucet), on(F), close(F)." in report.read_text().splitlines()


def test_level_is_an_alias_of_opt(runner, scene_file, tmp_path):
    compiled = _compile(runner, scene_file, tmp_path, "go_to_sleep", "--level", "modular")
    assert json.loads(compiled.read_text())["level"] == "modular"


def test_plan_trace_streams_derivations(runner, scene_file, tmp_path):
    compiled = _compile(runner, scene_file, tmp_path, "go_to_sleep")
    result = runner.invoke(cli, ["plan", str(compiled), "--trace"])
    assert result.exit_code == 0, result.output
    assert result.stdout.splitlines() == ["[Walk] <bedroom> (3)", "[Walk] <bed> (17)", "[Lie] <bed> (17)"]
    lines = result.stderr.splitlines()
    assert "% step 3: lie(bed17)" in lines
    assert "lieable(bed17)  [fact]" in lines
    assert "lying(character1, bed17)  [state]" in lines[lines.index("% goal") :]
