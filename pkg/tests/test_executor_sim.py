from __future__ import annotations

import json

import pytest

from kbplan import SCRIPTS_DIR
from kbplan.executor_sim import ACTION_CATALOG, cross_check, execute, parse_script, reset, score_script
from kbplan.optimizer import OptLevel
from kbplan.planner import GroundAction, compile_and_plan

from conftest import SEED_TASKS

EXPECTED = json.loads((SCRIPTS_DIR / "expected.json").read_text(encoding="utf-8"))


def test_catalog_covers_every_seed_action(seed_program, open_program):
    for schema in open_program.actions:
        assert schema.name in ACTION_CATALOG, schema.name
        assert ACTION_CATALOG[schema.name].arity == len(schema.params), schema.name
    # pouring exists in the household even though no KB teaches it yet
    assert "pour" in ACTION_CATALOG
    assert all(schema.name != "pour" for schema in seed_program.actions)


def test_execute_logs_each_step(world):
    steps = [GroundAction("walk", ("bedroom3",)), GroundAction("walk", ("bed17",)), GroundAction("lie", ("bed17",))]
    result = execute(world, steps)
    assert result.completed
    assert [entry.step for entry in result.log] == [1, 2, 3]
    assert "inside(character1, bedroom3)" in result.log[0].added
    assert "inside(character1, livingroom2)" in result.log[0].removed
    assert world.state.contains("lying", ("character1", "bed17"))

    first = json.loads(result.log_lines().splitlines()[0])
    assert first == {
        "step": 1,
        "action": "walk(bedroom3)",
        "ok": True,
        "diff": {"added": list(result.log[0].added), "removed": list(result.log[0].removed)},
    }


def test_failed_step_leaves_the_prior_state(world):
    steps = [GroundAction("walk", ("bedroom3",)), GroundAction("grab", ("book11",))]
    result = execute(world, steps)
    assert result.status == "failed"
    assert result.failed_step == 2
    assert result.reason == "close(book11)"
    assert world.state.contains("inside", ("character1", "bedroom3"))
    assert result.log[-1].ok is False


def test_reset_restores_the_initial_state(world):
    start = world.state
    execute(world, [GroundAction("walk", ("kitchen5",))])
    assert world.state != start
    assert reset(world).state == start


def test_unknown_actions_and_objects(world):
    result = execute(world, [GroundAction("juggle", ("book11",))])
    assert result.reason == "unknown action juggle"
    result = execute(world, [GroundAction("walk", ("unicorn7",))])
    assert result.reason == "exists(unicorn7)"
    result = execute(world, [GroundAction("walk", ("bed17", "sofa6"))])
    assert result.failed_step == 1 and "takes 1" in result.reason


def test_parse_script_skips_comments():
    steps = parse_script("# warm up\n\n[Walk] <kitchen> (5)\n[SwitchOff] <fridge> (29)\n")
    assert steps == [GroundAction("walk", ("kitchen5",)), GroundAction("switch_off", ("fridge29",))]


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_script_corpus(name, world, seed_program):
    expected = EXPECTED[name]
    script = (SCRIPTS_DIR / name).read_text(encoding="utf-8")
    score = score_script(world, script, seed_program.task(expected["task"]), seed_program)
    assert score.parsed == expected["parsed"]
    assert score.executable == expected["executable"]
    assert score.correct == expected["correct"]
    assert score.first_bad_step == expected["first_bad_step"]
    if expected["reason"] is not None:
        assert score.reason == expected["reason"]


def test_scoring_never_touches_the_callers_world(world, seed_program):
    before = world.state
    score_script(world, "[Walk] <kitchen> (5)\n", seed_program.task("breakfast"), seed_program)
    assert world.state == before


@pytest.mark.parametrize("task", SEED_TASKS)
def test_seed_plans_run_in_the_simulator(task, world, seed_program, facts, scene):
    outcome = compile_and_plan(seed_program, facts, scene, seed_program.task(task), OptLevel.FULL)
    assert outcome.ok, outcome.failure
    score = score_script(world, outcome.plan.render(), seed_program.task(task), seed_program)
    assert score.to_json() == {
        "parsed": True,
        "executable": True,
        "correct": True,
        "first_bad_step": None,
        "reason": None,
    }
    assert cross_check(outcome.compiled, outcome.plan, world) == []


@pytest.mark.slow
@pytest.mark.parametrize("level", [level for level in OptLevel if level is not OptLevel.FULL])
def test_seed_plans_agree_at_every_level(level, world, seed_program, facts, scene):
    for task in SEED_TASKS:
        outcome = compile_and_plan(seed_program, facts, scene, seed_program.task(task), level)
        assert outcome.ok, (task, outcome.failure)
        score = score_script(world, outcome.plan.render(), seed_program.task(task), seed_program)
        assert score.correct, (task, score)
        assert cross_check(outcome.compiled, outcome.plan, world) == [], task
