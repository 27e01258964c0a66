from __future__ import annotations

import pytest

from kbplan import HOLDOUT_DIR
from kbplan.errors import IllegalAction
from kbplan.kb_language import TaskDef, load_program, parse_query
from kbplan.optimizer import OptLevel, optimize
from kbplan.planner import (
    Failure,
    GroundAction,
    PlanLimits,
    Planner,
    compile_and_plan,
    replay,
)


def _kb(program, facts, scene, task, level=OptLevel.STANDARD):
    return optimize(program, facts, scene, program.task(task) if isinstance(task, str) else task, level)


def _holdout(seed_program, name):
    return seed_program.merged(load_program(HOLDOUT_DIR / f"{name}.vkb"))


@pytest.mark.parametrize("level", [OptLevel.STANDARD, OptLevel.FULL])
def test_go_to_sleep_takes_three_steps(seed_program, facts, scene, level):
    kb = _kb(seed_program, facts, scene, "go_to_sleep", level)
    result = Planner(kb).plan(seed_program.task("go_to_sleep"))
    assert not isinstance(result, Failure), result
    plan, trace = result
    assert [str(step) for step in plan.steps] == ["walk(bedroom3)", "walk(bed17)", "lie(bed17)"]
    assert plan.render().splitlines() == ["[Walk] <bedroom> (3)", "[Walk] <bed> (17)", "[Lie] <bed> (17)"]
    assert [entry.step for entry in trace.entries] == [1, 2, 3]


def test_planning_is_deterministic(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "brush_teeth", OptLevel.FULL)
    task = seed_program.task("brush_teeth")
    first = Planner(kb).plan(task)
    second = Planner(kb).plan(task)
    assert not isinstance(first, Failure)
    assert first[0].steps == second[0].steps
    assert first[1].render() == second[1].render()


def test_trace_justifies_every_step(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "go_to_sleep", OptLevel.FULL)
    plan, trace = Planner(kb).plan(seed_program.task("go_to_sleep"))
    text = trace.render()
    assert text.startswith("bindings: B=bed17")
    assert "Step 3: lie(bed17)" in text
    last = trace.entries[-1]
    assert [str(lit) for lit in last.satisfied] == ["lying(character1, bed17)"]
    assert all(entry.preconditions for entry in trace.entries)


def test_plan_never_revisits_a_state(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "change_sheets", OptLevel.FULL)
    plan, _ = Planner(kb).plan(seed_program.task("change_sheets"))
    states = replay(kb, plan.steps)
    assert len(states) == len(plan) + 1
    assert len(set(states)) == len(states)
    assert Planner(kb).state_subset(list(kb.goal()), states[-1])


def test_goal_that_already_holds_needs_no_steps(seed_program, facts, scene):
    task = TaskDef("keep_cold", tuple(parse_query("on(F), type(F, fridge)")))
    kb = _kb(seed_program, facts, scene, task)
    plan, trace = Planner(kb).plan(task)
    assert plan.steps == ()
    assert trace.entries == ()


def test_missing_open_capability_is_diagnosed(seed_program, facts, scene):
    program = _holdout(seed_program, "store_meat_in_freezer")
    outcome = compile_and_plan(program, facts, scene, program.task("store_meat_in_freezer"))
    assert not outcome.ok
    assert outcome.failure.reason == "exhausted"
    assert outcome.failure.gap == "no schema adds open(_)"
    # a gap is final: no weaker level is tried
    assert len(outcome.attempts) == 1


def test_open_rules_close_the_gap(open_program, facts, scene):
    program = open_program.merged(load_program(HOLDOUT_DIR / "store_meat_in_freezer.vkb"))
    outcome = compile_and_plan(program, facts, scene, program.task("store_meat_in_freezer"))
    assert outcome.ok, outcome.failure
    assert "open(freezer31)" in [str(step) for step in outcome.plan.steps]


def test_pouring_gap_is_named(seed_program, facts, scene):
    program = _holdout(seed_program, "fill_cup")
    outcome = compile_and_plan(program, facts, scene, program.task("fill_cup"))
    assert outcome.failure is not None
    assert outcome.failure.gap == "no schema adds filled(_)"


def test_fallback_to_a_weaker_level(seed_program, facts, scene):
    program = _holdout(seed_program, "put_pillow_on_sofa")
    outcome = compile_and_plan(program, facts, scene, program.task("put_pillow_on_sofa"), OptLevel.FULL)
    assert outcome.ok, outcome.failure
    levels = [attempt.level for attempt in outcome.attempts]
    assert levels[0] is OptLevel.FULL
    assert len(levels) > 1
    assert outcome.attempts[0].outcome.startswith("no_candidate_objects")


def test_fallback_can_be_disabled(seed_program, facts, scene):
    program = _holdout(seed_program, "put_pillow_on_sofa")
    outcome = compile_and_plan(
        program, facts, scene, program.task("put_pillow_on_sofa"), OptLevel.FULL, fallback=False
    )
    assert not outcome.ok
    assert len(outcome.attempts) == 1


def test_no_candidate_objects(seed_program, facts, scene):
    task = TaskDef("play_piano", tuple(parse_query("close(P), type(P, piano)")))
    result = Planner(_kb(seed_program, facts, scene, task)).plan(task)
    assert isinstance(result, Failure)
    assert result.reason == "no_candidate_objects"


def test_depth_limit(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "change_sheets", OptLevel.FULL)
    result = Planner(kb, PlanLimits(max_depth=2)).plan(seed_program.task("change_sheets"))
    assert isinstance(result, Failure)
    assert result.reason == "depth_exceeded"


def test_wall_clock_limit(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "go_to_sleep")
    result = Planner(kb, PlanLimits(wall_timeout_s=0.0)).plan(seed_program.task("go_to_sleep"))
    assert isinstance(result, Failure)
    assert result.reason == "timeout"


def test_legality_names_the_first_failing_precondition(seed_program, facts, scene):
    kb = _kb(seed_program, facts, scene, "read")
    planner = Planner(kb)
    start = planner.initial_state()
    grab = GroundAction("grab", ("book11",))
    verdict = planner.legal(grab, start)
    assert not verdict
    assert verdict.reason == "close(book11)"
    with pytest.raises(IllegalAction):
        planner.update(grab, start)

    near = planner.update(GroundAction("walk", ("book11",)), start)
    assert near.contains("close", ("book11",))
    assert near.contains("close", ("coffeetable12",))
    held = planner.update(grab, near)
    assert held.contains("holds", ("book11",))
    assert not held.contains("on_top_of", ("book11", "coffeetable12"))


def test_unknown_schema_is_illegal(seed_program, facts, scene):
    planner = Planner(_kb(seed_program, facts, scene, "read"))
    verdict = planner.legal(GroundAction("juggle", ("book11",)), planner.initial_state())
    assert not verdict


def test_successors_report_rejections(seed_program, facts, scene):
    planner = Planner(_kb(seed_program, facts, scene, "go_to_sleep", OptLevel.FULL))
    legal, rejected = planner.successors(planner.initial_state())
    assert GroundAction("walk", ("bedroom3",)) in [candidate.action for candidate in legal]
    assert all(rejection.reason for rejection in rejected)


def test_script_lines_round_trip():
    step = GroundAction("put_back", ("glass40", "sink38"))
    assert step.script_line() == "[PutBack] <glass> (40) <sink> (38)"
    assert GroundAction.parse_script_line(step.script_line()) == step
    assert GroundAction.parse_script_line("[StandUp]") == GroundAction("stand_up")
    with pytest.raises(ValueError):
        GroundAction.parse_script_line("[Walk] to the kitchen")
