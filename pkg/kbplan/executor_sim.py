"""Household simulator that executes and scores action scripts.

The simulator never consults the knowledge base for action semantics: the
catalog below is its own account of what each mid-level action needs and
does, so a planner bug cannot vouch for itself. The KB is only used to decide
whether a finished script reached its task goal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .inference import Solver
from .kb_language import Program, TaskDef
from .optimizer import CompiledKB, bind_agent
from .planner import GroundAction, Plan, replay
from .world_model import HAND_CAPACITY, FactBase, SceneGraph, StateRecord, initial_state, to_facts

logger = logging.getLogger(__name__)

Change = tuple[str, tuple[str, ...]]


# ---------------------------------------------------------------------------
# World
# ---------------------------------------------------------------------------


@dataclass
class WorldModel:
    """Static facts plus the live, agent-centred state. One executor owns it at a time."""

    facts: FactBase
    agent: str
    initial: StateRecord
    state: StateRecord

    @classmethod
    def from_scene(cls, scene: SceneGraph) -> "WorldModel":
        facts = to_facts(scene)
        agent = str(scene.agent())
        start = initial_state(facts, agent)
        return cls(facts, agent, start, start)

    def reset(self) -> "WorldModel":
        self.state = self.initial
        return self

    def copy(self) -> "WorldModel":
        return replace(self)


class _View:
    """Read-only queries over one world state."""

    def __init__(self, world: WorldModel) -> None:
        self.facts = world.facts
        self.state = world.state
        self.agent = world.agent

    def has(self, predicate: str, obj: str) -> bool:
        return self.facts.has(predicate, obj)

    def is_(self, relation: str, *args: str) -> bool:
        return self.state.contains(relation, args)

    def exists(self, obj: str) -> bool:
        return obj in self.facts.object_set

    def is_class(self, obj: str, class_name: str) -> bool:
        return self.facts.class_of(obj) == class_name

    @property
    def held(self) -> list[str]:
        return [values[0] for values in self.state.tuples("holds")]

    @property
    def resting(self) -> bool:
        return any(pair[0] == self.agent for pair in self.state.tuples("sitting") + self.state.tuples("lying"))

    def rooms_of(self, obj: str) -> set[str]:
        if self.has("rooms", obj):
            return {obj}
        if self.is_("holds", obj):
            return self.agent_rooms()
        found: set[str] = set()
        seen = {obj}
        frontier = [obj]
        while frontier:
            current = frontier.pop()
            for relation in ("inside", "on_top_of"):
                for child, parent in self.state.tuples(relation):
                    if child != current or parent in seen:
                        continue
                    seen.add(parent)
                    if self.has("rooms", parent):
                        found.add(parent)
                    elif self.is_("holds", parent):
                        found |= self.agent_rooms()
                    else:
                        frontier.append(parent)
        return found

    def agent_rooms(self) -> set[str]:
        return {room for who, room in self.state.tuples("inside") if who == self.agent and self.has("rooms", room)}

    def neighbours(self, obj: str) -> set[str]:
        """Objects that end up within reach when the agent walks to ``obj``."""

        found: set[str] = set()
        for below, above in self.state.tuples("on_top_of"):
            if below == obj:
                found.add(above)
            if above == obj:
                found.add(below)
        for item, container in self.state.tuples("inside"):
            if container == obj and not self.has("rooms", obj):
                found.add(item)
            if item == obj and not self.has("rooms", container):
                found.add(container)
        for a, b in self.facts.index.get(("facing", 2), ()):
            if a == obj:
                found.add(b)
            if b == obj:
                found.add(a)
        return found

    def shut(self, obj: str) -> bool:
        return self.has("can_open", obj) and not self.is_("open", obj)

    def enclosed(self, obj: str) -> bool:
        return any(item == obj and self.shut(container) for item, container in self.state.tuples("inside"))

    def cleans(self, tool: str, target: str) -> bool:
        if self.is_class(tool, "vacuumcleaner"):
            return self.is_class(target, "floor")
        if self.is_class(tool, "sponge"):
            return self.has("recipient", target)
        return False

    def powered(self, tool: str) -> bool:
        return not self.has("has_switch", tool) or self.is_("on", tool)

    def can_clean(self, target: str) -> bool:
        return any(self.cleans(tool, target) and self.powered(tool) for tool in self.held)

    def water_running(self) -> bool:
        return any(self.is_class(obj, "faucet") and self.is_("close", obj) for (obj,) in self.state.tuples("on"))


# ---------------------------------------------------------------------------
# Action catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """One precondition; ``label`` is formatted with the step's arguments on failure."""

    label: str
    test: Callable[[_View, tuple[str, ...]], bool]

    def reason(self, args: tuple[str, ...]) -> str:
        return self.label.format(*args)


Effect = Callable[[_View, tuple[str, ...]], tuple[list[Change], list[Change]]]


@dataclass(frozen=True)
class CatalogAction:
    name: str
    arity: int
    checks: tuple[Check, ...]
    effect: Effect


def _close(position: int = 0) -> Check:
    label = "close({%d})" % position
    return Check(label, lambda view, args: view.is_("close", args[position]))


def _prop(predicate: str, position: int = 0) -> Check:
    label = predicate + "({%d})" % position
    return Check(label, lambda view, args: view.has(predicate, args[position]))


_HOLDS = Check("holds({0})", lambda view, args: view.is_("holds", args[0]))
_STANDING = Check("not resting", lambda view, args: not view.resting)
_DISTINCT = Check("{0} != {1}", lambda view, args: args[0] != args[1])


def _nothing(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
    return [], []


def _walk(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
    target = args[0]
    added: list[Change] = [("close", (target,))]
    added += [("close", (obj,)) for obj in sorted(view.neighbours(target))]
    added += [("close", (obj,)) for obj in view.held]
    added += [("inside", (view.agent, room)) for room in sorted(view.rooms_of(target))]
    removed: list[Change] = [("close", values) for values in view.state.tuples("close")]
    removed += [("inside", pair) for pair in view.state.tuples("inside") if pair[0] == view.agent]
    return added, removed


def _grab(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
    obj = args[0]
    removed = [(relation, pair) for relation in ("on_top_of", "inside") for pair in view.state.tuples(relation) if pair[0] == obj]
    return [("holds", (obj,))], removed


def _place(relation: str) -> Effect:
    def effect(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
        return [(relation, (args[0], args[1]))], [("holds", (args[0],))]

    return effect


def _set(relation: str) -> Effect:
    def effect(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
        return [(relation, (args[0],))], []

    return effect


def _unset(relation: str) -> Effect:
    def effect(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
        return [], [(relation, (args[0],))]

    return effect


def _rest(relation: str) -> Effect:
    def effect(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
        return [(relation, (view.agent, args[0]))], []

    return effect


def _stand_up(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
    removed = [(relation, pair) for relation in ("sitting", "lying") for pair in view.state.tuples(relation) if pair[0] == view.agent]
    return [], removed


def _pour(view: _View, args: tuple[str, ...]) -> tuple[list[Change], list[Change]]:
    return [("filled", (args[1],))], [("filled", (args[0],))]


ACTION_CATALOG: dict[str, CatalogAction] = {
    action.name: action
    for action in (
        CatalogAction(
            "walk",
            1,
            (
                Check("{0} != agent", lambda view, args: args[0] != view.agent),
                Check("not holds({0})", lambda view, args: not view.is_("holds", args[0])),
                _STANDING,
            ),
            _walk,
        ),
        CatalogAction(
            "find",
            1,
            (
                Check(
                    "same_room({0})",
                    lambda view, args: bool(view.rooms_of(args[0]) & view.agent_rooms()) and not view.has("rooms", args[0]),
                ),
                Check("{0} != agent", lambda view, args: args[0] != view.agent),
                Check("not close({0})", lambda view, args: not view.is_("close", args[0])),
                _STANDING,
            ),
            _set("close"),
        ),
        CatalogAction(
            "grab",
            1,
            (
                _close(),
                _prop("grabbable"),
                Check("accessible({0})", lambda view, args: not view.has("heavy", args[0]) and not view.enclosed(args[0])),
                Check("not holds({0})", lambda view, args: not view.is_("holds", args[0])),
                Check("free_hand", lambda view, args: len(view.held) < HAND_CAPACITY),
                _STANDING,
            ),
            _grab,
        ),
        CatalogAction("put_back", 2, (_HOLDS, _close(1), _prop("surfaces", 1), _DISTINCT), _place("on_top_of")),
        CatalogAction(
            "put_in",
            2,
            (
                _HOLDS,
                _close(1),
                _prop("containers", 1),
                Check("not shut({1})", lambda view, args: not view.shut(args[1])),
                _DISTINCT,
            ),
            _place("inside"),
        ),
        CatalogAction(
            "put_on",
            2,
            (_HOLDS, _prop("cover_object"), _close(1), _prop("lieable", 1), _DISTINCT),
            _place("on_top_of"),
        ),
        CatalogAction(
            "switch_on",
            1,
            (_close(), _prop("has_switch"), Check("not on({0})", lambda view, args: not view.is_("on", args[0]))),
            _set("on"),
        ),
        CatalogAction(
            "switch_off",
            1,
            (_close(), _prop("has_switch"), Check("on({0})", lambda view, args: view.is_("on", args[0]))),
            _unset("on"),
        ),
        CatalogAction(
            "open",
            1,
            (_close(), _prop("can_open"), Check("not open({0})", lambda view, args: not view.is_("open", args[0])), _STANDING),
            _set("open"),
        ),
        CatalogAction(
            "close",
            1,
            (_close(), _prop("can_open"), Check("open({0})", lambda view, args: view.is_("open", args[0])), _STANDING),
            _unset("open"),
        ),
        CatalogAction("sit", 1, (_close(), _prop("sittable"), _STANDING), _rest("sitting")),
        CatalogAction("lie", 1, (_close(), _prop("lieable"), _STANDING), _rest("lying")),
        CatalogAction("stand_up", 0, (Check("resting", lambda view, args: view.resting),), _stand_up),
        CatalogAction("touch", 1, (_close(),), _nothing),
        CatalogAction(
            "rinse",
            1,
            (
                _HOLDS,
                Check("water_running", lambda view, args: view.water_running()),
                Check("not dirty({0})", lambda view, args: not view.is_("dirty", args[0])),
                Check("not clean({0})", lambda view, args: not view.is_("clean", args[0])),
            ),
            _set("clean"),
        ),
        CatalogAction(
            "scrub",
            1,
            (
                _close(),
                Check("dirty({0})", lambda view, args: view.is_("dirty", args[0])),
                Check("powered_tool_for({0})", lambda view, args: view.can_clean(args[0])),
            ),
            _unset("dirty"),
        ),
        CatalogAction(
            "pour",
            2,
            (
                _HOLDS,
                Check("filled({0})", lambda view, args: view.is_("filled", args[0])),
                _close(1),
                _prop("recipient", 1),
                _DISTINCT,
            ),
            _pour,
        ),
        CatalogAction(
            "drink",
            1,
            (_HOLDS, Check("filled({0})", lambda view, args: view.is_("filled", args[0]))),
            _unset("filled"),
        ),
        CatalogAction(
            "type_on",
            1,
            (_close(), Check("type({0}, keyboard)", lambda view, args: view.is_class(args[0], "keyboard"))),
            _nothing,
        ),
        CatalogAction("read_to", 1, (_HOLDS, _prop("readable")), _nothing),
    )
}


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepLog:
    step: int
    action: str
    ok: bool
    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "action": self.action,
            "ok": self.ok,
            "diff": {"added": list(self.added), "removed": list(self.removed)},
        }


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    final_state: StateRecord
    failed_step: int | None = None
    reason: str | None = None
    log: tuple[StepLog, ...] = ()

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def log_lines(self) -> str:
        return "".join(json.dumps(entry.to_json()) + "\n" for entry in self.log)


def _why_not(view: _View, action: GroundAction) -> str | None:
    spec = ACTION_CATALOG.get(action.schema)
    if spec is None:
        return f"unknown action {action.schema}"
    if len(action.args) != spec.arity:
        return f"{action.schema} takes {spec.arity} object(s), got {len(action.args)}"
    for obj in action.args:
        if not view.exists(obj):
            return f"exists({obj})"
    for check in spec.checks:
        if not check.test(view, action.args):
            return check.reason(action.args)
    return None


def execute(world: WorldModel, plan: Plan | Sequence[GroundAction]) -> ExecutionResult:
    """Run ``plan`` against the live world, stopping at the first illegal step.

    Steps are numbered from 1. On failure the world keeps the state reached
    before the failing step.
    """

    steps = plan.steps if isinstance(plan, Plan) else tuple(plan)
    log: list[StepLog] = []
    for number, action in enumerate(steps, start=1):
        view = _View(world)
        reason = _why_not(view, action)
        if reason is not None:
            log.append(StepLog(number, str(action), False))
            logger.info("[Simulator] step %d %s failed: %s", number, action, reason)
            return ExecutionResult("failed", world.state, number, reason, tuple(log))
        added, removed = ACTION_CATALOG[action.schema].effect(view, action.args)
        after = world.state.with_changes(added, removed)
        gained, lost = world.state.diff(after)
        world.state = after
        log.append(StepLog(number, str(action), True, tuple(map(str, gained)), tuple(map(str, lost))))
    return ExecutionResult("completed", world.state, log=tuple(log))


def reset(world: WorldModel) -> WorldModel:
    return world.reset()


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptScore:
    parsed: bool
    executable: bool
    correct: bool
    first_bad_step: int | None = None
    reason: str | None = None

    def to_json(self) -> dict:
        return {
            "parsed": self.parsed,
            "executable": self.executable,
            "correct": self.correct,
            "first_bad_step": self.first_bad_step,
            "reason": self.reason,
        }


def parse_script(text: str) -> list[GroundAction]:
    """Plan-format lines to actions; blank lines and ``#`` comments are skipped."""

    steps: list[GroundAction] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        steps.append(GroundAction.parse_script_line(line))
    return steps


def goal_reached(world: WorldModel, program: Program, task: TaskDef, state: StateRecord) -> bool:
    agent_program = program.rename_constant("agent", world.agent)
    goal = bind_agent(task, world.agent).goal
    return Solver(agent_program, world.facts, state).prove(list(goal)) is not None


def score_script(world: WorldModel, script: str, task: TaskDef, program: Program) -> ScriptScore:
    """Score ``script`` on a private copy of ``world`` started from its initial state."""

    lines = [line.strip() for line in script.splitlines() if line.strip() and not line.strip().startswith("#")]
    steps: list[GroundAction] = []
    for number, line in enumerate(lines, start=1):
        try:
            steps.append(GroundAction.parse_script_line(line))
        except ValueError:
            return ScriptScore(False, False, False, number, f"malformed line {line!r}")

    trial = world.copy().reset()
    result = execute(trial, steps)
    if not result.completed:
        return ScriptScore(True, False, False, result.failed_step, result.reason)
    correct = goal_reached(trial, program, task, result.final_state)
    return ScriptScore(True, True, correct, None, None if correct else "goal not satisfied")


# ---------------------------------------------------------------------------
# Planner cross-check
# ---------------------------------------------------------------------------


def cross_check(kb: CompiledKB, plan: Plan, world: WorldModel) -> list[str]:
    """Atoms on which the planner's and the simulator's final states disagree.

    Both sides are restricted to the objects the compiled KB kept, so pruned
    levels compare on their own vocabulary.
    """

    planner_final = replay(kb, plan.steps)[-1]
    trial = world.copy().reset()
    result = execute(trial, plan)
    if not result.completed:
        return [f"simulator rejected step {result.failed_step}: {result.reason}"]

    keep = set(kb.facts.objects)
    ours, _ = planner_final.restrict(keep)
    theirs, _ = result.final_state.restrict(keep)
    only_planner, only_simulator = theirs.diff(ours)
    return [f"planner only: {atom}" for atom in only_planner] + [f"simulator only: {atom}" for atom in only_simulator]


__all__ = [
    "ACTION_CATALOG",
    "CatalogAction",
    "Check",
    "ExecutionResult",
    "ScriptScore",
    "StepLog",
    "WorldModel",
    "cross_check",
    "execute",
    "goal_reached",
    "parse_script",
    "reset",
    "score_script",
]
