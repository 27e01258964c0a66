"""Compile-time pruning of the knowledge base against one task.

Three stages, each recording what it dropped:

* ``modular``: keep only the facts of the task's room (plus agent, doors,
  held and unplaced objects).
* ``depgraph``: keep only rules reachable from the goal and from the actions
  that can change what the goal depends on.
* ``ground``: bind goal variables to the first matching objects and keep
  only facts about them and their immediate surroundings.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import networkx as nx

from .errors import KBPlanError, NoCandidate, NoModuleResolvable
from .inference import Solver
from .kb_language import (
    AGENT_CONSTANT,
    ActionSchema,
    Binding,
    Constant,
    Literal,
    Program,
    TaskDef,
    parse_program,
    predicate_graph,
    print_program,
)
from .world_model import (
    PLANNER_RELATIONS,
    FactBase,
    SceneGraph,
    StateRecord,
    load_facts,
    normalize_symbol,
    object_sort_key,
)

logger = logging.getLogger(__name__)


class OptLevel(str, Enum):
    STANDARD = "standard"
    MODULAR = "modular"
    DEPGRAPH = "depgraph"
    PARTIAL_GROUND = "ground"
    FULL = "full"

    @classmethod
    def _missing_(cls, value: object) -> "OptLevel | None":
        if isinstance(value, str):
            text = value.strip().lower().replace("-", "_")
            if text in ("partial_ground", "partialground"):
                return cls.PARTIAL_GROUND
            for member in cls:
                if member.value == text:
                    return member
        return None


STAGES: dict[OptLevel, tuple[str, ...]] = {
    OptLevel.STANDARD: (),
    OptLevel.MODULAR: ("modular",),
    OptLevel.DEPGRAPH: ("depgraph",),
    OptLevel.PARTIAL_GROUND: ("ground",),
    OptLevel.FULL: ("modular", "depgraph", "ground"),
}

# Retry order when planning fails on an optimized KB.
FALLBACK: dict[OptLevel, tuple[OptLevel, ...]] = {
    OptLevel.FULL: (OptLevel.FULL, OptLevel.PARTIAL_GROUND, OptLevel.STANDARD),
    OptLevel.PARTIAL_GROUND: (OptLevel.PARTIAL_GROUND, OptLevel.STANDARD),
    OptLevel.MODULAR: (OptLevel.MODULAR, OptLevel.STANDARD),
    OptLevel.DEPGRAPH: (OptLevel.DEPGRAPH, OptLevel.STANDARD),
    OptLevel.STANDARD: (OptLevel.STANDARD,),
}


@dataclass(frozen=True)
class Pruned:
    stage: str
    kind: str
    item: str

    def __str__(self) -> str:
        return f"{self.stage}\t{self.kind}\t{self.item}"


@dataclass(frozen=True)
class DepGraph:
    graph: nx.DiGraph
    roots: tuple[tuple[str, int], ...] = ()

    @property
    def nodes(self) -> set[tuple[str, int]]:
        return set(self.graph.nodes)

    def reaches(self, key: tuple[str, int]) -> bool:
        return key in self.graph


@dataclass(frozen=True)
class CompiledKB:
    program: Program
    facts: FactBase
    agent: str
    level: OptLevel = OptLevel.STANDARD
    task: TaskDef | None = None
    bindings: Mapping[str, str] = field(default_factory=dict)
    provenance: tuple[Pruned, ...] = ()
    notes: tuple[str, ...] = ()

    def goal(self, task: TaskDef | None = None) -> tuple[Literal, ...]:
        chosen = bind_agent(task, self.agent) if task is not None else self.task
        if chosen is None:
            return ()
        return tuple(literal.substitute(dict(self.bindings)) for literal in chosen.goal)

    def fact_count(self) -> int:
        return len(self.facts.static_facts) + self.facts.state.count()

    def provenance_report(self) -> str:
        header = "stage\tkind\titem"
        return "\n".join([header, *(str(entry) for entry in self.provenance)]) + "\n"

    def to_json(self) -> dict[str, Any]:
        return {
            "level": self.level.value,
            "agent": self.agent,
            "task": self.task.name if self.task else None,
            "bindings": dict(self.bindings),
            "program": print_program(self.program),
            "facts": self.facts.dump(),
            "provenance": [[entry.stage, entry.kind, entry.item] for entry in self.provenance],
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "CompiledKB":
        program = parse_program(payload["program"])
        task_name = payload.get("task")
        return cls(
            program=program,
            facts=load_facts(payload["facts"]),
            agent=payload["agent"],
            level=OptLevel(payload["level"]),
            task=program.task(task_name) if task_name else None,
            bindings=dict(payload.get("bindings", {})),
            provenance=tuple(Pruned(*entry) for entry in payload.get("provenance", [])),
            notes=tuple(payload.get("notes", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CompiledKB":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def bind_agent(task: TaskDef, agent: str) -> TaskDef:
    def swap(term):  # type: ignore[no-untyped-def]
        return Constant(agent) if isinstance(term, Constant) and term.name == AGENT_CONSTANT else term

    return replace(task, goal=tuple(literal.map_terms(swap) for literal in task.goal))


def is_dynamic(literal: Literal) -> bool:
    return not literal.negated and PLANNER_RELATIONS.get(literal.predicate) == len(literal.args)


def static_literals(program: Program, literals: Sequence[Literal]) -> list[Literal]:
    """The part of a conjunction whose truth no action can change."""

    graph = predicate_graph(program)
    dynamic = set(PLANNER_RELATIONS.items())

    def depends_on_state(key: tuple[str, int]) -> bool:
        if key in dynamic:
            return True
        return key in graph and any(node in dynamic for node in nx.descendants(graph, key))

    chosen = [lit for lit in literals if lit.is_builtin or not depends_on_state(lit.key)]
    bound = {name for lit in chosen if lit.is_positive for name in lit.variables()}
    return [lit for lit in chosen if lit.is_positive or set(lit.variables()) <= bound]


def goal_candidates(
    program: Program, facts: FactBase, goal: Sequence[Literal], state: StateRecord | None = None
) -> tuple[list[str], list[Binding]]:
    """Bindings of the goal's statically constrained variables, lowest object index first."""

    static = static_literals(program, goal)
    names: list[str] = []
    for literal in static:
        names.extend(name for name in literal.variables() if name not in names)
    if not names:
        return [], [{}]
    solver = Solver(program, facts, state if state is not None else StateRecord.empty())
    answers = [binding for binding, _ in solver.solve(static)]
    answers.sort(key=lambda binding: tuple(object_sort_key(binding.get(name, "")) for name in names))
    return names, answers


def _goal_objects(goal: Iterable[Literal], facts: FactBase) -> set[str]:
    return {
        arg.name
        for literal in goal
        for arg in literal.args
        if isinstance(arg, Constant) and arg.name in facts.object_set
    }


def _objects_with(facts: FactBase, predicate: str) -> set[str]:
    return {args[0] for args in facts.index.get((predicate, 1), ())}


def _held_by(facts: FactBase, agent: str) -> set[str]:
    held = set()
    for values in facts.state.tuples("holds"):
        if len(values) == 2 and values[0] == agent:
            held.add(values[1])
        elif len(values) == 1:
            held.add(values[0])
    return held


def _restrict(facts: FactBase, keep: set[str], stage: str) -> tuple[FactBase, list[Pruned]]:
    pruned, dropped_static, dropped_state = facts.restrict(keep)
    provenance = [Pruned(stage, "fact", f"{atom}.") for atom in dropped_static]
    provenance.extend(Pruned(stage, "state", str(atom)) for atom in dropped_state)
    return pruned, provenance


# ---------------------------------------------------------------------------
# Modular pruning
# ---------------------------------------------------------------------------


def select_module(
    scene: SceneGraph, facts: FactBase, task: TaskDef, program: Program | None = None
) -> list[str]:
    """Rooms the task is confined to: the hint's rooms, else the goal objects' majority room."""

    if task.room:
        wanted = normalize_symbol(task.room)
        matches = [str(room) for room in scene.room_ids if room.name == wanted]
        if matches:
            return matches
        logger.info("[Optimizer] room hint %r matches no room; inferring module", task.room)

    goal = bind_agent(task, str(scene.agent())).goal
    objects = _goal_objects(goal, facts)
    names, answers = goal_candidates(program or Program(), facts, goal)
    for binding in answers:
        objects.update(binding[name] for name in names if name in binding)

    rooms_by_name = {str(oid): room for oid, room in scene.rooms.items()}
    counts = Counter(str(rooms_by_name[obj]) for obj in objects if rooms_by_name.get(obj) is not None)
    if not counts:
        raise NoModuleResolvable(f"Task {task.name!r} has no room hint and its goal objects span no room")
    best = max(counts.values())
    return [min((room for room, count in counts.items() if count == best), key=object_sort_key)]


def _modular(
    facts: FactBase, scene: SceneGraph, task: TaskDef, program: Program | None, agent: str
) -> tuple[FactBase, list[Pruned]]:
    selected = set(select_module(scene, facts, task, program))
    keep = set(selected) | {agent} | _held_by(facts, agent)
    for node in scene.nodes:
        if node.is_room:
            continue
        room = scene.rooms.get(node.id)
        if node.is_door or room is None or str(room) in selected:
            keep.add(str(node.id))
    logger.debug("[Optimizer] modular keeps %d of %d objects (%s)", len(keep), len(facts.objects), sorted(selected))
    return _restrict(facts, keep, "modular")


def modular_prune(
    facts: FactBase, scene: SceneGraph, task: TaskDef, program: Program | None = None
) -> FactBase:
    pruned, _ = _modular(facts, scene, task, program, str(scene.agent()))
    return pruned


# ---------------------------------------------------------------------------
# Dependency-graph slicing
# ---------------------------------------------------------------------------


def _reach(graph: nx.DiGraph, literals: Iterable[Literal]) -> set[tuple[str, int]]:
    keys = {literal.key for literal in literals if not literal.is_builtin}
    for key in list(keys):
        if key in graph:
            keys |= nx.descendants(graph, key)
    return keys


def _schema_literals(schema: ActionSchema) -> list[Literal]:
    return [*schema.pre, *(effect.condition for _, effect in schema.effects() if effect.condition is not None)]


def planning_roots(program: Program, task: TaskDef) -> list[Literal]:
    """Literals whose definitions planning for ``task`` can consult.

    A schema is relevant once one of its effects touches a predicate the goal
    (or an already relevant schema) depends on; its preconditions and effect
    conditions then join the roots, until nothing new is added. A constraint
    joins when its body reaches a relevant or touched predicate. The negative
    literals and effect conditions of everything left over stay as roots, so
    slicing never turns an action legal, changes its effects or makes a
    constraint fire.
    """

    graph = predicate_graph(program)
    roots = list(task.goal)
    relevant = _reach(graph, roots)
    touched: set[tuple[str, int]] = set()
    pending = list(program.actions)
    waiting = list(program.constraints)
    changed = True
    while changed:
        changed = False
        for schema in list(pending):
            effects = {effect.literal.key for _, effect in schema.effects()}
            if effects & relevant:
                pending.remove(schema)
                touched |= effects
                roots.extend(_schema_literals(schema))
                relevant |= _reach(graph, _schema_literals(schema))
                changed = True
        for constraint in list(waiting):
            if _reach(graph, constraint.body) & (relevant | touched):
                waiting.remove(constraint)
                roots.extend(constraint.body)
                relevant |= _reach(graph, constraint.body)
                changed = True

    for schema in pending:
        roots.extend(literal.positive() for literal in schema.pre if literal.naf)
        roots.extend(effect.condition for _, effect in schema.effects() if effect.condition is not None)
    for constraint in waiting:
        roots.extend(literal.positive() for literal in constraint.body if literal.naf)
    logger.debug("[Optimizer] %s: %d schemas outside the goal's reach", task.name, len(pending))
    return roots


def build_dependency_graph(program: Program, query: Sequence[Literal]) -> DepGraph:
    full = predicate_graph(program)
    roots = tuple(dict.fromkeys(literal.key for literal in query if not literal.is_builtin))
    reachable: set[tuple[str, int]] = set(roots)
    for root in roots:
        if root in full:
            reachable |= nx.descendants(full, root)
    graph = nx.DiGraph(full.subgraph(reachable))
    graph.add_nodes_from(roots)
    return DepGraph(graph, roots)


def depgraph_prune(program: Program, graph: DepGraph) -> Program:
    return replace(program, rules=tuple(rule for rule in program.rules if graph.reaches(rule.head.key)))


# ---------------------------------------------------------------------------
# Partial grounding
# ---------------------------------------------------------------------------


def _ground(
    program: Program, facts: FactBase, task: TaskDef, agent: str
) -> tuple[FactBase, dict[str, str], list[Pruned]]:
    names, answers = goal_candidates(program, facts, task.goal)
    if names and not answers:
        raise NoCandidate(names[0], task.name)
    bindings = {name: answers[0][name] for name in names if name in answers[0]}

    anchors = set(bindings.values()) | _goal_objects(task.goal, facts)
    rooms = _objects_with(facts, "rooms")
    keep = anchors | rooms | _objects_with(facts, "doors") | {agent} | _held_by(facts, agent)
    for relation in ("on_top_of", "inside"):
        for below, above in facts.state.tuples(relation):
            if below in anchors and below not in rooms:
                keep.add(above)
            if above in anchors and above not in rooms:
                keep.add(below)
    pruned, provenance = _restrict(facts, keep, "ground")
    logger.debug("[Optimizer] ground binds %s and keeps %d objects", bindings, len(pruned.objects))
    return pruned, bindings, provenance


def partial_ground(program: Program, facts: FactBase, task: TaskDef, agent: str = "character1") -> CompiledKB:
    program = program.rename_constant(AGENT_CONSTANT, agent)
    task = bind_agent(task, agent)
    pruned, bindings, provenance = _ground(program, facts, task, agent)
    return CompiledKB(
        program=program,
        facts=pruned,
        agent=agent,
        level=OptLevel.PARTIAL_GROUND,
        task=task,
        bindings=bindings,
        provenance=tuple(provenance),
    )


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def optimize(
    program: Program,
    facts: FactBase,
    scene: SceneGraph,
    task: TaskDef,
    level: OptLevel | str = OptLevel.STANDARD,
) -> CompiledKB:
    level = OptLevel(level)
    agent = str(scene.agent())
    program = program.rename_constant(AGENT_CONSTANT, agent)
    task = bind_agent(task, agent)

    provenance: list[Pruned] = []
    notes: list[str] = []
    bindings: dict[str, str] = {}
    for stage in STAGES[level]:
        try:
            if stage == "modular":
                facts, dropped = _modular(facts, scene, task, program, agent)
            elif stage == "depgraph":
                graph = build_dependency_graph(program, planning_roots(program, task))
                sliced = depgraph_prune(program, graph)
                dropped = [Pruned("depgraph", "rule", str(rule)) for rule in program.rules if rule not in sliced.rules]
                program = sliced
            else:
                facts, bindings, dropped = _ground(program, facts, task, agent)
        except KBPlanError as exc:
            logger.warning("[Optimizer] %s stage skipped for %s: %s", stage, task.name, exc)
            notes.append(f"{stage}: {exc}")
            continue
        provenance.extend(dropped)
        logger.info("[Optimizer] %s dropped %d items for %s", stage, len(dropped), task.name)

    return CompiledKB(
        program=program,
        facts=facts,
        agent=agent,
        level=level,
        task=task,
        bindings=bindings,
        provenance=tuple(provenance),
        notes=tuple(notes),
    )


__all__ = [
    "CompiledKB",
    "DepGraph",
    "FALLBACK",
    "OptLevel",
    "Pruned",
    "bind_agent",
    "build_dependency_graph",
    "depgraph_prune",
    "goal_candidates",
    "modular_prune",
    "optimize",
    "partial_ground",
    "planning_roots",
    "select_module",
    "static_literals",
]
