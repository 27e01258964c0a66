"""Depth-first search from the initial state record to a goal-satisfying state.

At each state the legal ground actions are ranked into tiers:

1. actions whose result makes an unmet goal literal hold;
2. actions that establish a failing precondition of an action relevant to
   the goal (one level of regression);
3. navigation (actions adding ``close``) bringing the agent nearer to an
   object the goal or the relevant actions mention;
4. everything else.

Within a tier the order is schema declaration, then ascending object index.
Visited states are excluded unless reached at a strictly smaller depth.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .errors import IllegalAction, NonGroundNaf
from .inference import ConstraintWitness, Derivation, Solver, violates_constraints
from .kb_language import ActionSchema, Binding, Constant, Literal, Program, TaskDef
from .optimizer import FALLBACK, CompiledKB, OptLevel, goal_candidates, is_dynamic, optimize, static_literals
from .world_model import FactBase, SceneGraph, StateRecord, initial_state, object_sort_key

logger = logging.getLogger(__name__)

FAILURE_REASONS = ("depth_exceeded", "exhausted", "timeout", "no_candidate_objects")
GAP_SEARCH_DEPTH = 4
_SOLVER_CACHE_LIMIT = 4096


# ---------------------------------------------------------------------------
# Plan data
# ---------------------------------------------------------------------------


def camel_case(name: str) -> str:
    return "".join(part.capitalize() for part in name.split("_"))


def snake_case(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


_SCRIPT_LINE = re.compile(r"^\[(?P<action>[A-Za-z]+)\]((?:\s*<[a-z]+>\s*\(\d+\))*)\s*$")
_SCRIPT_ARG = re.compile(r"<([a-z]+)>\s*\((\d+)\)")


@dataclass(frozen=True)
class GroundAction:
    schema: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.schema}({', '.join(self.args)})" if self.args else self.schema

    def script_line(self) -> str:
        parts = [f"[{camel_case(self.schema)}]"]
        for arg in self.args:
            match = re.match(r"^([a-z]+)(\d+)$", arg)
            parts.append(f"<{match.group(1)}> ({match.group(2)})" if match else f"<{arg}> (0)")
        return " ".join(parts)

    @classmethod
    def parse_script_line(cls, line: str) -> "GroundAction":
        match = _SCRIPT_LINE.match(line.strip())
        if not match:
            raise ValueError(f"Malformed script line: {line!r}")
        args = tuple(f"{name}{index}" for name, index in _SCRIPT_ARG.findall(match.group(2)))
        return cls(snake_case(match.group("action")), args)


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...]
    task: TaskDef
    level: OptLevel = OptLevel.STANDARD
    bindings: Mapping[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)

    def render(self) -> str:
        return "".join(step.script_line() + "\n" for step in self.steps)


@dataclass(frozen=True)
class Rejection:
    action: GroundAction
    reason: str


@dataclass(frozen=True)
class TraceEntry:
    step: int
    action: GroundAction
    tier: int
    preconditions: tuple[Derivation, ...] = ()
    rejected: tuple[Rejection, ...] = ()
    satisfied: tuple[Literal, ...] = ()

    def render(self) -> list[str]:
        lines = [f"Step {self.step}: {self.action}  [tier {self.tier}]", "  preconditions:"]
        for proof in self.preconditions:
            lines.extend(proof.render(2))
        if self.rejected:
            lines.append("  rejected:")
            lines.extend(f"    {item.action}: {item.reason}" for item in self.rejected)
        satisfied = ", ".join(str(lit) for lit in self.satisfied) or "(none)"
        lines.append(f"  goal literals satisfied: {satisfied}")
        return lines


@dataclass(frozen=True)
class JustificationTrace:
    entries: tuple[TraceEntry, ...] = ()
    bindings: Mapping[str, str] = field(default_factory=dict)

    def render(self) -> str:
        lines: list[str] = []
        if self.bindings:
            lines.append("bindings: " + ", ".join(f"{k}={v}" for k, v in sorted(self.bindings.items())))
        for entry in self.entries:
            lines.extend(entry.render())
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Failure:
    reason: str
    detail: str = ""
    gap: str | None = None

    def __str__(self) -> str:
        text = self.reason
        if self.gap:
            text += f": {self.gap}"
        if self.detail:
            text += f" ({self.detail})"
        return text


@dataclass(frozen=True)
class PlanLimits:
    max_depth: int = 50
    max_expansions: int = 100_000
    wall_timeout_s: float = 600.0

    @classmethod
    def from_settings(cls, settings: object) -> "PlanLimits":
        return cls(
            max_depth=getattr(settings, "max_depth"),
            max_expansions=getattr(settings, "max_expansions"),
            wall_timeout_s=getattr(settings, "wall_timeout_s"),
        )


@dataclass(frozen=True)
class Legality:
    ok: bool
    proofs: tuple[Derivation, ...] = ()
    failing: Literal | None = None
    witness: ConstraintWitness | None = None
    next_state: StateRecord | None = None
    note: str = ""

    def __bool__(self) -> bool:
        return self.ok

    @property
    def reason(self) -> str:
        if self.failing is not None:
            return str(self.failing)
        if self.witness is not None:
            return f"violates {self.witness}"
        return self.note


@dataclass(frozen=True)
class Candidate:
    action: GroundAction
    tier: int
    legality: Legality


class _Stop(Exception):
    def __init__(self, reason: str, detail: str) -> None:
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------


class Planner:
    """Search context over one compiled KB; caches one solver per visited state."""

    def __init__(self, kb: CompiledKB, limits: PlanLimits | None = None, inference_max_depth: int = 10_000) -> None:
        self.kb = kb
        self.program = kb.program
        self.facts: FactBase = kb.facts
        self.limits = limits or PlanLimits()
        self.inference_max_depth = inference_max_depth
        self._solvers: dict[StateRecord, Solver] = {}
        self._order = {schema.name: position for position, schema in enumerate(self.program.actions)}
        self._navigation = {
            schema.name for schema in self.program.actions if any(e.literal.predicate == "close" for e in schema.add)
        }
        self._rooms = {args[0] for args in self.facts.index.get(("rooms", 1), ())}
        self._dependent: dict[tuple[str, int], bool] = {}

    # -- basic operations --------------------------------------------------

    def solver(self, state: StateRecord) -> Solver:
        solver = self._solvers.get(state)
        if solver is None:
            if len(self._solvers) >= _SOLVER_CACHE_LIMIT:
                self._solvers.clear()
            solver = self._solvers[state] = Solver(self.program, self.facts, state, self.inference_max_depth)
        return solver

    def initial_state(self) -> StateRecord:
        return initial_state(self.facts, self.kb.agent)

    def state_subset(self, goal: Sequence[Literal], state: StateRecord) -> bool:
        return self.solver(state).prove(list(goal)) is not None

    def _satisfiable(self, solver: Solver, literals: Sequence[Literal]) -> bool:
        try:
            return solver.prove(list(literals)) is not None
        except NonGroundNaf:
            return True

    def _witness(self, solver: Solver, literals: Sequence[Literal]) -> Binding:
        """First answer to ``literals``, or no binding when there is none to give."""

        try:
            for answer, _ in solver.solve(list(literals)):
                return answer
        except NonGroundNaf:
            pass
        return {}

    def _schema(self, name: str) -> ActionSchema | None:
        try:
            return self.program.action(name)
        except KeyError:
            return None

    def _apply(self, schema: ActionSchema, binding: Binding, state: StateRecord, solver: Solver) -> StateRecord:
        removed: list[tuple[str, tuple[str, ...]]] = []
        added: list[tuple[str, tuple[str, ...]]] = []
        for kind, effect in schema.effects():
            scopes = [binding]
            if effect.condition is not None:
                condition = effect.condition.substitute(binding)
                scopes = [{**binding, **answer} for answer, _ in solver.solve([condition])]
            for scope in scopes:
                literal = effect.literal.substitute(scope)
                if kind == "add":
                    added.append((literal.predicate, tuple(str(arg) for arg in literal.args)))
                elif literal.is_ground():
                    removed.append((literal.predicate, tuple(str(arg) for arg in literal.args)))
                else:
                    for values in state.tuples(literal.predicate):
                        if _fits(literal.args, values):
                            removed.append((literal.predicate, values))
        return state.with_changes(added, removed)

    def _first_failing(self, pre: Sequence[Literal], solver: Solver) -> Literal | None:
        for position in range(len(pre)):
            try:
                if solver.prove(list(pre[: position + 1])) is None:
                    return pre[position]
            except NonGroundNaf:
                continue
        return None

    def legal(self, action: GroundAction, state: StateRecord) -> Legality:
        schema = self._schema(action.schema)
        if schema is None:
            return Legality(False, note=f"unknown action {action.schema}")
        if len(schema.params) != len(action.args):
            return Legality(False, note=f"{action.schema} takes {len(schema.params)} arguments")
        binding = {param.name: arg for param, arg in zip(schema.params, action.args)}
        solver = self.solver(state)
        pre = [literal.substitute(binding) for literal in schema.pre]
        proofs = solver.prove(pre)
        if proofs is None:
            return Legality(False, failing=self._first_failing(pre, solver) or (pre[0] if pre else None))
        next_state = self._apply(schema, binding, state, solver)
        witness = violates_constraints(self.program, self.facts, next_state, self.solver(next_state))
        if witness is not None:
            return Legality(False, proofs=proofs, witness=witness, next_state=next_state)
        return Legality(True, proofs=proofs, next_state=next_state)

    def update(self, action: GroundAction, state: StateRecord) -> StateRecord:
        schema = self._schema(action.schema)
        if schema is None or len(schema.params) != len(action.args):
            raise IllegalAction(f"{action} does not match any action schema")
        binding = {param.name: arg for param, arg in zip(schema.params, action.args)}
        solver = self.solver(state)
        if solver.prove([literal.substitute(binding) for literal in schema.pre]) is None:
            raise IllegalAction(f"Preconditions of {action} do not hold")
        return self._apply(schema, binding, state, solver)

    def successors(self, state: StateRecord) -> tuple[list[Candidate], list[Rejection]]:
        """Legal ground actions in schema/index order, plus constraint rejections."""

        solver = self.solver(state)
        legal: list[Candidate] = []
        rejected: list[Rejection] = []
        for schema in self.program.actions:
            names = [param.name for param in schema.params]
            groundings: dict[tuple[str, ...], tuple[Derivation, ...]] = {}
            for answer, proofs in solver.solve(schema.pre):
                args = tuple(answer[name] for name in names)
                groundings.setdefault(args, proofs)
            for args in sorted(groundings, key=lambda values: tuple(object_sort_key(v) for v in values)):
                action = GroundAction(schema.name, args)
                binding = dict(zip(names, args))
                next_state = self._apply(schema, binding, state, solver)
                witness = violates_constraints(self.program, self.facts, next_state, self.solver(next_state))
                if witness is not None:
                    rejected.append(Rejection(action, f"violates {witness}"))
                    continue
                legal.append(Candidate(action, 4, Legality(True, proofs=groundings[args], next_state=next_state)))
        return legal, rejected

    # -- goal regression ---------------------------------------------------

    def _producers(self, literal: Literal) -> list[tuple[ActionSchema, Binding]]:
        """Schemas with an effect that could make ``literal`` hold (dynamic literals only)."""

        if literal.naf:
            target, kind = literal.positive(), "del"
        else:
            target, kind = literal, "add"
        found: list[tuple[ActionSchema, Binding]] = []
        for schema in self.program.actions:
            params = {param.name for param in schema.params}
            effects = schema.delete if kind == "del" else schema.add
            for effect in effects:
                binding = _unify_effect(effect.literal, target)
                if binding is None:
                    continue
                partial = {name: value for name, value in binding.items() if name in params}
                if (schema, partial) not in found:
                    found.append((schema, partial))
        return found

    def _failing_parts(
        self, literals: Sequence[Literal], binding: Binding, solver: Solver
    ) -> list[tuple[tuple[Literal, ...], Literal]]:
        """Literals that cannot be added to the satisfiable prefix, each with that prefix.

        Literals that no action can affect are tried first so they constrain
        the rest (``scrubber(T)`` before ``holds(T)``).
        """

        ordered = sorted(
            (literal.substitute(binding) for literal in literals),
            key=lambda literal: 0 if literal.is_builtin or not self._state_dependent(literal) else 1,
        )
        prefix: list[Literal] = []
        failing: list[tuple[tuple[Literal, ...], Literal]] = []
        for literal in ordered:
            if self._satisfiable(solver, prefix + [literal]):
                prefix.append(literal)
            else:
                failing.append((tuple(prefix), literal))
        return failing

    def _state_dependent(self, literal: Literal) -> bool:
        if is_dynamic(literal):
            return True
        if literal.key not in self._dependent:
            self._dependent[literal.key] = not static_literals(self.program, [literal.positive()])
        return self._dependent[literal.key]

    def _relevant(self, literal: Literal, solver: Solver, depth: int = 0) -> list[tuple[ActionSchema, Binding]]:
        """Producers of an unmet literal, regressing through rule-defined predicates."""

        if depth > 2 or literal.is_builtin:
            return []
        if is_dynamic(literal) or (literal.naf and is_dynamic(literal.positive())):
            return self._producers(literal)
        found: list[tuple[ActionSchema, Binding]] = []
        if literal.naf:
            proofs = solver.prove([literal.positive()])
            children = proofs[0].children if proofs else ()
            for child in children:
                flipped = _negate(child.literal)
                found.extend(item for item in self._relevant(flipped, solver, depth + 1) if item not in found)
            return found
        for _, rule in self.program.rule_index.get(literal.key, ()):
            binding = _unify_head(rule.head, literal)
            if binding is None:
                continue
            for _, part in self._failing_parts(rule.body, binding, solver):
                found.extend(item for item in self._relevant(part, solver, depth + 1) if item not in found)
        return found

    def _distance(self, obj: str, state: StateRecord) -> int:
        if state.contains("close", (obj,)) or state.contains("holds", (obj,)):
            return 0
        here = _room_of(self.kb.agent, state, self._rooms)
        return 1 if here is not None and _room_of(obj, state, self._rooms) == here else 2

    # -- ranking -----------------------------------------------------------

    def rank(self, state: StateRecord, goal: Sequence[Literal]) -> tuple[list[Candidate], list[Rejection]]:
        solver = self.solver(state)
        unmet = [literal for literal in goal if not self._satisfiable(solver, [literal])]

        relevant: list[tuple[ActionSchema, Binding]] = []
        for literal in unmet:
            relevant.extend(item for item in self._relevant(literal, solver) if item not in relevant)

        wanted: list[tuple[tuple[Literal, ...], Literal]] = []
        rejected: list[Rejection] = []
        targets: set[str] = {
            arg.name for literal in goal for arg in literal.args
            if isinstance(arg, Constant) and arg.name in self.facts.object_set and arg.name != self.kb.agent
        }
        for schema, binding in relevant:
            targets.update(value for value in binding.values() if value in self.facts.object_set)
            parts = self._failing_parts(schema.pre, binding, solver)
            for part in parts:
                if part not in wanted:
                    wanted.append(part)
                focus = part[1].substitute(self._witness(solver, part[0]))
                targets.update(
                    arg.name for arg in focus.args
                    if isinstance(arg, Constant) and arg.name in self.facts.object_set
                )
            if parts and len(binding) == len(schema.params):
                action = GroundAction(schema.name, tuple(binding[param.name] for param in schema.params))
                rejected.append(Rejection(action, f"{parts[0][1]} does not hold"))
        targets.discard(self.kb.agent)

        legal, constraint_rejections = self.successors(state)
        rejected.extend(constraint_rejections)

        ranked: list[Candidate] = []
        for candidate in legal:
            after = self.solver(candidate.legality.next_state)  # type: ignore[arg-type]
            if any(self._satisfiable(after, [literal]) for literal in unmet):
                tier = 1
            elif any(self._satisfiable(after, [*prefix, literal]) for prefix, literal in wanted):
                tier = 2
            elif candidate.action.schema in self._navigation and any(
                self._distance(obj, candidate.legality.next_state) < self._distance(obj, state)  # type: ignore[arg-type]
                for obj in targets
            ):
                tier = 3
            else:
                tier = 4
            ranked.append(Candidate(candidate.action, tier, candidate.legality))
        ranked.sort(key=lambda c: (c.tier, self._order[c.action.schema], tuple(object_sort_key(a) for a in c.action.args)))
        return ranked, rejected

    def choose_action(self, state: StateRecord, goal: Sequence[Literal]) -> list[GroundAction]:
        ranked, _ = self.rank(state, goal)
        return [candidate.action for candidate in ranked]

    # -- capability gaps ---------------------------------------------------

    def diagnose_gap(self, goal: Sequence[Literal], state: StateRecord) -> str | None:
        """Name a relation no schema can change that the goal needs changed, if any."""

        solver = self.solver(state)
        for literal in goal:
            if not self._satisfiable(solver, [literal]):
                gap = self._gap(literal, solver, 0, frozenset())
                if gap:
                    return gap
        return None

    def _gap(self, literal: Literal, solver: Solver, depth: int, stack: frozenset[Literal]) -> str | None:
        """None when ``literal`` looks achievable; otherwise the gap blocking it.

        An empty string means blocked only by needing itself along the way.
        Past the depth limit everything counts as achievable.
        """

        if literal.is_builtin or depth > GAP_SEARCH_DEPTH:
            return None
        if literal in stack:
            return ""
        stack = stack | {literal}
        positive = literal.positive()
        pattern = positive.predicate
        if positive.args:
            pattern += "(" + ", ".join("_" for _ in positive.args) + ")"
        missing = f"no schema {'deletes' if literal.naf else 'adds'} {pattern}"

        if is_dynamic(positive):
            producers = self._producers(literal)
            if not producers:
                return missing
            return _first_blocked(
                self._blocked(schema.pre, binding, solver, depth, stack) for schema, binding in producers
            )

        if literal.naf:
            proofs = solver.prove([positive])
            if proofs is None:
                return None
            ways = [
                _negate(child.literal)
                for child in proofs[0].children
                if child.source != "fact" and not child.literal.is_builtin
            ]
            if not ways:
                return missing
            return _first_blocked(self._gap(way, solver, depth + 1, stack) for way in ways)

        rules = [
            (rule, binding)
            for _, rule in self.program.rule_index.get(positive.key, ())
            if (binding := _unify_head(rule.head, positive)) is not None
        ]
        if not rules:
            return missing
        return _first_blocked(self._blocked(rule.body, binding, solver, depth, stack) for rule, binding in rules)

    def _blocked(
        self, body: Sequence[Literal], binding: Binding, solver: Solver, depth: int, stack: frozenset[Literal]
    ) -> str | None:
        for _, part in self._failing_parts(body, binding, solver):
            blocked = self._gap(part, solver, depth + 1, stack)
            if blocked is not None:
                return blocked
        return None

    # -- search ------------------------------------------------------------

    def plan(self, task: TaskDef) -> tuple[Plan, JustificationTrace] | Failure:
        goal = list(self.kb.goal(task))
        start = self.initial_state()
        deadline = time.perf_counter() + self.limits.wall_timeout_s

        if self.state_subset(goal, start):
            logger.info("[Planner] goal of %s already holds", task.name)
            return Plan((), task, self.kb.level, dict(self.kb.bindings)), JustificationTrace((), dict(self.kb.bindings))

        names, candidates = goal_candidates(self.program, self.facts, goal, start)
        if names and not candidates:
            return Failure("no_candidate_objects", f"nothing satisfies the static goal constraints on {names[0]}")

        expansions = [0]
        depth_hit = False
        last_gap: str | None = None
        for candidate in candidates:
            grounded = [literal.substitute(candidate) for literal in goal]
            bindings = {**self.kb.bindings, **candidate}
            gap = self.diagnose_gap(grounded, start)
            if gap is not None:
                logger.info("[Planner] %s with %s: capability gap %s", task.name, candidate, gap)
                last_gap = gap
                continue
            try:
                steps, hit = self._search(grounded, start, deadline, expansions)
            except _Stop as stop:
                return Failure(stop.reason, stop.detail)
            depth_hit = depth_hit or hit
            if steps is not None:
                plan = Plan(tuple(entry.action for entry in steps), task, self.kb.level, bindings)
                logger.info("[Planner] %s: %d-step plan after %d expansions", task.name, len(plan), expansions[0])
                return plan, JustificationTrace(tuple(steps), bindings)
            last_gap = self.diagnose_gap(grounded, start) or last_gap

        if last_gap is not None:
            return Failure("exhausted", "search space exhausted", gap=last_gap)
        if depth_hit:
            return Failure("depth_exceeded", f"no plan within {self.limits.max_depth} steps")
        return Failure("exhausted", f"search space exhausted after {expansions[0]} expansions")

    def _search(
        self, goal: list[Literal], start: StateRecord, deadline: float, expansions: list[int]
    ) -> tuple[list[TraceEntry] | None, bool]:
        best: dict[StateRecord, int] = {start: 0}
        depth_hit = False

        def visit(state: StateRecord, depth: int) -> list[TraceEntry] | None:
            nonlocal depth_hit
            if self.state_subset(goal, state):
                return []
            if depth >= self.limits.max_depth:
                depth_hit = True
                return None
            if time.perf_counter() > deadline:
                raise _Stop("timeout", f"wall-clock limit of {self.limits.wall_timeout_s:g}s reached")
            expansions[0] += 1
            if expansions[0] > self.limits.max_expansions:
                raise _Stop("exhausted", f"expansion budget of {self.limits.max_expansions} spent")

            ranked, rejected = self.rank(state, goal)
            before = self.solver(state)
            for candidate in ranked:
                next_state = candidate.legality.next_state
                assert next_state is not None
                if best.get(next_state, self.limits.max_depth + 1) <= depth + 1:
                    rejected.append(Rejection(candidate.action, "revisits an explored state"))
                    continue
                best[next_state] = depth + 1
                rest = visit(next_state, depth + 1)
                if rest is not None:
                    after = self.solver(next_state)
                    satisfied = tuple(
                        literal for literal in goal
                        if not self._satisfiable(before, [literal]) and self._satisfiable(after, [literal])
                    )
                    entry = TraceEntry(
                        step=depth + 1,
                        action=candidate.action,
                        tier=candidate.tier,
                        preconditions=candidate.legality.proofs,
                        rejected=tuple(rejected),
                        satisfied=satisfied,
                    )
                    return [entry, *rest]
                rejected.append(Rejection(candidate.action, "no plan from the resulting state"))
            return None

        return visit(start, 0), depth_hit


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _first_blocked(results: Iterable[str | None]) -> str | None:
    """None if any alternative is open, else the first named gap ("" if none is named)."""

    named = ""
    for result in results:
        if result is None:
            return None
        named = named or result
    return named


def _negate(literal: Literal) -> Literal:
    return literal.positive() if literal.naf else replace(literal, naf=True)


def _fits(terms: Sequence, values: Sequence[str]) -> bool:
    if len(terms) != len(values):
        return False
    seen: dict[str, str] = {}
    for term, value in zip(terms, values):
        if isinstance(term, Constant):
            if term.name != value:
                return False
        elif not term.anonymous:
            if seen.setdefault(term.name, value) != value:
                return False
    return True


def _unify_effect(effect: Literal, target: Literal) -> Binding | None:
    """Bind schema variables so the effect literal matches ``target``."""

    if effect.predicate != target.predicate or len(effect.args) != len(target.args):
        return None
    binding: Binding = {}
    for mine, theirs in zip(effect.args, target.args):
        if isinstance(mine, Constant):
            if isinstance(theirs, Constant) and theirs.name != mine.name:
                return None
        elif isinstance(theirs, Constant) and not mine.anonymous:
            if binding.setdefault(mine.name, theirs.name) != theirs.name:
                return None
    return binding


def _unify_head(head: Literal, call: Literal) -> Binding | None:
    if head.key != call.key:
        return None
    return _unify_effect(Literal(head.predicate, head.args), Literal(call.predicate, call.args))


def _room_of(obj: str, state: StateRecord, rooms: set[str]) -> str | None:
    current, seen = obj, set()
    while current not in rooms:
        if current in seen:
            return None
        seen.add(current)
        parents = [b for a, b in state.tuples("inside") if a == current]
        parents += [b for a, b in state.tuples("on_top_of") if a == current]
        room_parents = [p for p in parents if p in rooms]
        if room_parents:
            return room_parents[0]
        if not parents:
            return None
        current = parents[0]
    return current


# ---------------------------------------------------------------------------
# Module-level API
# ---------------------------------------------------------------------------


def state_subset(goal: Sequence[Literal], state: StateRecord, kb: CompiledKB) -> bool:
    return Planner(kb).state_subset([literal.substitute(dict(kb.bindings)) for literal in goal], state)


def legal(action: GroundAction, state: StateRecord, kb: CompiledKB) -> Legality:
    return Planner(kb).legal(action, state)


def update(action: GroundAction, state: StateRecord, kb: CompiledKB) -> StateRecord:
    return Planner(kb).update(action, state)


def choose_action(state: StateRecord, goal: Sequence[Literal], kb: CompiledKB) -> list[GroundAction]:
    return Planner(kb).choose_action(state, goal)


def plan(
    kb: CompiledKB, task: TaskDef, limits: PlanLimits | None = None
) -> tuple[Plan, JustificationTrace] | Failure:
    return Planner(kb, limits).plan(task)


def replay(kb: CompiledKB, steps: Iterable[GroundAction]) -> list[StateRecord]:
    """States visited by applying ``steps`` from the initial state; raises IllegalAction."""

    planner = Planner(kb)
    states = [planner.initial_state()]
    for step in steps:
        verdict = planner.legal(step, states[-1])
        if not verdict:
            raise IllegalAction(f"{step} is not legal: {verdict.reason}")
        states.append(verdict.next_state)  # type: ignore[arg-type]
    return states


def explain(
    kb: CompiledKB,
    steps: Sequence[GroundAction],
    goal: Sequence[Literal],
    emit: Callable[[str], None],
    inference_max_depth: int = 10_000,
) -> None:
    """Stream the derivations behind each step's preconditions, then the goal's."""

    planner = Planner(kb, inference_max_depth=inference_max_depth)
    state = planner.initial_state()
    for number, step in enumerate(steps, start=1):
        schema = planner.program.action(step.schema)
        binding = {param.name: arg for param, arg in zip(schema.params, step.args)}
        emit(f"% step {number}: {step}")
        solver = Solver(planner.program, planner.facts, state, inference_max_depth, trace=emit)
        solver.prove([literal.substitute(binding) for literal in schema.pre])
        state = planner.update(step, state)
    emit("% goal")
    Solver(planner.program, planner.facts, state, inference_max_depth, trace=emit).prove(list(goal))


@dataclass(frozen=True)
class Attempt:
    level: OptLevel
    outcome: str
    compile_s: float
    plan_s: float


@dataclass(frozen=True)
class Outcome:
    compiled: CompiledKB
    result: tuple[Plan, JustificationTrace] | Failure
    attempts: tuple[Attempt, ...]

    @property
    def ok(self) -> bool:
        return not isinstance(self.result, Failure)

    @property
    def plan(self) -> Plan | None:
        return None if isinstance(self.result, Failure) else self.result[0]

    @property
    def failure(self) -> Failure | None:
        return self.result if isinstance(self.result, Failure) else None


def compile_and_plan(
    program: Program,
    facts: FactBase,
    scene: SceneGraph,
    task: TaskDef,
    level: OptLevel | str = OptLevel.FULL,
    limits: PlanLimits | None = None,
    fallback: bool = True,
) -> Outcome:
    """Optimize then plan, retrying at less aggressive levels when the plan fails."""

    requested = OptLevel(level)
    ladder = FALLBACK[requested] if fallback else (requested,)
    attempts: list[Attempt] = []
    compiled: CompiledKB | None = None
    result: tuple[Plan, JustificationTrace] | Failure = Failure("exhausted", "not attempted")
    for rung in ladder:
        started = time.perf_counter()
        compiled = optimize(program, facts, scene, task, rung)
        compiled_at = time.perf_counter()
        result = Planner(compiled, limits).plan(task)
        finished = time.perf_counter()
        outcome = "ok" if not isinstance(result, Failure) else str(result)
        attempts.append(Attempt(rung, outcome, compiled_at - started, finished - compiled_at))
        if not isinstance(result, Failure):
            break
        if result.gap is not None or result.reason == "timeout":
            break
        if rung is not ladder[-1]:
            logger.warning("[Planner] %s failed at level %s (%s); retrying", task.name, rung.value, result)
    assert compiled is not None
    return Outcome(compiled, result, tuple(attempts))


__all__ = [
    "Candidate",
    "Failure",
    "GroundAction",
    "JustificationTrace",
    "Legality",
    "Outcome",
    "Plan",
    "PlanLimits",
    "Planner",
    "Rejection",
    "TraceEntry",
    "camel_case",
    "choose_action",
    "compile_and_plan",
    "explain",
    "legal",
    "plan",
    "replay",
    "snake_case",
    "state_subset",
    "update",
]
