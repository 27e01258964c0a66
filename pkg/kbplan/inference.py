"""Goal-directed evaluation of a program over a fact base and a state record.

Evaluation is top-down with the leftmost *ready* literal selected first: a
positive literal is always ready, ``not L`` and ``X != Y`` only once their
variables are bound. Predicates defined by rules are tabled: each call
variant gets a table that is iterated to completion before its answers are
trusted, so positive recursion (``room_of``) terminates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from .errors import DepthExceeded, NonGroundNaf
from .kb_language import Binding, Constant, Constraint, Literal, Program, Term
from .world_model import FactBase, StateRecord

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 10_000


@dataclass(frozen=True)
class Derivation:
    literal: Literal
    source: str
    children: tuple["Derivation", ...] = ()

    def render(self, indent: int = 0) -> list[str]:
        lines = ["  " * indent + f"{self.literal}  [{self.source}]"]
        for child in self.children:
            lines.extend(child.render(indent + 1))
        return lines


@dataclass(frozen=True)
class ConstraintWitness:
    constraint: Constraint
    binding: Binding

    def __str__(self) -> str:
        bound = ", ".join(f"{name}={value}" for name, value in sorted(self.binding.items()))
        return f"{self.constraint} with {{{bound}}}"


@dataclass
class _Table:
    answers: dict[tuple[str, ...], Derivation] = field(default_factory=dict)
    complete: bool = False


@dataclass
class _Frame:
    table: _Table
    index: int
    low: int = -1

    def __post_init__(self) -> None:
        if self.low < 0:
            self.low = self.index


def _match(terms: Sequence[Term], values: Sequence[str], binding: Binding) -> Binding | None:
    if len(terms) != len(values):
        return None
    extended: Binding | None = None
    for term, value in zip(terms, values):
        if isinstance(term, Constant):
            if term.name != value:
                return None
        elif term.anonymous:
            continue
        else:
            current = (extended or binding).get(term.name)
            if current is None:
                if extended is None:
                    extended = dict(binding)
                extended[term.name] = value
            elif current != value:
                return None
    return binding if extended is None else extended


def _ground(literal: Literal, values: Sequence[str]) -> Literal:
    return Literal(literal.predicate, tuple(Constant(value) for value in values), literal.negated)


def _variant(literal: Literal) -> tuple:
    names: dict[str, int] = {}
    shape: list[str] = []
    for position, arg in enumerate(literal.args):
        if isinstance(arg, Constant):
            shape.append(arg.name)
        else:
            # each "_" is its own variable
            name = f"_{position}" if arg.anonymous else arg.name
            shape.append(f"#{names.setdefault(name, len(names))}")
    return literal.key, tuple(shape)


def _ready(literal: Literal) -> bool:
    if literal.is_builtin:
        return literal.is_ground()
    if literal.naf:
        return not literal.variables()
    return True


class Solver:
    """Evaluation context for one (program, facts, state) triple.

    Tables live as long as the solver; never share one across threads. With
    ``trace`` set, every answer handed out by ``solve`` streams its
    derivation tree to it, one indented node per call.
    """

    def __init__(
        self,
        program: Program,
        facts: FactBase,
        state: StateRecord,
        max_depth: int = DEFAULT_MAX_DEPTH,
        trace: Callable[[str], None] | None = None,
    ) -> None:
        self.program = program
        self.facts = facts
        self.state = state
        self.max_depth = max_depth
        self.trace = trace
        self._tables: dict[tuple, _Table] = {}
        self._stack: list[_Frame] = []
        self._scope: list[_Table] = []
        self._counter = 0

    # -- public ------------------------------------------------------------

    def solve(self, query: Sequence[Literal]) -> Iterator[tuple[Binding, tuple[Derivation, ...]]]:
        names: list[str] = []
        for literal in query:
            names.extend(name for name in literal.variables() if name not in names)
        seen: set[tuple[tuple[str, str], ...]] = set()
        try:
            for binding, proofs in self._goals(tuple(query), {}, 0):
                answer = {name: binding[name] for name in names if name in binding}
                key = tuple(sorted(answer.items()))
                if key in seen:
                    continue
                seen.add(key)
                if self.trace is not None:
                    for proof in proofs:
                        for line in proof.render():
                            self.trace(line)
                yield answer, proofs
        except RecursionError as exc:
            raise DepthExceeded("Interpreter stack exhausted during evaluation") from exc

    def prove(self, query: Sequence[Literal]) -> tuple[Derivation, ...] | None:
        for _, proofs in self.solve(query):
            return proofs
        return None

    def entails(self, literal: Literal) -> bool:
        return self.prove([literal]) is not None

    # -- conjunctions ------------------------------------------------------

    def _goals(
        self, goals: tuple[Literal, ...], binding: Binding, depth: int
    ) -> Iterator[tuple[Binding, tuple[Derivation, ...]]]:
        if not goals:
            yield binding, ()
            return
        if depth > self.max_depth:
            raise DepthExceeded(f"Recursion bound of {self.max_depth} frames reached")

        index = -1
        for position, goal in enumerate(goals):
            if _ready(goal.substitute(binding)):
                index = position
                break
        if index < 0:
            pending = ", ".join(str(goal.substitute(binding)) for goal in goals)
            raise NonGroundNaf(f"Only non-ground negative or builtin literals remain: {pending}")

        selected = goals[index].substitute(binding)
        rest = goals[:index] + goals[index + 1 :]
        for extended, proof in self._literal(selected, binding, depth):
            for final, proofs in self._goals(rest, extended, depth + 1):
                yield final, (proof,) + proofs

    def _literal(self, literal: Literal, binding: Binding, depth: int) -> Iterator[tuple[Binding, Derivation]]:
        if literal.is_builtin:
            left, right = literal.args
            if str(left) != str(right):
                yield binding, Derivation(literal, "builtin")
            return
        if literal.naf:
            if next(self._positive(literal.positive(), depth + 1), None) is None:
                yield binding, Derivation(literal, "naf")
            return
        for values, proof in self._positive(literal, depth + 1):
            extended = _match(literal.args, values, binding)
            if extended is not None:
                yield extended, proof

    # -- atoms -------------------------------------------------------------

    def _positive(self, literal: Literal, depth: int) -> Iterator[tuple[tuple[str, ...], Derivation]]:
        if not literal.negated and self.state.has_relation(literal.predicate):
            if literal.is_ground():
                values = tuple(arg.name for arg in literal.args)  # type: ignore[union-attr]
                if self.state.contains(literal.predicate, values):
                    yield values, Derivation(literal, "state")
                return
            for values in self.state.tuples(literal.predicate):
                if _match(literal.args, values, {}) is not None:
                    yield values, Derivation(_ground(literal, values), "state")
            return
        if self.program.defines(literal.key):
            yield from self._tabled(literal, depth)
            return
        for values in self._fact_candidates(literal):
            if _match(literal.args, values, {}) is not None:
                yield values, Derivation(_ground(literal, values), "fact")

    def _fact_candidates(self, literal: Literal) -> tuple[tuple[str, ...], ...]:
        predicate, arity = literal.key
        if literal.args and isinstance(literal.args[0], Constant):
            return self.facts.first_arg_index.get((predicate, arity, literal.args[0].name), ())
        return self.facts.index.get((predicate, arity), ())

    # -- tabling -----------------------------------------------------------

    def _tabled(self, literal: Literal, depth: int) -> Iterator[tuple[tuple[str, ...], Derivation]]:
        variant = _variant(literal)
        table = self._tables.get(variant)
        if table is None or not table.complete:
            self._fill(literal, variant, depth)
            table = self._tables[variant]
        yield from list(table.answers.items())

    def _fill(self, literal: Literal, variant: tuple, depth: int) -> None:
        table = self._tables.get(variant)
        if table is not None:
            for position, frame in enumerate(self._stack):
                if frame.table is table:
                    # Consumer of an in-progress table: every frame above it joins its component.
                    for above in self._stack[position + 1 :]:
                        above.low = min(above.low, position)
                    return
        else:
            table = self._tables[variant] = _Table()

        frame = _Frame(table, len(self._stack))
        self._stack.append(frame)
        scope_start = len(self._scope)
        self._scope.append(table)
        try:
            while True:
                before = self._counter
                self._evaluate(table, literal, depth)
                if frame.low < frame.index:
                    break
                if self._counter == before:
                    for member in self._scope[scope_start:]:
                        member.complete = True
                    del self._scope[scope_start:]
                    break
        finally:
            self._stack.pop()

    def _evaluate(self, table: _Table, literal: Literal, depth: int) -> None:
        for number, rule in self.program.rule_index[literal.key]:
            start: Binding | None = {}
            for head_arg, call_arg in zip(rule.head.args, literal.args):
                if isinstance(call_arg, Constant):
                    start = _match((head_arg,), (call_arg.name,), start)  # type: ignore[arg-type]
                    if start is None:
                        break
            if start is None:
                continue
            for binding, proofs in self._goals(rule.body, start, depth + 1):
                head = rule.head.substitute(binding)
                values = tuple(str(arg) for arg in head.args)
                if _match(literal.args, values, {}) is not None:
                    self._add(table, values, Derivation(head, f"rule {number}", proofs))
        for values in self._fact_candidates(literal):
            if _match(literal.args, values, {}) is not None:
                self._add(table, values, Derivation(_ground(literal, values), "fact"))

    def _add(self, table: _Table, values: tuple[str, ...], proof: Derivation) -> None:
        if values not in table.answers:
            table.answers[values] = proof
            self._counter += 1


def solve(
    program: Program,
    facts: FactBase,
    state: StateRecord,
    query: Sequence[Literal],
    max_depth: int = DEFAULT_MAX_DEPTH,
    trace: Callable[[str], None] | None = None,
) -> Iterator[tuple[Binding, tuple[Derivation, ...]]]:
    """Enumerate answers to ``query`` in rule order, then fact order."""

    return Solver(program, facts, state, max_depth, trace).solve(query)


def violates_constraints(
    program: Program,
    facts: FactBase,
    state: StateRecord,
    solver: Solver | None = None,
) -> ConstraintWitness | None:
    engine = solver or Solver(program, facts, state)
    for constraint in program.constraints:
        for binding, _ in engine.solve(constraint.body):
            logger.debug("[Inference] constraint %s violated by %s", constraint, binding)
            return ConstraintWitness(constraint, binding)
    return None


__all__ = [
    "ConstraintWitness",
    "Derivation",
    "Solver",
    "solve",
    "violates_constraints",
]
