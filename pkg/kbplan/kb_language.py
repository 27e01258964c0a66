"""Parser and printer for ``.vkb`` knowledge bases.

The language is Prolog-flavoured: facts and rules (``head :- body.``) with
classical negation ``-p(X)`` and negation as failure ``not p(X)``, headless
integrity constraints ``:- body.``, plus two block forms::

    action grab(X) { pre: close(X), movable(X); add: holds(X); del: on_top_of(X, _) }
    task go_to_sleep { goal: type(B, bed), lying(agent, B); room: bedroom }

See ``docs/grammar.md`` for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Iterator, Union

import networkx as nx

from .errors import (
    DuplicateAction,
    KBSyntaxError,
    UnknownRelation,
    UnknownTask,
    UnsafeRule,
    UnstratifiedProgram,
)
from .world_model import PLANNER_RELATIONS

ANONYMOUS = "_"
NEQ = "!="
AGENT_CONSTANT = "agent"
KEYWORDS = frozenset({"not", "action", "task", "forall"})


# ---------------------------------------------------------------------------
# Terms and literals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name

    @property
    def anonymous(self) -> bool:
        return self.name == ANONYMOUS


@dataclass(frozen=True)
class Constant:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Variable, Constant]
Binding = dict[str, str]


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[Term, ...] = ()
    negated: bool = False
    naf: bool = False

    def __str__(self) -> str:
        if self.is_builtin:
            return f"{self.args[0]} {NEQ} {self.args[1]}"
        text = ("-" if self.negated else "") + self.predicate
        if self.args:
            text += "(" + ", ".join(str(arg) for arg in self.args) + ")"
        return ("not " + text) if self.naf else text

    @property
    def is_builtin(self) -> bool:
        return self.predicate == NEQ

    @property
    def is_positive(self) -> bool:
        """A literal that binds variables when solved."""
        return not self.naf and not self.is_builtin

    @property
    def key(self) -> tuple[str, int]:
        return ("-" + self.predicate if self.negated else self.predicate), len(self.args)

    def variables(self) -> list[str]:
        seen: list[str] = []
        for arg in self.args:
            if isinstance(arg, Variable) and not arg.anonymous and arg.name not in seen:
                seen.append(arg.name)
        return seen

    def has_anonymous(self) -> bool:
        return any(isinstance(arg, Variable) and arg.anonymous for arg in self.args)

    def is_ground(self) -> bool:
        return all(isinstance(arg, Constant) for arg in self.args)

    def substitute(self, binding: Binding) -> "Literal":
        if not binding:
            return self
        args = tuple(
            Constant(binding[arg.name]) if isinstance(arg, Variable) and arg.name in binding else arg
            for arg in self.args
        )
        return replace(self, args=args)

    def map_terms(self, fn: Callable[[Term], Term]) -> "Literal":
        return replace(self, args=tuple(fn(arg) for arg in self.args))

    def positive(self) -> "Literal":
        """The same atom with naf stripped."""
        return replace(self, naf=False)


@dataclass(frozen=True)
class Rule:
    head: Literal
    body: tuple[Literal, ...] = ()

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(lit) for lit in self.body)}."


@dataclass(frozen=True)
class Constraint:
    body: tuple[Literal, ...]

    def __str__(self) -> str:
        return f":- {', '.join(str(lit) for lit in self.body)}."


@dataclass(frozen=True)
class Effect:
    literal: Literal
    condition: Literal | None = None

    def __str__(self) -> str:
        if self.condition is None:
            return str(self.literal)
        return f"forall({self.condition}, {self.literal})"


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[Variable, ...] = ()
    pre: tuple[Literal, ...] = ()
    add: tuple[Effect, ...] = ()
    delete: tuple[Effect, ...] = ()

    def __str__(self) -> str:
        head = self.name + ("(" + ", ".join(str(p) for p in self.params) + ")" if self.params else "")
        sections = [
            "pre: " + ", ".join(str(lit) for lit in self.pre),
            "add: " + ", ".join(str(eff) for eff in self.add),
            "del: " + ", ".join(str(eff) for eff in self.delete),
        ]
        body = ";\n".join("    " + section.rstrip() for section in sections)
        return f"action {head} {{\n{body}\n}}"

    def effects(self) -> Iterator[tuple[str, Effect]]:
        for effect in self.delete:
            yield "del", effect
        for effect in self.add:
            yield "add", effect


@dataclass(frozen=True)
class TaskDef:
    name: str
    goal: tuple[Literal, ...] = ()
    room: str | None = None

    def __str__(self) -> str:
        lines = ["    goal: " + ", ".join(str(lit) for lit in self.goal)]
        if self.room:
            lines.append(f"    room: {self.room}")
        return f"task {self.name} {{\n" + ";\n".join(lines) + "\n}"

    def variables(self) -> list[str]:
        names: list[str] = []
        for lit in self.goal:
            for name in lit.variables():
                if name not in names:
                    names.append(name)
        return names


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    actions: tuple[ActionSchema, ...] = ()
    tasks: tuple[TaskDef, ...] = ()

    @cached_property
    def rule_index(self) -> dict[tuple[str, int], tuple[tuple[int, Rule], ...]]:
        grouped: dict[tuple[str, int], list[tuple[int, Rule]]] = {}
        for number, rule in enumerate(self.rules, start=1):
            grouped.setdefault(rule.head.key, []).append((number, rule))
        return {key: tuple(items) for key, items in grouped.items()}

    def defines(self, key: tuple[str, int]) -> bool:
        return key in self.rule_index

    def action(self, name: str) -> ActionSchema:
        for schema in self.actions:
            if schema.name == name:
                return schema
        raise KeyError(name)

    def task(self, name: str) -> TaskDef:
        for task in self.tasks:
            if task.name == name:
                return task
        raise UnknownTask(name, [task.name for task in self.tasks])

    def merged(self, other: "Program") -> "Program":
        names = {schema.name for schema in self.actions}
        for schema in other.actions:
            if schema.name in names:
                raise DuplicateAction(f"Action {schema.name!r} is declared more than once")
        replaced = {task.name for task in other.tasks}
        return Program(
            rules=self.rules + other.rules,
            constraints=self.constraints + other.constraints,
            actions=self.actions + other.actions,
            tasks=tuple(t for t in self.tasks if t.name not in replaced) + other.tasks,
        )

    def rename_constant(self, old: str, new: str) -> "Program":
        def swap(term: Term) -> Term:
            return Constant(new) if isinstance(term, Constant) and term.name == old else term

        def lit(literal: Literal) -> Literal:
            return literal.map_terms(swap)

        def eff(effect: Effect) -> Effect:
            return Effect(lit(effect.literal), lit(effect.condition) if effect.condition else None)

        return Program(
            rules=tuple(Rule(lit(r.head), tuple(lit(b) for b in r.body)) for r in self.rules),
            constraints=tuple(Constraint(tuple(lit(b) for b in c.body)) for c in self.constraints),
            actions=tuple(
                replace(
                    a,
                    pre=tuple(lit(b) for b in a.pre),
                    add=tuple(eff(e) for e in a.add),
                    delete=tuple(eff(e) for e in a.delete),
                )
                for a in self.actions
            ),
            tasks=tuple(replace(t, goal=tuple(lit(g) for g in t.goal)) for t in self.tasks),
        )


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<NL>\n)
  | (?P<WS>[ \t\r]+)
  | (?P<COMMENT>%[^\n]*)
  | (?P<INCLUDE>\#include\b)
  | (?P<STRING>"[^"\n]*")
  | (?P<IMPLIES>:-)
  | (?P<NEQ>!=)
  | (?P<NUMBER>\d+)
  | (?P<VAR>[A-Z_][A-Za-z0-9_]*)
  | (?P<IDENT>[a-z][A-Za-z0-9_]*)
  | (?P<PUNCT>[(),.:;{}\-])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if match is None:
            raise KBSyntaxError(line, col, "a token", text[pos])
        kind = match.lastgroup or ""
        value = match.group()
        if kind == "NL":
            line, line_start = line + 1, match.end()
        elif kind not in ("WS", "COMMENT"):
            tokens.append(Token(value if kind == "PUNCT" else kind, value, line, col))
        pos = match.end()
    tokens.append(Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        token = self.current
        return token.kind == kind and (text is None or token.text == text)

    def advance(self) -> Token:
        token = self.current
        self.pos += 1
        return token

    def fail(self, expected: str) -> KBSyntaxError:
        token = self.current
        return KBSyntaxError(token.line, token.col, expected, token.text or "end of input")

    def expect(self, kind: str, expected: str) -> Token:
        if not self.at(kind):
            raise self.fail(expected)
        return self.advance()

    # -- pieces ------------------------------------------------------------

    def term(self) -> Term:
        token = self.current
        if token.kind == "VAR":
            self.advance()
            return Variable(token.text)
        if token.kind in ("IDENT", "NUMBER"):
            self.advance()
            return Constant(token.text)
        raise self.fail("term")

    def atom(self) -> Literal:
        negated = False
        if self.at("-"):
            self.advance()
            negated = True
        name = self.expect("IDENT", "predicate name").text
        args: list[Term] = []
        if self.at("("):
            self.advance()
            args.append(self.term())
            while self.at(","):
                self.advance()
                args.append(self.term())
            self.expect(")", "')'")
        return Literal(name, tuple(args), negated=negated)

    def body_literal(self) -> Literal:
        token = self.current
        if token.kind == "IDENT" and token.text == "not" and self.peek().kind in ("IDENT", "-"):
            self.advance()
            return replace(self.atom(), naf=True)
        if token.kind in ("VAR", "NUMBER") or (token.kind == "IDENT" and self.peek().kind == "NEQ"):
            left = self.term()
            self.expect("NEQ", "'!='")
            return Literal(NEQ, (left, self.term()))
        return self.atom()

    def literal_list(self) -> list[Literal]:
        items = [self.body_literal()]
        while self.at(","):
            self.advance()
            items.append(self.body_literal())
        return items

    def effect(self) -> Effect:
        if self.at("IDENT", "forall") and self.peek().kind == "(":
            self.advance()
            self.advance()
            condition = self.body_literal()
            self.expect(",", "','")
            literal = self.state_atom()
            self.expect(")", "')'")
            return Effect(literal, condition)
        return Effect(self.state_atom())

    def state_atom(self) -> Literal:
        if self.at("-"):
            raise self.fail("positive state atom")
        return self.atom()

    def effect_list(self) -> list[Effect]:
        items = [self.effect()]
        while self.at(","):
            self.advance()
            items.append(self.effect())
        return items

    # -- statements --------------------------------------------------------

    def rule(self) -> Rule:
        head = self.atom()
        body: list[Literal] = []
        if self.at("IMPLIES"):
            self.advance()
            body = self.literal_list()
            self.expect(".", "'.'")
        else:
            self.expect(".", "'.' or ':-'")
        return Rule(head, tuple(body))

    def constraint(self) -> Constraint:
        self.expect("IMPLIES", "':-'")
        body = self.literal_list()
        self.expect(".", "'.'")
        return Constraint(tuple(body))

    def _sections(self, allowed: tuple[str, ...], readers: dict[str, Callable[[], object]]) -> dict[str, object]:
        self.expect("{", "'{'")
        found: dict[str, object] = {}
        while not self.at("}"):
            key_token = self.current
            key = self.expect("IDENT", "section name (" + ", ".join(allowed) + ")").text
            if key not in allowed or key in found:
                raise KBSyntaxError(key_token.line, key_token.col, "section name (" + ", ".join(allowed) + ")", key)
            self.expect(":", "':'")
            if self.at(";") or self.at("}"):
                found[key] = [] if key != "room" else None
            else:
                found[key] = readers[key]()
            if self.at(";"):
                self.advance()
            else:
                break
        self.expect("}", "'}'")
        return found

    def action(self) -> ActionSchema:
        self.advance()
        name = self.expect("IDENT", "action name").text
        params: list[Variable] = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                params.append(Variable(self.expect("VAR", "parameter variable").text))
                while self.at(","):
                    self.advance()
                    params.append(Variable(self.expect("VAR", "parameter variable").text))
            self.expect(")", "')'")
        sections = self._sections(
            ("pre", "add", "del"),
            {"pre": self.literal_list, "add": self.effect_list, "del": self.effect_list},
        )
        return ActionSchema(
            name=name,
            params=tuple(params),
            pre=tuple(sections.get("pre", [])),  # type: ignore[arg-type]
            add=tuple(sections.get("add", [])),  # type: ignore[arg-type]
            delete=tuple(sections.get("del", [])),  # type: ignore[arg-type]
        )

    def task(self) -> TaskDef:
        self.advance()
        name = self.expect("IDENT", "task name").text
        sections = self._sections(
            ("goal", "room"),
            {"goal": self.literal_list, "room": lambda: self.expect("IDENT", "room class").text},
        )
        return TaskDef(name, tuple(sections.get("goal", [])), sections.get("room"))  # type: ignore[arg-type]


def parse_program(text: str, base_dir: str | Path | None = None, _seen: frozenset[Path] = frozenset()) -> Program:
    """Parse KB text; ``#include`` paths resolve against ``base_dir``."""

    program = _parse_statements(text, Path(base_dir) if base_dir else Path.cwd(), _seen)
    validate_program(program)
    return program


def _parse_statements(text: str, base_dir: Path, seen: frozenset[Path]) -> Program:
    parser = _Parser(text)
    rules: list[Rule] = []
    constraints: list[Constraint] = []
    actions: list[ActionSchema] = []
    tasks: list[TaskDef] = []

    while not parser.at("EOF"):
        token = parser.current
        if token.kind == "INCLUDE":
            parser.advance()
            target = parser.expect("STRING", "quoted file name").text.strip('"')
            path = (base_dir / target).resolve()
            if path in seen:
                raise KBSyntaxError(token.line, token.col, "non-circular #include", target)
            try:
                included = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise KBSyntaxError(token.line, token.col, "readable #include file", target) from exc
            piece = _parse_statements(included, path.parent, seen | {path})
            rules.extend(piece.rules)
            constraints.extend(piece.constraints)
            actions.extend(piece.actions)
            tasks.extend(piece.tasks)
        elif token.kind == "IDENT" and token.text == "action" and parser.peek().kind == "IDENT":
            actions.append(parser.action())
        elif token.kind == "IDENT" and token.text == "task" and parser.peek().kind == "IDENT":
            tasks.append(parser.task())
        elif token.kind == "IMPLIES":
            constraints.append(parser.constraint())
        else:
            rules.append(parser.rule())

    return Program(tuple(rules), tuple(constraints), tuple(actions), tuple(tasks))


def parse_query(text: str) -> list[Literal]:
    parser = _Parser(text)
    if parser.at("EOF"):
        return []
    literals = parser.literal_list()
    if parser.at("."):
        parser.advance()
    if not parser.at("EOF"):
        raise parser.fail("',' or end of query")
    for literal in literals:
        if literal.naf or literal.is_builtin:
            _require_bound(literal, _positive_vars(literals), str(literal))
    return literals


def load_program(*paths: str | Path) -> Program:
    program = Program()
    for path in paths:
        location = Path(path)
        parsed = _parse_statements(location.read_text(encoding="utf-8"), location.parent, frozenset({location.resolve()}))
        program = program.merged(parsed)
    validate_program(program)
    return program


def print_program(program: Program) -> str:
    chunks: list[str] = [str(rule) for rule in program.rules]
    chunks.extend(str(constraint) for constraint in program.constraints)
    chunks.extend(str(action) for action in program.actions)
    chunks.extend(str(task) for task in program.tasks)
    return "".join(chunk + "\n" for chunk in chunks)


# ---------------------------------------------------------------------------
# Static checks
# ---------------------------------------------------------------------------


def _positive_vars(literals: Iterable[Literal]) -> set[str]:
    return {name for lit in literals if lit.is_positive for name in lit.variables()}


def _require_bound(literal: Literal, bound: set[str], where: str) -> None:
    missing = set(literal.variables()) - bound
    if missing:
        raise UnsafeRule(where, missing)


def validate_program(program: Program) -> None:
    """Safety, effect relations, and stratification; raises on the first problem."""

    for rule in program.rules:
        bound = _positive_vars(rule.body)
        text = str(rule)
        if rule.head.has_anonymous():
            raise UnsafeRule(text, [ANONYMOUS])
        if rule.head.naf or rule.head.is_builtin:
            raise UnsafeRule(text, [])
        if rule.head.predicate in PLANNER_RELATIONS and len(rule.head.args) == PLANNER_RELATIONS[rule.head.predicate]:
            raise UnknownRelation(rule.head.predicate, f"rule head `{text}` (state relations are not derivable)")
        _require_bound(rule.head, bound, text)
        for literal in rule.body:
            if not literal.is_positive:
                _require_bound(literal, bound, text)

    for constraint in program.constraints:
        bound = _positive_vars(constraint.body)
        for literal in constraint.body:
            if not literal.is_positive:
                _require_bound(literal, bound, str(constraint))

    seen: set[str] = set()
    for schema in program.actions:
        if schema.name in seen:
            raise DuplicateAction(f"Action {schema.name!r} is declared more than once")
        seen.add(schema.name)
        _validate_action(schema)

    check_stratified(program)


def _validate_action(schema: ActionSchema) -> None:
    where = f"action {schema.name}"
    bound = _positive_vars(schema.pre)
    params = {param.name for param in schema.params}
    unbound_params = params - bound
    if unbound_params:
        raise UnsafeRule(where, unbound_params)
    for literal in schema.pre:
        if not literal.is_positive:
            _require_bound(literal, bound, where)
    for kind, effect in schema.effects():
        literal = effect.literal
        arity = PLANNER_RELATIONS.get(literal.predicate)
        if arity is None or arity != len(literal.args) or literal.naf:
            raise UnknownRelation(f"{literal.predicate}/{len(literal.args)}", where)
        scope = set(bound)
        if effect.condition is not None:
            if effect.condition.is_positive:
                scope |= set(effect.condition.variables())
            else:
                _require_bound(effect.condition, bound, where)
        _require_bound(literal, scope, where)
        if kind == "add" and literal.has_anonymous():
            raise UnsafeRule(f"{where} add {literal}", [ANONYMOUS])


def predicate_graph(program: Program) -> nx.DiGraph:
    """Call graph over predicate keys; edges carry ``negative`` for naf calls."""

    graph = nx.DiGraph()
    for rule in program.rules:
        graph.add_node(rule.head.key)
        for literal in rule.body:
            if literal.is_builtin:
                continue
            negative = literal.naf or graph.get_edge_data(rule.head.key, literal.key, {}).get("negative", False)
            graph.add_edge(rule.head.key, literal.key, negative=negative)
    return graph


def check_stratified(program: Program) -> None:
    graph = predicate_graph(program)
    for component in nx.strongly_connected_components(graph):
        for source, target, data in graph.subgraph(component).edges(data=True):
            if data.get("negative"):
                path = nx.shortest_path(graph.subgraph(component), target, source)
                cycle = [source, *path]
                raise UnstratifiedProgram([f"{name}/{arity}" for name, arity in cycle])


__all__ = [
    "ActionSchema",
    "Binding",
    "Constant",
    "Constraint",
    "Effect",
    "Literal",
    "Program",
    "Rule",
    "TaskDef",
    "Term",
    "Variable",
    "check_stratified",
    "load_program",
    "parse_program",
    "parse_query",
    "predicate_graph",
    "print_program",
    "tokenize",
]
