"""Reference implementations the engine is checked against.

* ``bottom_up``: naive stratum-by-stratum fixpoint evaluation.
* ``random_program``: seeded generator of safe, stratified programs.
* ``small_world`` / ``bfs_solvable``: tiny households and exhaustive search.
"""

from __future__ import annotations

import itertools
import random
from collections import deque

import networkx as nx

from kbplan.inference import Solver
from kbplan.kb_language import Constant, Literal, Program, Rule, Variable, predicate_graph
from kbplan.optimizer import CompiledKB
from kbplan.planner import Planner
from kbplan.world_model import Atom, FactBase, StateRecord

Model = dict[tuple[str, int], set[tuple[str, ...]]]


# ---------------------------------------------------------------------------
# Bottom-up evaluation
# ---------------------------------------------------------------------------


def _strata(program: Program) -> list[set[tuple[str, int]]]:
    graph = predicate_graph(program)
    condensed = nx.condensation(graph)
    order = list(reversed(list(nx.topological_sort(condensed))))
    return [set(condensed.nodes[node]["members"]) for node in order]


def _matches(literal: Literal, values: tuple[str, ...], binding: dict[str, str]) -> dict[str, str] | None:
    extended = dict(binding)
    for term, value in zip(literal.args, values):
        if isinstance(term, Constant):
            if term.name != value:
                return None
        elif term.anonymous:
            continue
        elif extended.setdefault(term.name, value) != value:
            return None
    return extended


def _body_answers(body: tuple[Literal, ...], model: Model) -> list[dict[str, str]]:
    positives = [lit for lit in body if lit.is_positive]
    checks = [lit for lit in body if not lit.is_positive]
    bindings: list[dict[str, str]] = [{}]
    for literal in positives:
        extended = []
        for binding in bindings:
            for values in model.get(literal.key, set()):
                if len(values) != len(literal.args):
                    continue
                found = _matches(literal, values, binding)
                if found is not None:
                    extended.append(found)
        bindings = extended
    answers = []
    for binding in bindings:
        ok = True
        for literal in checks:
            ground = literal.substitute(binding)
            if ground.is_builtin:
                ok = str(ground.args[0]) != str(ground.args[1])
            else:
                values = tuple(str(arg) for arg in ground.args)
                ok = values not in model.get(ground.key, set())
            if not ok:
                break
        if ok:
            answers.append(binding)
    return answers


def bottom_up(program: Program, facts: FactBase) -> Model:
    model: Model = {}
    for atom in facts.static_facts:
        model.setdefault((atom.predicate, len(atom.args)), set()).add(atom.args)
    for stratum in _strata(program):
        rules = [rule for rule in program.rules if rule.head.key in stratum]
        changed = True
        while changed:
            changed = False
            for rule in rules:
                for binding in _body_answers(rule.body, model):
                    values = tuple(str(arg) for arg in rule.head.substitute(binding).args)
                    bucket = model.setdefault(rule.head.key, set())
                    if values not in bucket:
                        bucket.add(values)
                        changed = True
    return model


def top_down(program: Program, facts: FactBase, key: tuple[str, int]) -> set[tuple[str, ...]]:
    name, arity = key
    negated = name.startswith("-")
    query = Literal(name.lstrip("-"), tuple(Variable(f"V{i}") for i in range(arity)), negated=negated)
    solver = Solver(program, facts, StateRecord.empty())
    return {tuple(answer[f"V{i}"] for i in range(arity)) for answer, _ in solver.solve([query])}


# ---------------------------------------------------------------------------
# Random stratified programs
# ---------------------------------------------------------------------------

_VARS = ("X", "Y", "Z")


def random_program(seed: int, max_rules: int = 30, max_constants: int = 10) -> tuple[Program, FactBase, list[tuple[str, int]]]:
    """A safe program whose ``q`` predicates only call lower-numbered ones through ``not``.

    Returns the program, its extensional facts and every intensional key.
    """

    rng = random.Random(seed)
    constants = [f"c{i}" for i in range(rng.randint(2, max_constants))]
    edb = {f"e{i}": rng.randint(1, 2) for i in range(3)}
    idb = {f"q{i}": rng.randint(0, 2) for i in range(rng.randint(2, 6))}

    static = set()
    for name, arity in edb.items():
        for _ in range(rng.randint(1, 6)):
            static.add(Atom(name, tuple(rng.choice(constants) for _ in range(arity))))

    def atom(name: str, arity: int, pool: list[str]) -> Literal:
        args = []
        for _ in range(arity):
            if pool and rng.random() < 0.8:
                args.append(Variable(rng.choice(pool)))
            else:
                args.append(Constant(rng.choice(constants)))
        return Literal(name, tuple(args))

    names = list(idb)
    rules: list[Rule] = []
    for _ in range(rng.randint(1, max_rules)):
        level = rng.randrange(len(names))
        head_name = names[level]
        body: list[Literal] = []
        for _ in range(rng.randint(1, 3)):
            if rng.random() < 0.6 or level == 0:
                name = rng.choice(list(edb))
                body.append(atom(name, edb[name], list(_VARS)))
            else:
                callee = names[rng.randrange(level + 1)]
                body.append(atom(callee, idb[callee], list(_VARS)))
        bound = sorted({v for lit in body for v in lit.variables()})
        if level > 0 and rng.random() < 0.5:
            callee = names[rng.randrange(level)]
            body.append(Literal(callee, atom(callee, idb[callee], bound).args, naf=True))
        if len(bound) >= 2 and rng.random() < 0.3:
            body.append(Literal("!=", (Variable(bound[0]), Variable(bound[1]))))
        head = atom(head_name, idb[head_name], bound)
        rules.append(Rule(head, tuple(body)))

    facts = FactBase(tuple(sorted(static, key=lambda a: (a.predicate, a.args))), StateRecord.empty(), tuple(constants))
    keys = sorted({rule.head.key for rule in rules})
    return Program(rules=tuple(rules)), facts, keys


# ---------------------------------------------------------------------------
# Small worlds
# ---------------------------------------------------------------------------

_SMALL_CLASSES = (
    ("cup", ["GRABBABLE", "RECIPIENT"]),
    ("book", ["GRABBABLE", "READABLE"]),
    ("table", ["SURFACES"]),
    ("lamp", ["HAS_SWITCH"]),
    ("chair", ["SITTABLE"]),
    ("box", ["CONTAINERS", "CAN_OPEN"]),
    ("bed", ["LIEABLE", "SURFACES"]),
)


def small_world(seed: int) -> tuple[dict, str]:
    """A one-room scene with at most five objects and a task over them (KB text)."""

    rng = random.Random(seed)
    nodes = [
        {"id": 1, "class_name": "character", "category": "Characters"},
        {"id": 2, "class_name": "kitchen", "category": "Rooms"},
    ]
    edges = [{"from_id": 1, "relation_type": "INSIDE", "to_id": 2}]
    picked = rng.sample(_SMALL_CLASSES, rng.randint(2, 5))
    for index, (name, properties) in enumerate(picked, start=3):
        states = []
        if "CAN_OPEN" in properties:
            states.append(rng.choice(["OPEN", "CLOSED"]))
        nodes.append({"id": index, "class_name": name, "category": "Props", "properties": properties, "states": states})
        edges.append({"from_id": index, "relation_type": "INSIDE", "to_id": 2})

    by_class = {name: index for index, (name, _) in enumerate(picked, start=3)}
    options = []
    for name, properties in picked:
        if "GRABBABLE" in properties:
            options.append(f"holds(X), type(X, {name})")
            for other, other_props in picked:
                if "SURFACES" in other_props:
                    options.append(f"on_top_of(X, Y), type(X, {name}), type(Y, {other})")
                if "CONTAINERS" in other_props:
                    options.append(f"inside(X, Y), type(X, {name}), type(Y, {other})")
        if "HAS_SWITCH" in properties:
            options.append(f"on(X), type(X, {name})")
        if "SITTABLE" in properties:
            options.append(f"sitting(agent, X), type(X, {name})")
        if "CAN_OPEN" in properties:
            options.append(f"open(X), type(X, {name})")
    options.append("filled(X), type(X, cup)" if "cup" in by_class else "lying(agent, X), type(X, bed)")
    goal = rng.choice(options)
    return {"nodes": nodes, "edges": edges}, f"task sampled {{ goal: {goal}; room: kitchen }}\n"


def bfs_solvable(kb: CompiledKB, goal: list[Literal], limit: int = 50_000) -> bool:
    """Exhaustive breadth-first search over the planner's own successor relation."""

    planner = Planner(kb)
    start = planner.initial_state()
    queue = deque([start])
    seen = {start}
    while queue:
        state = queue.popleft()
        if planner.state_subset(goal, state):
            return True
        legal, _ = planner.successors(state)
        for candidate in legal:
            nxt = candidate.legality.next_state
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                if len(seen) > limit:
                    raise RuntimeError("state space larger than the oracle's limit")
                queue.append(nxt)
    return False


def all_ground(keys: list[tuple[str, int]], constants: list[str]):
    for name, arity in keys:
        for values in itertools.product(constants, repeat=arity):
            yield name, values
