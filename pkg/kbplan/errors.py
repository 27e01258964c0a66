"""Exception hierarchy shared by every kbplan module."""

from __future__ import annotations

from typing import Iterable, Sequence


class KBPlanError(Exception):
    """Base class for all engine errors."""


# ---------------------------------------------------------------------------
# Scene ingestion
# ---------------------------------------------------------------------------


class SchemaError(KBPlanError, ValueError):
    pass


class DanglingEdge(KBPlanError, ValueError):
    def __init__(self, source: int, relation: str, target: int, missing: int) -> None:
        super().__init__(f"Edge {source} -{relation}-> {target} references unknown node {missing}")
        self.missing = missing


class DuplicateId(KBPlanError, ValueError):
    def __init__(self, node_id: int) -> None:
        super().__init__(f"Node id {node_id} appears more than once")
        self.node_id = node_id


class UnknownAgent(KBPlanError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Knowledge-base language
# ---------------------------------------------------------------------------


class KBSyntaxError(KBPlanError, ValueError):
    def __init__(self, line: int, col: int, expected: str, found: str = "") -> None:
        detail = f"line {line}, col {col}: expected {expected}"
        if found:
            detail += f", found {found!r}"
        super().__init__(detail)
        self.line = line
        self.col = col
        self.expected = expected


class UnsafeRule(KBPlanError, ValueError):
    def __init__(self, rule: str, variables: Iterable[str]) -> None:
        names = ", ".join(sorted(variables))
        super().__init__(f"Unsafe rule `{rule}`: {names} not bound by a positive body literal")
        self.rule = rule


class UnknownRelation(KBPlanError, ValueError):
    def __init__(self, name: str, where: str = "") -> None:
        suffix = f" in {where}" if where else ""
        super().__init__(f"Unknown dynamic relation {name!r}{suffix}")
        self.name = name


class DuplicateAction(KBPlanError, ValueError):
    pass


class UnstratifiedProgram(KBPlanError, ValueError):
    def __init__(self, cycle: Sequence[str]) -> None:
        super().__init__("Recursion through negation: " + " -> ".join(cycle))
        self.cycle = list(cycle)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


class NonGroundNaf(KBPlanError, RuntimeError):
    pass


class DepthExceeded(KBPlanError, RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Optimizer / planner
# ---------------------------------------------------------------------------


class NoModuleResolvable(KBPlanError, ValueError):
    pass


class NoCandidate(KBPlanError, ValueError):
    def __init__(self, variable: str, task: str) -> None:
        super().__init__(f"No object satisfies the static constraints on {variable} for task {task!r}")
        self.variable = variable
        self.task = task


class IllegalAction(KBPlanError, RuntimeError):
    pass


class UnknownTask(KBPlanError, ValueError):
    def __init__(self, name: str, available: Iterable[str]) -> None:
        listing = ", ".join(sorted(available)) or "(none)"
        super().__init__(f"Unknown task {name!r}; available tasks: {listing}")
        self.name = name
