"""Scene-graph ingestion and the fact representation handed to the reasoner.

A scene document (nodes with class/category/properties/states plus typed
edges) is validated into a :class:`SceneGraph`, then split into static facts
(type, attribute, category) and a list-valued :class:`StateRecord` of the
relations that actions may change.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

from pydantic import BaseModel, Field, ValidationError

from .errors import DanglingEdge, DuplicateId, SchemaError, UnknownAgent


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

# Edge names as they appear in scene files.
SCENE_RELATIONS = {
    "ON_TOP_OF": "on_top_of",
    "ON": "on_top_of",
    "CLOSE": "close",
    "INSIDE": "inside",
    "FACING": "facing",
    "HOLDS_RH": "holds",
    "HOLDS_LH": "holds",
    "SITTING": "sitting",
    "LYING": "lying",
}

# Relations the planner threads through its search, with their arity in the
# agent-centred frame (close/holds are implicitly "of the agent").
PLANNER_RELATIONS: dict[str, int] = {
    "holds": 1,
    "close": 1,
    "on": 1,
    "open": 1,
    "clean": 1,
    "dirty": 1,
    "filled": 1,
    "on_top_of": 2,
    "inside": 2,
    "sitting": 2,
    "lying": 2,
}

# The same relations as recorded from a scene, where close/holds are edges.
SCENE_FRAME_RELATIONS: dict[str, int] = {**PLANNER_RELATIONS, "close": 2, "holds": 2}

DYNAMIC_STATE_TAGS = {
    "ON": "on",
    "OPEN": "open",
    "CLEAN": "clean",
    "DIRTY": "dirty",
    "FILLED": "filled",
}

# Tags that only state the absence of a dynamic tag.
COMPLEMENT_TAGS = frozenset({"OFF", "CLOSED"})

HAND_CAPACITY = 2
ROOM_CATEGORY = "rooms"
AGENT_CATEGORY = "characters"
DOOR_CATEGORY = "doors"

_OBJECT_RE = re.compile(r"^([a-z]+)(\d+)$")


def normalize_symbol(text: str) -> str:
    """Lowercase a class/category/tag name into a KB symbol (``Light_Source`` -> ``lightsource``)."""

    return re.sub(r"[^a-z]", "", text.lower())


def normalize_tag(text: str) -> str:
    """Property/state tags keep their underscores (``HAS_SWITCH`` -> ``has_switch``)."""

    cleaned = re.sub(r"[^a-z_]", "", text.lower()).strip("_")
    return cleaned


def object_sort_key(constant: str) -> tuple[int, str]:
    match = _OBJECT_RE.match(constant)
    if match:
        return int(match.group(2)), match.group(1)
    return 0, constant


def tuple_sort_key(values: Iterable[str]) -> tuple[tuple[int, str], ...]:
    return tuple(object_sort_key(value) for value in values)


# ---------------------------------------------------------------------------
# Scene graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectId:
    name: str
    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise SchemaError(f"Object index must be >= 1, got {self.index}")
        if not re.fullmatch(r"[a-z]+", self.name):
            raise SchemaError(f"Object name must be a lowercase identifier, got {self.name!r}")

    def __str__(self) -> str:
        return f"{self.name}{self.index}"

    @classmethod
    def parse(cls, text: str) -> "ObjectId":
        match = _OBJECT_RE.match(text)
        if not match:
            raise SchemaError(f"Not an object id: {text!r}")
        return cls(match.group(1), int(match.group(2)))

    @property
    def sort_key(self) -> tuple[int, str]:
        return self.index, self.name


@dataclass(frozen=True)
class SceneNode:
    id: ObjectId
    class_name: str
    category: str
    properties: frozenset[str] = frozenset()
    states: frozenset[str] = frozenset()

    @property
    def is_room(self) -> bool:
        return normalize_symbol(self.category) == ROOM_CATEGORY

    @property
    def is_agent(self) -> bool:
        return normalize_symbol(self.category) == AGENT_CATEGORY or self.id.name == "character"

    @property
    def is_door(self) -> bool:
        return normalize_symbol(self.category) == DOOR_CATEGORY or self.id.name == "door"


@dataclass(frozen=True)
class SceneEdge:
    source: ObjectId
    relation: str
    target: ObjectId


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[SceneNode, ...] = ()
    edges: tuple[SceneEdge, ...] = ()
    # Object -> containing room; None marks the synthetic "unplaced" room.
    rooms: Mapping[ObjectId, ObjectId | None] = field(default_factory=dict)

    @cached_property
    def node_map(self) -> dict[ObjectId, SceneNode]:
        return {node.id: node for node in self.nodes}

    def node(self, object_id: ObjectId | str) -> SceneNode:
        key = ObjectId.parse(object_id) if isinstance(object_id, str) else object_id
        return self.node_map[key]

    @property
    def room_ids(self) -> list[ObjectId]:
        return sorted((node.id for node in self.nodes if node.is_room), key=lambda oid: oid.sort_key)

    def room_of(self, object_id: ObjectId) -> ObjectId | None:
        node = self.node_map[object_id]
        if node.is_room:
            return object_id
        return self.rooms.get(object_id)

    def agent(self) -> ObjectId:
        agents = sorted((node.id for node in self.nodes if node.is_agent), key=lambda oid: oid.sort_key)
        if not agents:
            raise UnknownAgent("Scene contains no character node")
        return agents[0]


class NodeDocument(BaseModel):
    id: int = Field(ge=1)
    class_name: str = Field(min_length=1)
    category: str
    properties: list[str] = Field(default_factory=list)
    states: list[str] = Field(default_factory=list)


class EdgeDocument(BaseModel):
    from_id: int
    relation_type: str
    to_id: int


class SceneDocument(BaseModel):
    nodes: list[NodeDocument]
    edges: list[EdgeDocument] = Field(default_factory=list)


def load_scene(path: str | Path) -> SceneGraph:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON ({exc})") from exc
    return ingest_scene(payload)


def ingest_scene(doc: Mapping[str, Any] | SceneDocument) -> SceneGraph:
    """Validate a scene document and build the immutable scene graph."""

    try:
        document = doc if isinstance(doc, SceneDocument) else SceneDocument.model_validate(doc)
    except ValidationError as exc:
        raise SchemaError(f"Malformed scene document: {exc}") from exc

    by_index: dict[int, SceneNode] = {}
    for raw in document.nodes:
        if raw.id in by_index:
            raise DuplicateId(raw.id)
        name = normalize_symbol(raw.class_name)
        if not name:
            raise SchemaError(f"Node {raw.id} has an unusable class_name {raw.class_name!r}")
        by_index[raw.id] = SceneNode(
            id=ObjectId(name, raw.id),
            class_name=raw.class_name,
            category=raw.category,
            properties=frozenset(tag.upper() for tag in raw.properties),
            states=frozenset(tag.upper() for tag in raw.states),
        )

    edges: list[SceneEdge] = []
    seen: set[tuple[int, str, int]] = set()
    for raw_edge in document.edges:
        relation = SCENE_RELATIONS.get(raw_edge.relation_type.upper())
        if relation is None:
            raise SchemaError(f"Unknown relation_type {raw_edge.relation_type!r}")
        for endpoint in (raw_edge.from_id, raw_edge.to_id):
            if endpoint not in by_index:
                raise DanglingEdge(raw_edge.from_id, raw_edge.relation_type, raw_edge.to_id, endpoint)
        key = (raw_edge.from_id, relation, raw_edge.to_id)
        if key in seen:
            continue
        seen.add(key)
        edges.append(SceneEdge(by_index[raw_edge.from_id].id, relation, by_index[raw_edge.to_id].id))

    held: dict[ObjectId, int] = {}
    for edge in edges:
        if edge.relation == "holds":
            held[edge.source] = held.get(edge.source, 0) + 1
            if held[edge.source] > HAND_CAPACITY:
                raise SchemaError(f"{edge.source} holds more than {HAND_CAPACITY} objects")

    nodes = tuple(sorted(by_index.values(), key=lambda node: node.id.sort_key))
    edge_tuple = tuple(sorted(edges, key=lambda e: (e.source.sort_key, e.relation, e.target.sort_key)))
    return SceneGraph(nodes=nodes, edges=edge_tuple, rooms=_assign_rooms(nodes, edge_tuple))


def _assign_rooms(nodes: tuple[SceneNode, ...], edges: tuple[SceneEdge, ...]) -> dict[ObjectId, ObjectId | None]:
    rooms = {node.id for node in nodes if node.is_room}
    parents: dict[ObjectId, list[ObjectId]] = {}
    for edge in edges:
        if edge.relation in ("inside", "on_top_of"):
            parents.setdefault(edge.source, []).append(edge.target)
        elif edge.relation == "holds":
            parents.setdefault(edge.target, []).append(edge.source)
    for targets in parents.values():
        targets.sort(key=lambda oid: (oid not in rooms, oid.sort_key))

    assignment: dict[ObjectId, ObjectId | None] = {}
    for node in nodes:
        if node.is_room:
            continue
        found: list[ObjectId] = []
        queue = deque([node.id])
        visited = {node.id}
        while queue:
            current = queue.popleft()
            for parent in parents.get(current, ()):
                if parent in rooms:
                    if parent not in found:
                        found.append(parent)
                elif parent not in visited:
                    visited.add(parent)
                    queue.append(parent)
        if len(found) > 1:
            raise SchemaError(f"{node.id} belongs to more than one room: {', '.join(map(str, found))}")
        # no room edge: the object is unplaced
        assignment[node.id] = found[0] if found else None
    return assignment


# ---------------------------------------------------------------------------
# Facts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({', '.join(self.args)})"

    @property
    def sort_key(self) -> tuple:
        first = object_sort_key(self.args[0]) if self.args else (0, "")
        return first, self.predicate, tuple_sort_key(self.args[1:])


@dataclass(frozen=True)
class StateRecord:
    """Canonical (sorted, de-duplicated) list-valued dynamic state."""

    relations: tuple[tuple[str, tuple[tuple[str, ...], ...]], ...] = ()

    @classmethod
    def build(
        cls,
        mapping: Mapping[str, Iterable[Iterable[str]]],
        names: Iterable[str] = (),
    ) -> "StateRecord":
        keys = sorted(set(names) | set(mapping))
        items = []
        for name in keys:
            unique = {tuple(values) for values in mapping.get(name, ())}
            items.append((name, tuple(sorted(unique, key=tuple_sort_key))))
        return cls(tuple(items))

    @classmethod
    def empty(cls, names: Iterable[str] = PLANNER_RELATIONS) -> "StateRecord":
        return cls.build({}, names)

    @cached_property
    def _index(self) -> dict[str, tuple[tuple[str, ...], ...]]:
        return dict(self.relations)

    @cached_property
    def _sets(self) -> dict[str, frozenset[tuple[str, ...]]]:
        return {name: frozenset(tuples) for name, tuples in self.relations}

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.relations]

    def has_relation(self, name: str) -> bool:
        return name in self._index

    def tuples(self, name: str) -> tuple[tuple[str, ...], ...]:
        return self._index.get(name, ())

    def contains(self, name: str, args: Iterable[str]) -> bool:
        return tuple(args) in self._sets.get(name, frozenset())

    def count(self) -> int:
        return sum(len(tuples) for _, tuples in self.relations)

    def atoms(self) -> list[Atom]:
        return [Atom(name, values) for name, tuples in self.relations for values in tuples]

    def objects(self) -> set[str]:
        return {value for _, tuples in self.relations for values in tuples for value in values}

    def with_changes(
        self,
        added: Iterable[tuple[str, tuple[str, ...]]] = (),
        removed: Iterable[tuple[str, tuple[str, ...]]] = (),
    ) -> "StateRecord":
        working = {name: set(tuples) for name, tuples in self.relations}
        for name, values in removed:
            working.get(name, set()).discard(tuple(values))
        for name, values in added:
            working.setdefault(name, set()).add(tuple(values))
        return StateRecord.build(working)

    def restrict(self, keep: set[str]) -> tuple["StateRecord", list[Atom]]:
        retained: dict[str, list[tuple[str, ...]]] = {}
        dropped: list[Atom] = []
        for name, tuples in self.relations:
            retained[name] = []
            for values in tuples:
                if all(value in keep for value in values):
                    retained[name].append(values)
                else:
                    dropped.append(Atom(name, values))
        return StateRecord.build(retained, self.names), dropped

    def diff(self, other: "StateRecord") -> tuple[list[Atom], list[Atom]]:
        """Atoms added and removed going from ``self`` to ``other``."""

        mine = set(self.atoms())
        theirs = set(other.atoms())
        added = sorted(theirs - mine, key=lambda atom: atom.sort_key)
        removed = sorted(mine - theirs, key=lambda atom: atom.sort_key)
        return added, removed

    def render(self) -> list[str]:
        lines = []
        for name, tuples in self.relations:
            if all(len(values) == 1 for values in tuples):
                body = ", ".join(values[0] for values in tuples)
            else:
                body = ", ".join("[" + ", ".join(values) + "]" for values in tuples)
            lines.append(f"{name}([{body}]).")
        return lines


@dataclass(frozen=True)
class FactBase:
    static_facts: tuple[Atom, ...] = ()
    state: StateRecord = field(default_factory=lambda: StateRecord.empty(SCENE_FRAME_RELATIONS))
    objects: tuple[str, ...] = ()

    @cached_property
    def index(self) -> dict[tuple[str, int], tuple[tuple[str, ...], ...]]:
        grouped: dict[tuple[str, int], list[tuple[str, ...]]] = {}
        for atom in self.static_facts:
            grouped.setdefault((atom.predicate, len(atom.args)), []).append(atom.args)
        return {key: tuple(values) for key, values in grouped.items()}

    @cached_property
    def first_arg_index(self) -> dict[tuple[str, int, str], tuple[tuple[str, ...], ...]]:
        grouped: dict[tuple[str, int, str], list[tuple[str, ...]]] = {}
        for atom in self.static_facts:
            if atom.args:
                grouped.setdefault((atom.predicate, len(atom.args), atom.args[0]), []).append(atom.args)
        return {key: tuple(values) for key, values in grouped.items()}

    @cached_property
    def atom_set(self) -> frozenset[tuple[str, tuple[str, ...]]]:
        return frozenset((atom.predicate, atom.args) for atom in self.static_facts)

    @cached_property
    def object_set(self) -> frozenset[str]:
        return frozenset(self.objects)

    @cached_property
    def classes(self) -> dict[str, str]:
        return {args[0]: args[1] for args in self.index.get(("type", 2), ())}

    def class_of(self, obj: str) -> str | None:
        return self.classes.get(obj)

    def has(self, predicate: str, *args: str) -> bool:
        return (predicate, tuple(args)) in self.atom_set

    def line_count(self) -> int:
        return len(self.static_facts) + len(self.state.relations)

    def restrict(self, keep: set[str]) -> tuple["FactBase", list[Atom], list[Atom]]:
        """Keep only facts whose object arguments all belong to ``keep``."""

        kept_static: list[Atom] = []
        dropped_static: list[Atom] = []
        for atom in self.static_facts:
            if all(arg in keep for arg in atom.args if arg in self.object_set):
                kept_static.append(atom)
            else:
                dropped_static.append(atom)
        state, dropped_state = self.state.restrict(keep | (self.state.objects() - self.object_set))
        objects = tuple(obj for obj in self.objects if obj in keep)
        return FactBase(tuple(kept_static), state, objects), dropped_static, dropped_state

    def dump(self) -> str:
        lines = [f"{atom}." for atom in self.static_facts]
        lines.extend(self.state.render())
        return "\n".join(lines) + ("\n" if lines else "")


_FACT_LINE = re.compile(r"^(-?[a-z]\w*)(?:\((.*)\))?\.$")


def load_facts(text: str) -> FactBase:
    """Inverse of :meth:`FactBase.dump`."""

    static: list[Atom] = []
    state: dict[str, list[tuple[str, ...]]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        match = _FACT_LINE.match(line)
        if not match:
            raise SchemaError(f"Fact dump line {number} is not an atom: {raw!r}")
        predicate, body = match.group(1), (match.group(2) or "").strip()
        if body.startswith("["):
            state[predicate] = _parse_state_list(body)
        else:
            args = tuple(part.strip() for part in body.split(",")) if body else ()
            static.append(Atom(predicate, args))
    objects = sorted({atom.args[0] for atom in static if atom.predicate == "type" and len(atom.args) == 2}, key=object_sort_key)
    return FactBase(tuple(static), StateRecord.build(state), tuple(objects))


def _parse_state_list(body: str) -> list[tuple[str, ...]]:
    inner = body.strip()[1:-1].strip()
    if not inner:
        return []
    if inner.startswith("["):
        return [tuple(part.strip() for part in group.split(",")) for group in re.findall(r"\[([^\[\]]*)\]", inner)]
    return [(part.strip(),) for part in inner.split(",")]


def to_facts(scene: SceneGraph) -> FactBase:
    """Split a scene into static facts and the scene-frame state record."""

    static: set[Atom] = set()
    state: dict[str, list[tuple[str, ...]]] = {name: [] for name in SCENE_FRAME_RELATIONS}

    for node in scene.nodes:
        obj = str(node.id)
        static.add(Atom("type", (obj, node.id.name)))
        for tag in node.properties:
            name = normalize_tag(tag)
            if name:
                static.add(Atom(name, (obj,)))
        category = normalize_symbol(node.category)
        if category:
            static.add(Atom(category, (obj,)))
        for tag in node.states:
            if tag in DYNAMIC_STATE_TAGS:
                state[DYNAMIC_STATE_TAGS[tag]].append((obj,))
            elif tag not in COMPLEMENT_TAGS and normalize_tag(tag):
                static.add(Atom(normalize_tag(tag), (obj,)))

    for edge in scene.edges:
        pair = (str(edge.source), str(edge.target))
        if edge.relation == "facing":
            static.add(Atom("facing", pair))
        else:
            state[edge.relation].append(pair)

    objects = tuple(str(node.id) for node in scene.nodes)
    facts = tuple(sorted(static, key=lambda atom: atom.sort_key))
    return FactBase(facts, StateRecord.build(state, SCENE_FRAME_RELATIONS), objects)


def initial_state(facts: FactBase, agent: ObjectId | str) -> StateRecord:
    """Project the scene-frame record onto the agent-centred planner state."""

    me = str(agent)
    if me not in facts.object_set:
        raise UnknownAgent(f"Agent {me} is not in the fact base")

    scene = facts.state
    holds = [(obj,) for holder, obj in scene.tuples("holds") if holder == me]
    close = {(b,) for a, b in scene.tuples("close") if a == me}
    close |= {(a,) for a, b in scene.tuples("close") if b == me}
    close |= set(holds)

    record: dict[str, Iterable[tuple[str, ...]]] = {
        "holds": holds,
        "close": close,
        "on_top_of": scene.tuples("on_top_of"),
        "inside": scene.tuples("inside"),
        "sitting": [pair for pair in scene.tuples("sitting") if pair[0] == me],
        "lying": [pair for pair in scene.tuples("lying") if pair[0] == me],
    }
    for name in ("on", "open", "clean", "dirty", "filled"):
        record[name] = scene.tuples(name)
    return StateRecord.build(record, PLANNER_RELATIONS)


__all__ = [
    "Atom",
    "FactBase",
    "ObjectId",
    "PLANNER_RELATIONS",
    "SCENE_FRAME_RELATIONS",
    "SceneEdge",
    "SceneGraph",
    "SceneNode",
    "StateRecord",
    "ingest_scene",
    "initial_state",
    "load_facts",
    "load_scene",
    "object_sort_key",
    "to_facts",
]
