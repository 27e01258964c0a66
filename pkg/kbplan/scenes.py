"""Scene builders: the shipped reference household and a synthetic clutter generator."""

from __future__ import annotations

import json
import logging
import random
from pathlib import Path
from typing import Any

from .world_model import SceneDocument

logger = logging.getLogger(__name__)

ROOMS = ("livingroom", "bedroom", "bathroom", "kitchen")

# id, class, category, properties, states
_REFERENCE_NODES: tuple[tuple[int, str, str, tuple[str, ...], tuple[str, ...]], ...] = (
    (1, "character", "Characters", (), ()),
    (2, "livingroom", "Rooms", (), ()),
    (3, "bedroom", "Rooms", (), ()),
    (4, "bathroom", "Rooms", (), ()),
    (5, "kitchen", "Rooms", (), ()),
    (6, "sofa", "Furniture", ("SITTABLE", "LIEABLE", "SURFACES"), ()),
    (7, "tv", "Electronics", ("HAS_SWITCH",), ("OFF",)),
    (8, "computer", "Electronics", ("HAS_SWITCH",), ("OFF",)),
    (9, "desk", "Furniture", ("SURFACES",), ()),
    (10, "keyboard", "Electronics", ("GRABBABLE",), ()),
    (11, "book", "Props", ("GRABBABLE", "READABLE"), ()),
    (12, "coffeetable", "Furniture", ("SURFACES",), ()),
    (13, "chair", "Furniture", ("SITTABLE",), ()),
    (14, "door", "Doors", ("CAN_OPEN",), ("OPEN",)),
    (15, "vacuumcleaner", "Appliances", ("GRABBABLE", "HAS_SWITCH"), ("OFF",)),
    (16, "floor", "Floors", (), ("DIRTY",)),
    (17, "bed", "Furniture", ("LIEABLE", "SITTABLE", "SURFACES"), ()),
    (18, "pillow", "Props", ("GRABBABLE",), ()),
    (19, "sheet", "Props", ("GRABBABLE", "COVER_OBJECT"), ("CLEAN",)),
    (20, "sheet", "Props", ("GRABBABLE", "COVER_OBJECT"), ("DIRTY",)),
    (21, "dresser", "Furniture", ("SURFACES", "CONTAINERS"), ()),
    (22, "book", "Props", ("GRABBABLE", "READABLE"), ()),
    (23, "laundrybasket", "Furniture", ("CONTAINERS",), ()),
    (24, "sink", "Furniture", ("SURFACES", "CONTAINERS"), ()),
    (25, "faucet", "Appliances", ("HAS_SWITCH",), ("OFF",)),
    (26, "toothbrush", "Props", ("GRABBABLE",), ()),
    (27, "toothpaste", "Props", ("GRABBABLE",), ()),
    (28, "towel", "Props", ("GRABBABLE", "COVER_OBJECT"), ()),
    (29, "fridge", "Appliances", ("CAN_OPEN", "CONTAINERS", "HAS_SWITCH"), ("CLOSED", "ON")),
    (30, "milk", "Food", ("GRABBABLE", "DRINKABLE"), ()),
    (31, "freezer", "Appliances", ("CAN_OPEN", "CONTAINERS"), ("CLOSED",)),
    (32, "meat", "Food", ("GRABBABLE",), ()),
    (33, "kitchencounter", "Furniture", ("SURFACES",), ()),
    (34, "plate", "Props", ("GRABBABLE", "RECIPIENT", "SURFACES"), ("DIRTY",)),
    (35, "cup", "Props", ("GRABBABLE", "RECIPIENT"), ("DIRTY",)),
    (36, "sponge", "Props", ("GRABBABLE",), ()),
    (37, "faucet", "Appliances", ("HAS_SWITCH",), ("OFF",)),
    (38, "sink", "Furniture", ("SURFACES", "CONTAINERS"), ()),
    (39, "bread", "Food", ("GRABBABLE",), ()),
    (40, "glass", "Props", ("GRABBABLE", "RECIPIENT"), ("FILLED",)),
    (41, "kitchentable", "Furniture", ("SURFACES",), ()),
    (42, "mug", "Props", ("GRABBABLE", "RECIPIENT"), ()),
)

_REFERENCE_EDGES: tuple[tuple[int, str, int], ...] = (
    (1, "INSIDE", 2),
    # living room
    (6, "INSIDE", 2),
    (7, "INSIDE", 2),
    (8, "ON", 9),
    (9, "INSIDE", 2),
    (10, "ON", 9),
    (11, "ON", 12),
    (12, "INSIDE", 2),
    (13, "INSIDE", 2),
    (13, "FACING", 9),
    (14, "INSIDE", 2),
    (15, "INSIDE", 2),
    (16, "INSIDE", 2),
    (42, "ON", 9),
    # bedroom
    (17, "INSIDE", 3),
    (18, "ON", 17),
    (19, "ON", 21),
    (20, "ON", 17),
    (21, "INSIDE", 3),
    (22, "ON", 21),
    (23, "INSIDE", 3),
    # bathroom
    (24, "INSIDE", 4),
    (25, "ON", 24),
    (26, "ON", 24),
    (27, "ON", 24),
    (28, "INSIDE", 4),
    # kitchen
    (29, "INSIDE", 5),
    (30, "INSIDE", 29),
    (31, "INSIDE", 5),
    (32, "ON", 33),
    (33, "INSIDE", 5),
    (34, "ON", 33),
    (35, "ON", 33),
    (36, "ON", 33),
    (37, "ON", 38),
    (38, "INSIDE", 5),
    (39, "ON", 33),
    (40, "ON", 33),
    (41, "INSIDE", 5),
)


def _node(index: int, class_name: str, category: str, properties: tuple[str, ...], states: tuple[str, ...]) -> dict[str, Any]:
    return {
        "id": index,
        "class_name": class_name,
        "category": category,
        "properties": list(properties),
        "states": list(states),
    }


def reference_scene() -> dict[str, Any]:
    """Four-room household the seed tasks are written against.

    The agent starts in the living room, close to nothing, holding nothing.
    """

    return {
        "nodes": [_node(*row) for row in _REFERENCE_NODES],
        "edges": [{"from_id": a, "relation_type": rel, "to_id": b} for a, rel, b in _REFERENCE_EDGES],
    }


# Clutter classes for the synthetic scene: class, category, properties, host kind.
_CLUTTER: tuple[tuple[str, str, tuple[str, ...], str], ...] = (
    ("apple", "Food", ("GRABBABLE",), "surface"),
    ("candle", "Decor", ("GRABBABLE",), "surface"),
    ("box", "Props", ("GRABBABLE", "CONTAINERS", "CAN_OPEN"), "room"),
    ("magazine", "Props", ("GRABBABLE", "READABLE"), "surface"),
    ("remote", "Electronics", ("GRABBABLE",), "surface"),
    ("lamp", "Electronics", ("HAS_SWITCH",), "surface"),
    ("plant", "Decor", (), "room"),
    ("shoe", "Clothes", ("GRABBABLE",), "room"),
    ("bottle", "Props", ("GRABBABLE", "RECIPIENT"), "surface"),
    ("cabinet", "Furniture", ("SURFACES", "CONTAINERS", "CAN_OPEN"), "room"),
    ("shelf", "Furniture", ("SURFACES",), "room"),
    ("stool", "Furniture", ("SITTABLE",), "room"),
    ("pen", "Props", ("GRABBABLE",), "surface"),
    ("clock", "Decor", (), "surface"),
    ("folder", "Props", ("GRABBABLE", "READABLE"), "inside"),
    ("spoon", "Props", ("GRABBABLE",), "inside"),
)

_EXTRA_ROOMS = ("hallway", "office", "diningroom", "garage", "closet", "study", "pantry", "laundryroom")


def synthetic_scene(objects: int = 500, seed: int = 0) -> dict[str, Any]:
    """The reference household padded with deterministic clutter up to ``objects`` nodes.

    Clutter takes ids after the reference inventory, so every seed task binds
    the same objects it binds in the reference scene.
    """

    rng = random.Random(seed)
    document = reference_scene()
    nodes: list[dict[str, Any]] = document["nodes"]
    edges: list[dict[str, Any]] = document["edges"]
    next_id = len(nodes) + 1

    rooms = [2, 3, 4, 5]
    for name in _EXTRA_ROOMS:
        if next_id > objects:
            break
        nodes.append(_node(next_id, name, "Rooms", (), ()))
        rooms.append(next_id)
        next_id += 1

    surfaces: list[int] = [row[0] for row in _REFERENCE_NODES if "SURFACES" in row[3]]
    containers: list[int] = []
    while next_id <= objects:
        class_name, category, properties, host = _CLUTTER[rng.randrange(len(_CLUTTER))]
        states = ("CLOSED",) if "CAN_OPEN" in properties else ("OFF",) if "HAS_SWITCH" in properties else ()
        nodes.append(_node(next_id, class_name, category, properties, states))
        if host == "surface" and surfaces:
            edges.append({"from_id": next_id, "relation_type": "ON", "to_id": rng.choice(surfaces)})
        elif host == "inside" and containers:
            edges.append({"from_id": next_id, "relation_type": "INSIDE", "to_id": rng.choice(containers)})
        else:
            edges.append({"from_id": next_id, "relation_type": "INSIDE", "to_id": rng.choice(rooms)})
        if "SURFACES" in properties:
            surfaces.append(next_id)
        if "CONTAINERS" in properties:
            containers.append(next_id)
        next_id += 1

    SceneDocument.model_validate(document)
    logger.debug("[Scenes] synthetic scene with %d nodes and %d edges (seed %d)", len(nodes), len(edges), seed)
    return document


def write_scene(document: dict[str, Any], path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(document, indent=2), encoding="utf-8")
    return target


__all__ = ["ROOMS", "reference_scene", "synthetic_scene", "write_scene"]
