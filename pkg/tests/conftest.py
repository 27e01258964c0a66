from __future__ import annotations

import json

import pytest

from kbplan import OPEN_RULES, SEED_KB
from kbplan.executor_sim import WorldModel
from kbplan.kb_language import Program, load_program
from kbplan.scenes import reference_scene
from kbplan.world_model import FactBase, SceneGraph, ingest_scene, to_facts

SEED_TASKS = (
    "go_to_sleep",
    "browse_internet",
    "wash_teeth",
    "brush_teeth",
    "vacuum",
    "change_sheets",
    "wash_dirty_dishes",
    "feed_me",
    "breakfast",
    "read",
)


@pytest.fixture(scope="session")
def scene() -> SceneGraph:
    return ingest_scene(reference_scene())


@pytest.fixture(scope="session")
def facts(scene: SceneGraph) -> FactBase:
    return to_facts(scene)


@pytest.fixture(scope="session")
def seed_program() -> Program:
    return load_program(SEED_KB)


@pytest.fixture(scope="session")
def open_program() -> Program:
    return load_program(SEED_KB, OPEN_RULES)


@pytest.fixture
def world(scene: SceneGraph) -> WorldModel:
    return WorldModel.from_scene(scene)


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(reference_scene()), encoding="utf-8")
    return path
