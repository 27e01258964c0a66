from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbplan.errors import DanglingEdge, DuplicateId, SchemaError, UnknownAgent
from kbplan.scenes import reference_scene, synthetic_scene
from kbplan.world_model import (
    Atom,
    ObjectId,
    StateRecord,
    ingest_scene,
    initial_state,
    load_facts,
    to_facts,
)

from oracles import small_world


def _tiny(edges=(), extra_nodes=()):
    nodes = [
        {"id": 1, "class_name": "character", "category": "Characters"},
        {"id": 2, "class_name": "kitchen", "category": "Rooms"},
        {"id": 3, "class_name": "cup", "category": "Props", "properties": ["GRABBABLE"]},
        *extra_nodes,
    ]
    return {"nodes": nodes, "edges": list(edges)}


def test_reference_scene_rooms_and_agent(scene):
    assert str(scene.agent()) == "character1"
    assert [str(room) for room in scene.room_ids] == ["livingroom2", "bedroom3", "bathroom4", "kitchen5"]
    assert str(scene.room_of(ObjectId("sofa", 6))) == "livingroom2"
    # milk sits in the fridge, which sits in the kitchen
    assert str(scene.room_of(ObjectId("milk", 30))) == "kitchen5"
    assert str(scene.room_of(ObjectId("toothbrush", 26))) == "bathroom4"


def test_static_facts_from_properties_categories_and_facing(facts):
    assert facts.has("type", "bed17", "bed")
    assert facts.has("grabbable", "book11")
    assert facts.has("has_switch", "tv7")
    assert facts.has("cover_object", "sheet19")
    assert facts.has("rooms", "bedroom3")
    assert facts.has("characters", "character1")
    assert facts.has("facing", "chair13", "desk9")
    assert not any(atom.predicate in ("closed", "off") for atom in facts.static_facts)


def test_dynamic_states_and_edges_land_in_the_state_record(facts):
    state = facts.state
    assert state.contains("dirty", ("floor16",))
    assert state.contains("on", ("fridge29",))
    assert not state.contains("open", ("fridge29",))
    assert state.contains("open", ("door14",))
    assert state.contains("on_top_of", ("pillow18", "bed17"))
    assert state.contains("inside", ("milk30", "fridge29"))
    assert state.contains("inside", ("character1", "livingroom2"))


def test_initial_state_is_agent_centred(facts):
    start = initial_state(facts, "character1")
    assert start.tuples("holds") == ()
    assert start.tuples("close") == ()
    assert start.contains("inside", ("character1", "livingroom2"))
    assert start.contains("filled", ("glass40",))


def test_initial_state_takes_held_objects_as_close():
    doc = _tiny(edges=[
        {"from_id": 1, "relation_type": "INSIDE", "to_id": 2},
        {"from_id": 1, "relation_type": "HOLDS_RH", "to_id": 3},
    ])
    facts = to_facts(ingest_scene(doc))
    start = initial_state(facts, "character1")
    assert start.tuples("holds") == (("cup3",),)
    assert start.contains("close", ("cup3",))


def test_initial_state_rejects_unknown_agent(facts):
    with pytest.raises(UnknownAgent):
        initial_state(facts, "character99")


def test_fact_dump_loads_back(facts):
    assert load_facts(facts.dump()) == facts


def test_fact_dump_rejects_garbage():
    with pytest.raises(SchemaError):
        load_facts("type(cup3, cup)\n")


def test_state_record_is_canonical():
    a = StateRecord.build({"close": [("b2",), ("a1",)], "holds": []})
    b = StateRecord.build({"holds": [], "close": [("a1",), ("b2",), ("a1",)]})
    assert a == b
    assert a.tuples("close") == (("a1",), ("b2",))
    added, removed = a.diff(a.with_changes(added=[("holds", ("a1",))], removed=[("close", ("b2",))]))
    assert added == [Atom("holds", ("a1",))]
    assert removed == [Atom("close", ("b2",))]


def test_duplicate_ids_are_rejected():
    doc = _tiny(extra_nodes=[{"id": 3, "class_name": "plate", "category": "Props"}])
    with pytest.raises(DuplicateId):
        ingest_scene(doc)


def test_dangling_edges_are_rejected():
    with pytest.raises(DanglingEdge) as info:
        ingest_scene(_tiny(edges=[{"from_id": 3, "relation_type": "ON", "to_id": 42}]))
    assert info.value.missing == 42


def test_unknown_relation_is_a_schema_error():
    with pytest.raises(SchemaError):
        ingest_scene(_tiny(edges=[{"from_id": 3, "relation_type": "BESIDE", "to_id": 2}]))


def test_more_than_two_held_objects_is_a_schema_error():
    extra = [
        {"id": 4, "class_name": "plate", "category": "Props"},
        {"id": 5, "class_name": "fork", "category": "Props"},
    ]
    edges = [{"from_id": 1, "relation_type": "HOLDS_RH", "to_id": target} for target in (3, 4, 5)]
    with pytest.raises(SchemaError):
        ingest_scene(_tiny(edges=edges, extra_nodes=extra))


def test_scene_without_character_has_no_agent():
    doc = {"nodes": [{"id": 2, "class_name": "kitchen", "category": "Rooms"}], "edges": []}
    with pytest.raises(UnknownAgent):
        ingest_scene(doc).agent()


def test_synthetic_scene_is_deterministic_and_large():
    first = synthetic_scene(500, seed=3)
    assert first == synthetic_scene(500, seed=3)
    assert len(first["nodes"]) == 500

    facts = to_facts(ingest_scene(first))
    assert len(facts.static_facts) + facts.state.count() > 1500
    # the reference inventory keeps its ids
    assert facts.has("type", "bed17", "bed")


def test_reference_scene_document_is_fresh_each_call():
    doc = reference_scene()
    doc["nodes"].clear()
    assert reference_scene()["nodes"]


def test_object_in_two_rooms_is_a_schema_error():
    extra = [{"id": 4, "class_name": "bathroom", "category": "Rooms"}]
    edges = [
        {"from_id": 3, "relation_type": "INSIDE", "to_id": 2},
        {"from_id": 3, "relation_type": "INSIDE", "to_id": 4},
    ]
    with pytest.raises(SchemaError, match="more than one room"):
        ingest_scene(_tiny(edges=edges, extra_nodes=extra))


def test_nested_objects_inherit_a_single_room():
    extra = [{"id": 4, "class_name": "table", "category": "Furniture", "properties": ["SURFACES"]}]
    edges = [
        {"from_id": 4, "relation_type": "INSIDE", "to_id": 2},
        {"from_id": 3, "relation_type": "ON", "to_id": 4},
        {"from_id": 3, "relation_type": "CLOSE", "to_id": 4},
    ]
    scene = ingest_scene(_tiny(edges=edges, extra_nodes=extra))
    assert str(scene.room_of(ObjectId("cup", 3))) == "kitchen2"
    # no room edge at all: unplaced
    assert scene.room_of(ObjectId("character", 1)) is None


def test_fact_lookup(facts):
    assert facts.has("lieable", "bed17")
    assert facts.has("type", "bed17", "bed")
    assert not facts.has("type", "bed17", "sofa")
    assert not facts.has("lieable")


def _restacked(seed, data):
    document, _ = small_world(seed)
    props = [node["id"] for node in document["nodes"][2:]]
    edges = [document["edges"][0]]
    for position, index in enumerate(props):
        parent = data.draw(st.sampled_from([2, *props[:position]]))
        edges.append({"from_id": index, "relation_type": "INSIDE" if parent == 2 else "ON", "to_id": parent})
    document["edges"] = edges
    return document


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_scene_to_facts_keeps_every_object_once(seed, data):
    document = _restacked(seed, data)
    scene = ingest_scene(document)
    facts = to_facts(scene)

    ids = [str(node.id) for node in scene.nodes]
    assert len(set(ids)) == len(ids) == len(document["nodes"])
    assert sorted(facts.objects) == sorted(ids)
    assert len(facts.index[("type", 2)]) == len(ids)

    rooms = set(scene.room_ids)
    for node in scene.nodes:
        if node.is_room:
            continue
        if node.is_agent:
            assert str(scene.room_of(node.id)) == "kitchen2"
        else:
            assert scene.room_of(node.id) in rooms, node.id
