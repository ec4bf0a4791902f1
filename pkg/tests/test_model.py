"""Model loading, validation, basic blocks, and class hierarchy."""

import json
import pathlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadgetfuzz.model import (
    DuplicateDefinition,
    InheritanceCycle,
    TypeRef,
    UnresolvedName,
    class_hierarchy,
    compute_blocks,
    dump_program,
    load_program,
    parse_type,
)

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "gadgetfuzz" / "data"


def minimal_doc(**overrides):
    doc = {
        "interfaces": [],
        "classes": [
            {
                "name": "A",
                "implements": [],
                "serializable": True,
                "fields": [],
                "methods": [{"name": "m", "params": [], "static": False, "body": [{"op": "return"}]}],
            }
        ],
    }
    doc.update(overrides)
    return doc


def test_minimal_program_loads():
    model = load_program(minimal_doc())
    assert len(model.classes) == 1
    assert model.has_method(("A", "m"))


def test_cc2_mini_shape():
    model = load_program((DATA / "cc2_mini.json").read_text())
    assert len(model.classes) == 4
    assert len(model.interfaces) == 2
    names = {c.name for c in model.classes}
    assert names == {
        "PriorityQueue",
        "TransformingComparator",
        "NopComparator",
        "InvokerTransformer",
    }


def test_duplicate_class_rejected():
    doc = minimal_doc()
    doc["classes"].append(doc["classes"][0])
    with pytest.raises(DuplicateDefinition):
        load_program(doc)


def test_unknown_supertype_rejected():
    doc = minimal_doc()
    doc["classes"][0]["extends"] = "Ghost"
    with pytest.raises(UnresolvedName):
        load_program(doc)


def test_inheritance_cycle_rejected():
    doc = minimal_doc()
    doc["classes"] = [
        {"name": "A", "extends": "B", "implements": [], "serializable": True, "fields": [], "methods": []},
        {"name": "B", "extends": "A", "implements": [], "serializable": True, "fields": [], "methods": []},
    ]
    with pytest.raises(InheritanceCycle):
        load_program(doc)


def test_round_trip_is_identity():
    for name in ("cc2_mini.json", "corpus/inteq-hard.json"):
        model = load_program((DATA / name).read_text())
        again = load_program(json.dumps(dump_program(model)))
        assert dump_program(again) == dump_program(model)


def test_parse_type():
    assert parse_type("int") == TypeRef("int", 0)
    assert parse_type("string[]") == TypeRef("string", 1)
    assert str(parse_type("Foo[]")) == "Foo[]"


# --- basic blocks ----------------------------------------------------------


def _stmts(records):
    doc = minimal_doc()
    doc["classes"][0]["methods"][0]["body"] = records
    model = load_program(doc)
    return model.method(("A", "m")).body


def test_blocks_straight_line_is_one_block():
    body = _stmts([{"op": "const", "dst": "x", "value": 1}, {"op": "return"}])
    info = compute_blocks(body)
    assert info.starts == (0,)
    assert info.stmt_block == (0, 0)


def test_blocks_single_branch_gives_three_blocks():
    # one branch -> fallthrough block and labeled block: 3 blocks total
    body = _stmts(
        [
            {"op": "const", "dst": "x", "value": 1},
            {"op": "branch", "lhs": "x", "relop": "is-null", "target": "out"},
            {"op": "return"},
            {"op": "return", "label": "out"},
        ]
    )
    info = compute_blocks(body)
    assert len(info.starts) == 3
    assert info.stmt_block == (0, 0, 1, 2)


def test_blocks_leaders_are_label_and_post_terminator():
    body = _stmts(
        [
            {"op": "goto", "target": "end"},
            {"op": "const", "dst": "x", "value": 1},
            {"op": "return", "label": "end"},
        ]
    )
    info = compute_blocks(body)
    assert info.starts == (0, 1, 2)


# --- hierarchy -------------------------------------------------------------


def test_singleton_hierarchy_overriders():
    model = load_program(minimal_doc())
    h = class_hierarchy(model)
    assert h.overriders("A", "m") == (("A", "m"),)


def test_cc2_mini_comparator_implementers():
    model = load_program((DATA / "cc2_mini.json").read_text())
    h = class_hierarchy(model)
    assert set(h.subtypes("Comparator")) == {"TransformingComparator", "NopComparator"}


@st.composite
def hierarchy_doc(draw):
    """Random single-inheritance forest over up to 30 classes."""
    n = draw(st.integers(min_value=1, max_value=30))
    classes = []
    for i in range(n):
        parent = draw(st.one_of(st.none(), st.integers(min_value=0, max_value=i - 1))) if i else None
        rec = {
            "name": f"C{i}",
            "implements": [],
            "serializable": True,
            "fields": [],
            "methods": [],
        }
        if parent is not None:
            rec["extends"] = f"C{parent}"
        classes.append(rec)
    return {"interfaces": [], "classes": classes}


@settings(max_examples=50, deadline=None)
@given(hierarchy_doc())
def test_hierarchy_matches_brute_force_closure(doc):
    model = load_program(doc)
    h = class_hierarchy(model)
    # oracle: reflexive-transitive closure of the declared extends edges
    parents = {c["name"]: c.get("extends") for c in doc["classes"]}

    def ancestors(name):
        out = []
        cur = name
        while cur is not None:
            out.append(cur)
            cur = parents[cur]
        return out

    for c in doc["classes"]:
        expected = {k for k in parents if c["name"] in ancestors(k)}
        assert set(h.subtypes(c["name"])) == expected
        for anc in ancestors(c["name"]):
            assert h.is_subtype(c["name"], anc)
