"""Tests for the object base, rule base and persistence."""
from dataclasses import replace
import filecmp
import json
import os

import pytest

from cognicore.const import STATUS_CONFIRMED, STATUS_MINED
from cognicore.exceptions import (
    FormatError,
    OverlappingClassifiers,
    SchemaViolation,
    UnknownObject,
)
from cognicore.lpi import refresh
from cognicore.ontology import Literal
from cognicore.store import ObjectRecord, Rule, Store, eval_literal, eval_premise

from .helpers import fill, flat_schema


@pytest.fixture
def toy_store():
    schema = flat_schema({"x": ("1", "0"), "y": ("a", "b", "c"), "t": ("yes", "no")})
    rows = [
        {"x": "1", "y": "a", "t": "yes"},
        {"x": "1", "y": "b", "t": "yes"},
        {"x": "1", "y": "c", "t": "no"},
        {"x": "0", "y": "a", "t": "no"},
        {"x": "0", "t": "no"},
        {"x": "1", "y": "a"},
    ]
    return fill(schema, rows)


def test_insert_stamps_revisions(toy_store):
    assert toy_store.revision == 6
    assert [r.rev for r in toy_store.records()] == [1, 2, 3, 4, 5, 6]
    rev = toy_store.insert(ObjectRecord("case-00000", "case", {"x": "0"}))
    assert rev == 7
    assert toy_store.get("case-00000").assignments == {"x": "0"}
    assert len(toy_store) == 6


def test_eval_literal_three_valued():
    record = ObjectRecord("r", "case", {"x": "1"})
    assert eval_literal(record, Literal("x", "1")) is True
    assert eval_literal(record, Literal("x", "0")) is False
    assert eval_literal(record, Literal("x", "1").negate()) is False
    assert eval_literal(record, Literal("y", "a")) is None
    assert eval_premise(record, [Literal("x", "1"), Literal("y", "a")]) is None
    assert eval_premise(record, []) is True


def test_contingency_matches_brute_force(toy_store):
    premise = (Literal("x", "1"), Literal("y", "c").negate())
    conclusion = Literal("t", "yes")
    a = b = c = d = 0
    for record in toy_store.records():
        p = eval_premise(record, premise)
        q = eval_literal(record, conclusion)
        if p is None or q is None:
            continue
        if p and q:
            a += 1
        elif p:
            b += 1
        elif q:
            c += 1
        else:
            d += 1
    assert toy_store.contingency(premise, conclusion) == (a, b, c, d) == (2, 0, 0, 2)


def test_contingency_rejects_overlap(toy_store):
    with pytest.raises(OverlappingClassifiers):
        toy_store.contingency([Literal("t", "no")], Literal("t", "yes"))
    with pytest.raises(OverlappingClassifiers):
        Rule((Literal("t", "no"),), Literal("t", "yes"))


def test_snapshot_is_stable_until_records_change(toy_store):
    first = toy_store.snapshot()
    toy_store.put_rule(Rule((Literal("x", "1"),), Literal("t", "yes")))
    assert toy_store.snapshot() is first
    toy_store.insert(ObjectRecord("extra", "case", {"x": "1", "t": "yes"}))
    second = toy_store.snapshot()
    assert second is not first
    assert len(first.records) == 6
    assert len(second.records) == 7


def test_get_unknown(toy_store):
    with pytest.raises(UnknownObject):
        toy_store.get("missing")
    assert toy_store.find("missing") is None


@pytest.mark.parametrize(
    "record",
    [
        ObjectRecord("r", "nope"),
        ObjectRecord("r", "client", {"subscribed": "yes"}),
        ObjectRecord("r", "client", {"segment": "s9"}),
        ObjectRecord("r", "client", time_start=1.0),
        ObjectRecord("r", "offer", relations=(("buyer", "c1"),)),
        ObjectRecord("r", "offer", parent_process="campaign-x"),
        ObjectRecord("r", "offer", time_start=2.0, time_end=1.0),
    ],
)
def test_validate_rejects(crm_schema, record):
    with pytest.raises(SchemaViolation):
        Store(crm_schema).insert(record)


def test_parent_must_be_a_process(crm_schema):
    store = Store(crm_schema)
    store.insert(ObjectRecord("c1", "client", {"segment": "s0"}))
    with pytest.raises(SchemaViolation):
        store.insert(ObjectRecord("o1", "offer", time_start=1.0, parent_process="c1"))


def test_process_membership_and_clock(pm_store):
    members = pm_store.members("project-1")
    assert [r.id for r in members][:2] == ["assignment-1", "result-1"]
    assert len(members) == 6
    assert pm_store.in_process(pm_store.get("result-3"), "project-1")
    assert not pm_store.in_process(pm_store.get("task-1"), "project-1")
    assert pm_store.clock == 3.5
    assert pm_store.revision_at_clock(2.0) == pm_store.get("assignment-2").rev
    assert pm_store.revision_at_clock(2.2) == pm_store.get("result-2").rev
    assert pm_store.revision_at_clock(4.0) is None
    assert [r.id for r in pm_store.referencing("task", "task-2")] == [
        "assignment-2",
        "result-2",
    ]


def test_merge_mined_keeps_reinforcement(toy_store):
    base = Rule((Literal("x", "1"),), Literal("t", "yes"), a=2, b=1)
    toy_store.put_rule(replace(base, r_pos=3.0, status=STATUS_CONFIRMED))
    toy_store.merge_mined([replace(base, a=5)])
    merged = toy_store.rule(base.id)
    assert (merged.a, merged.r_pos, merged.status) == (5, 3.0, STATUS_CONFIRMED)
    other = Rule((Literal("x", "0"),), Literal("t", "no"))
    toy_store.merge_mined([other])
    assert toy_store.rule(other.id).status == STATUS_MINED
    assert toy_store.remove_rule(other.id)
    assert not toy_store.remove_rule(other.id)


def test_save_load_round_trip_is_byte_identical(tmp_path, toy_store):
    refresh(toy_store, targets=["t"])
    first = tmp_path / "first"
    second = tmp_path / "second"
    toy_store.save(str(first))
    loaded = Store.from_directory(toy_store.schema, str(first))
    loaded.save(str(second))
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
    assert mismatch == [] and errors == []
    assert [r.rev for r in loaded.records()] == [r.rev for r in toy_store.records()]


def test_import_is_atomic(tmp_path, toy_store):
    path = tmp_path / "objects.jsonl"
    path.write_text(
        '{"id": "n1", "type_id": "case", "assignments": {"x": "1"}}\n'
        '{"id": "n2", "type_id": "case", "assignments": {"x": "7"}}\n',
        encoding="utf-8",
    )
    before = toy_store.revision
    with pytest.raises(FormatError) as info:
        toy_store.import_file(str(path))
    assert info.value.line == 2
    assert toy_store.find("n1") is None
    assert toy_store.revision == before


def test_import_rejects_bad_json(tmp_path, toy_store):
    path = tmp_path / "rules.jsonl"
    path.write_text('{"premise": [], "conclusion": "t=yes"}\nnot json\n', encoding="utf-8")
    with pytest.raises(FormatError) as info:
        toy_store.import_file(str(path))
    assert info.value.line == 2


@pytest.mark.parametrize(
    "bad",
    [
        '{"premise": ["x=7"], "conclusion": "t=yes"}',
        '{"premise": ["z=1"], "conclusion": "t=yes"}',
    ],
)
def test_rule_import_checks_schema(tmp_path, toy_store, bad):
    path = tmp_path / "rules.jsonl"
    path.write_text(
        '{"premise": ["x=1"], "conclusion": "t=yes", "a": 2, "b": 1}\n' + bad + "\n",
        encoding="utf-8",
    )
    with pytest.raises(FormatError) as info:
        toy_store.import_file(str(path))
    assert info.value.line == 2
    assert toy_store.rules() == ()


def test_rule_import_can_log_for_replay(tmp_path, toy_store):
    path = tmp_path / "rules.jsonl"
    path.write_text(
        json.dumps({"premise": ["y=a"], "conclusion": "t=no", "a": 1, "b": 1}) + "\n",
        encoding="utf-8",
    )
    assert toy_store.import_file(str(path), ledger=True) == 1
    [entry] = toy_store.refreshes()
    assert entry["op"] == "rules"
    assert [rule["conclusion"] for rule in entry["rules"]] == ["t=no"]
    assert [rule.conclusion.key for rule in toy_store.rules()] == ["t=no"]
