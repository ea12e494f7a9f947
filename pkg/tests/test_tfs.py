"""Tests for expectations, matching, reinforcement and replay."""
import numpy as np
import pytest

from cognicore.const import (
    EXP_ACHIEVED,
    EXP_EXPIRED,
    EXP_FAILED,
    EXP_OPEN,
    OUTCOME_NEGATIVE,
    OUTCOME_POSITIVE,
    PROVENANCE_DEDUCTION,
    STATUS_HYPOTHESIS,
    STATUS_RETIRED,
)
from cognicore.exceptions import (
    AlreadyClosed,
    InvalidDeadline,
    NoSupportingRules,
    UnknownExpectation,
    UnknownObject,
)
from cognicore.lpi import Prediction, mine_into, predict, probability, refresh
from cognicore.ontology import Literal
from cognicore.store import ObjectRecord, Rule, Store
from cognicore.tfs import (
    Expectation,
    ReinforcementEvent,
    expire_due,
    match_outcome,
    open_expectation,
    reinforce,
    replay,
)

DONE = Literal("status", "done")


def _supported(store: Store, a: int = 8, b: int = 2) -> Prediction:
    rule = Rule((Literal("task_kind", "k0"),), DONE, a=a, b=b)
    store.put_rule(rule)
    return Prediction(DONE, 0.8, 0.01, 0.8, (rule.id,))


def test_open_expectation(pm_store):
    prediction = _supported(pm_store)
    exp = open_expectation("assignment-1", prediction, 2.0, pm_store)
    assert exp.id == "exp-000001"
    assert exp.status == EXP_OPEN
    assert exp.issued_at == 1.0
    assert exp.expected == DONE
    assert pm_store.open_expectation_for("assignment-1") is exp
    assert exp.issued_rev == pm_store.revision


def test_open_expectation_errors(pm_store):
    prediction = _supported(pm_store)
    with pytest.raises(NoSupportingRules):
        open_expectation("assignment-1", Prediction(DONE, 0.8, 0.01, 0.8, ()), 2.0, pm_store)
    with pytest.raises(InvalidDeadline):
        open_expectation("assignment-1", prediction, 1.0, pm_store)
    with pytest.raises(InvalidDeadline):
        open_expectation("task-1", prediction, 9.0, pm_store)
    with pytest.raises(UnknownObject):
        open_expectation("assignment-9", prediction, 9.0, pm_store)
    with pytest.raises(UnknownExpectation):
        pm_store.expectation("exp-000042")


def test_match_achieved_then_closed(pm_store):
    prediction = _supported(pm_store)
    exp = open_expectation("assignment-1", prediction, 2.0, pm_store)
    exp, event = match_outcome(exp, pm_store.get("result-1"), pm_store)
    assert exp.status == EXP_ACHIEVED
    assert event.outcome == OUTCOME_POSITIVE
    assert event.expectation_id == exp.id
    assert exp.closed_rev == event.rev
    assert pm_store.events_for(exp.id) == (event,)
    assert pm_store.open_expectation_for("assignment-1") is None
    with pytest.raises(AlreadyClosed):
        match_outcome(exp, pm_store.get("result-1"), pm_store)


def test_match_failed(pm_store):
    prediction = _supported(pm_store)
    exp = open_expectation("assignment-3", prediction, 4.0, pm_store)
    exp, event = match_outcome(exp, pm_store.get("result-3"), pm_store)
    assert exp.status == EXP_FAILED
    assert event.outcome == OUTCOME_NEGATIVE


def test_out_of_window_observation_leaves_expectation_open(pm_store):
    prediction = _supported(pm_store)
    exp = open_expectation("assignment-2", prediction, 2.2, pm_store)
    same, event = match_outcome(exp, pm_store.get("result-2"), pm_store)
    assert event is None and same.status == EXP_OPEN
    same, event = match_outcome(exp, pm_store.get("result-1"), pm_store)
    assert event is None
    _, event = match_outcome(exp, None, pm_store, now=2.2)
    assert exp.status == EXP_EXPIRED
    assert event.outcome == OUTCOME_NEGATIVE


def test_expire_due(pm_store):
    prediction = _supported(pm_store)
    first = open_expectation("assignment-1", prediction, 5.0, pm_store)
    second = open_expectation("assignment-2", prediction, 9.0, pm_store)
    events = expire_due(pm_store, 6.0)
    assert [event.expectation_id for event in events] == [first.id]
    assert second.status == EXP_OPEN
    assert expire_due(pm_store, 6.0) == []


def test_reinforce_moves_pseudo_counts(pm_store):
    prediction = _supported(pm_store)
    rule_id = prediction.supporting_rules[0]
    exp = open_expectation("assignment-1", prediction, 2.0, pm_store)
    _, event = match_outcome(exp, pm_store.get("result-1"), pm_store)
    assert reinforce(event, pm_store) == [rule_id]
    assert pm_store.rule(rule_id).r_pos == 1.0
    assert pm_store.rule(rule_id).r_neg == 0.0


def test_reinforce_retires_refuted_rules(pm_store):
    prediction = _supported(pm_store, a=4, b=4)
    rule_id = prediction.supporting_rules[0]
    exp = open_expectation("assignment-3", prediction, 4.0, pm_store)
    _, event = match_outcome(exp, pm_store.get("result-3"), pm_store)
    assert reinforce(event, pm_store) == [rule_id]
    assert pm_store.rule(rule_id).status == STATUS_RETIRED
    assert reinforce(event, pm_store) == []


def test_reinforce_skips_unknown_rules(pm_store, caplog):
    prediction = Prediction(DONE, 0.8, 0.01, 0.8, ("missing",))
    exp = open_expectation("assignment-1", prediction, 2.0, pm_store)
    _, event = match_outcome(exp, pm_store.get("result-1"), pm_store)
    assert reinforce(event, pm_store) == []
    assert "Skipping unknown rule missing" in caplog.text
    orphan = ReinforcementEvent("evt-x", None, OUTCOME_POSITIVE)
    assert reinforce(orphan, pm_store) == []


def test_ledger_validation():
    with pytest.raises(ValueError):
        ReinforcementEvent("evt-1", None, "maybe")
    with pytest.raises(ValueError):
        ReinforcementEvent("evt-1", None, OUTCOME_POSITIVE, weight=0.0)
    with pytest.raises(ValueError):
        Expectation.from_dict(
            {
                "id": "exp-1",
                "action_id": "a",
                "expected": "status=done",
                "probability_at_issue": 0.5,
                "deadline": 1.0,
                "status": "lost",
            }
        )


def _project(pm_schema, tasks: int = 40) -> Store:
    store = Store(pm_schema)
    store.insert(ObjectRecord("project-1", "project", time_start=0.0))
    for index in range(1, tasks + 1):
        kind = "k0" if index % 2 else "k1"
        good = (kind == "k0") != (index % 10 in (1, 2))
        store.insert(ObjectRecord(f"task-{index}", "task", {"task_kind": kind}))
        store.insert(
            ObjectRecord(
                f"assignment-{index}",
                "assignment",
                {"task_kind": kind, "position": "e0"},
                relations=(("task", f"task-{index}"),),
                time_start=float(index),
                parent_process="project-1",
            )
        )
        store.insert(
            ObjectRecord(
                f"result-{index}",
                "task_result",
                {
                    "task_kind": kind,
                    "position": "e0",
                    "status": "done" if good else "failed",
                },
                relations=(("task", f"task-{index}"),),
                time_start=index + 0.5,
                parent_process="project-1",
            )
        )
    return store


def test_replay_rebuilds_rule_base(pm_schema):
    store = _project(pm_schema)
    refresh(store, targets=["status"])
    assert store.rules()
    store.insert(ObjectRecord("task-100", "task", {"task_kind": "k0"}))
    store.insert(
        ObjectRecord(
            "assignment-100",
            "assignment",
            {"task_kind": "k0", "position": "e0"},
            relations=(("task", "task-100"),),
            time_start=100.0,
            parent_process="project-1",
        )
    )
    top = predict({"task_kind": "k0", "position": "e0"}, "status", store)[0]
    assert top.target == DONE
    exp = open_expectation("assignment-100", top, 101.0, store)
    store.insert(
        ObjectRecord(
            "result-100",
            "task_result",
            {"task_kind": "k0", "position": "e0", "status": "done"},
            relations=(("task", "task-100"),),
            time_start=100.5,
            parent_process="project-1",
        )
    )
    _, event = match_outcome(exp, store.get("result-100"), store)
    assert reinforce(event, store)

    rebuilt = replay(pm_schema, store)
    assert [r.to_dict() for r in rebuilt.rules()] == [r.to_dict() for r in store.rules()]
    assert len(rebuilt) == len(store)
    assert any(rule.r_pos == 1.0 for rule in rebuilt.rules())


def test_reinforcement_is_monotone(pm_store):
    rng = np.random.default_rng(11)
    premises = [
        {"task_kind": "k0"},
        {"task_kind": "k1"},
        {"position": "e0"},
        {"task_kind": "k0", "position": "e0"},
        {"task_kind": "k1", "position": "e0"},
    ]
    rules = [
        Rule(
            tuple(Literal(key, code) for key, code in premise.items()),
            DONE,
            a=int(rng.integers(0, 20)),
            b=int(rng.integers(0, 20)),
        )
        for premise in premises
    ]
    pm_store.put_rules(rules)
    ids = tuple(rule.id for rule in rules)
    exp = open_expectation("assignment-1", Prediction(DONE, 0.5, 0.1, 0.5, ids), 2.0, pm_store)

    for index in range(300):
        positive = bool(rng.random() < 0.5)
        event = ReinforcementEvent(
            f"evt-{index}",
            exp.id,
            OUTCOME_POSITIVE if positive else OUTCOME_NEGATIVE,
            weight=float(rng.uniform(0.1, 2.0)),
        )
        before = {rule_id: probability(pm_store.rule(rule_id)) for rule_id in ids}
        reinforce(event, pm_store)
        for rule_id in ids:
            after = probability(pm_store.rule(rule_id))
            if positive:
                assert after >= before[rule_id]
            else:
                assert after <= before[rule_id]


def test_replay_repeats_mining_runs_and_adopted_rules(pm_schema):
    store = _project(pm_schema)
    assert mine_into(store, "status")
    store.adopt_rules(
        [
            Rule(
                (Literal("position", "e0"),),
                Literal("task_kind", "k0"),
                status=STATUS_HYPOTHESIS,
                provenance=PROVENANCE_DEDUCTION,
                provisional=0.6,
            )
        ]
    )
    assert [entry["op"] for entry in store.refreshes()] == ["mine", "rules"]

    rebuilt = replay(pm_schema, store)
    assert [r.to_dict() for r in rebuilt.rules()] == [r.to_dict() for r in store.rules()]
    assert [e["op"] for e in rebuilt.refreshes()] == ["mine", "rules"]
