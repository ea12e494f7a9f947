"""Tests for closure, clustering and invariant description."""
import numpy as np
import pytest

from cognicore.config import ContextConfig, MiningConfig
from cognicore.exceptions import (
    EmptyContext,
    InconsistentStart,
    NonConvergence,
    UnknownClassifier,
    UnknownInvariant,
)
from cognicore.ontology import Literal
from cognicore.pfc import (
    ClosureState,
    _absorb_small,
    assign,
    closure,
    cluster,
    contextualize,
    describe,
    hierarchy,
)
from cognicore.store import IntentEntry, Invariant, ObjectRecord, Rule, Store

from .helpers import binary_schema, cluster_rows, fill, flat_schema

PROTOTYPES = ("00000000", "11111000", "00011111")


def _lit(text: str) -> Literal:
    cid, code = text.split("=")
    return Literal(cid, code)


def _rule(premise, conclusion, a=9, b=0) -> Rule:
    return Rule(tuple(_lit(p) for p in premise), conclusion, a=a, b=b)


def _random_rules(rng, classifiers, count):
    rules = []
    for _ in range(count):
        target = classifiers[rng.integers(len(classifiers))]
        others = [cid for cid in classifiers if cid != target]
        size = int(rng.integers(0, 3))
        chosen = rng.choice(others, size=size, replace=False)
        premise = tuple(Literal(cid, str(rng.integers(2))) for cid in chosen)
        conclusion = Literal(target, str(rng.integers(2)))
        if rng.random() < 0.3:
            conclusion = conclusion.negate()
        rules.append(Rule(premise, conclusion, a=int(rng.integers(8, 30)), b=0))
    return rules


def test_closure_fuzz_is_extensive_consistent_and_idempotent():
    rng = np.random.default_rng(0)
    classifiers = ["c0", "c1", "c2", "c3", "c4"]
    for _ in range(1000):
        rules = _random_rules(rng, classifiers, int(rng.integers(1, 12)))
        known = rng.choice(classifiers, size=int(rng.integers(0, 4)), replace=False)
        start = ClosureState.from_assignments(
            {cid: str(rng.integers(2)) for cid in known}
        )
        fixed = closure(start, rules)
        assert start.literals <= fixed.literals
        for lit in fixed.literals:
            assert not any(lit.contradicts(other) for other in fixed.literals)
        again = closure(ClosureState(fixed.literals), rules)
        assert again.literals == fixed.literals
        assert again.trace == ()


def test_stronger_rule_wins_a_conflict():
    strong = _rule(["a=1"], Literal("b", "1"), a=20)
    weak = _rule(["a=1"], Literal("b", "0"), a=9)
    fixed = closure(ClosureState.from_assignments({"a": "1"}), [weak, strong])
    assert Literal("b", "1") in fixed.literals
    assert Literal("b", "0") not in fixed.literals
    assert fixed.trace == (strong.id,)


def test_closure_ignores_weak_rules():
    weak = _rule(["a=1"], Literal("b", "1"), a=3, b=2)
    fixed = closure(ClosureState.from_assignments({"a": "1"}), [weak])
    assert fixed.literals == frozenset({Literal("a", "1")})


def test_inconsistent_start():
    start = ClosureState(frozenset({Literal("a", "1"), Literal("a", "0")}))
    with pytest.raises(InconsistentStart):
        closure(start, [])


def test_non_convergence_carries_last_state():
    rules = [_rule(["a=1"], Literal("b", "1")), _rule(["b=1"], Literal("c", "1"))]
    start = ClosureState.from_assignments({"a": "1"})
    with pytest.raises(NonConvergence) as info:
        closure(start, rules, ContextConfig(max_iterations=1))
    assert Literal("b", "1") in info.value.state.literals
    fixed = closure(start, rules, ContextConfig(max_iterations=2))
    assert Literal("c", "1") in fixed.literals


def _prototype_store(copies: int, noise: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    schema = flat_schema({f"x{i}": ("0", "1") for i in range(8)})
    rows, truth = [], []
    for label, proto in enumerate(PROTOTYPES):
        for _ in range(copies):
            bits = [int(bit) for bit in proto]
            row = {
                f"x{i}": str(1 - bit if rng.random() < noise else bit)
                for i, bit in enumerate(bits)
            }
            rows.append(row)
            truth.append(label)
    store = fill(schema, rows)
    labels = {f"case-{index:05d}": label for index, label in enumerate(truth)}
    return store, labels


_CONTEXT = ContextConfig(mining=MiningConfig(max_premise_len=2, beam_width=50))


def test_cluster_recovers_exact_prototypes():
    store, labels = _prototype_store(copies=10, noise=0.0)
    invariants = cluster(store, _CONTEXT)
    assert [inv.id for inv in invariants] == ["inv-001", "inv-002", "inv-003"]
    groups = {frozenset(inv.extent) for inv in invariants}
    expected = {
        frozenset(obj for obj, label in labels.items() if label == k) for k in range(3)
    }
    assert groups == expected
    for inv in invariants:
        assert len(inv.intent_literals(1.0)) == 8
        assert inv.label
    assert store.invariants() == tuple(invariants)


def _purity_and_coverage(invariants, labels):
    majority = 0
    for inv in invariants:
        majority += np.bincount([labels[obj] for obj in inv.extent], minlength=3).max()
    covered = sum(len(inv.extent) for inv in invariants[:3])
    return majority / len(labels), covered / len(labels)


@pytest.mark.slow
def test_cluster_absorbs_noise():
    schema = binary_schema(12)
    good = 0
    for seed in range(10):
        rows, truth = cluster_rows(seed)
        store = fill(schema, rows)
        labels = {f"case-{index:05d}": label for index, label in enumerate(truth)}
        purity, coverage = _purity_and_coverage(cluster(store), labels)
        good += purity >= 0.95 and coverage >= 0.95
    assert good >= 9


def _members(bits: str, *ids: str) -> list:
    assignments = {f"x{i}": bit for i, bit in enumerate(bits)}
    state = ClosureState.from_assignments(assignments)
    return [(ObjectRecord(obj, "case", assignments), state) for obj in ids]


def test_small_groups_join_the_nearest_invariant():
    classifiers = [f"x{i}" for i in range(4)]
    groups = {}
    for members in (
        _members("1100", "a1", "a2", "a3", "a4", "a5"),
        _members("0011", "b1", "b2", "b3", "b4"),
        _members("1000", "near-a"),
        _members("0111", "near-b") + _members("1111", "tied"),
    ):
        groups[members[0][1].key] = members
    out = _absorb_small(groups, 3, classifiers)
    extents = {
        key[0] + key[1]: sorted(record.id for record, _ in members)
        for key, members in out.items()
    }
    assert len(out) == 2
    assert extents["x0=1x1=1"] == ["a1", "a2", "a3", "a4", "a5", "near-a", "tied"]
    assert extents["x0=0x1=0"] == ["b1", "b2", "b3", "b4", "near-b"]
    assert _absorb_small(groups, 10, classifiers) is groups


def test_cluster_errors():
    schema = flat_schema({"x": ("0", "1")})
    with pytest.raises(EmptyContext):
        cluster(Store(schema))
    store = fill(schema, [{"x": "0"}, {"x": "1"}])
    with pytest.raises(UnknownClassifier):
        cluster(store, ContextConfig(classifiers=("nope",)))


@pytest.fixture
def described_store():
    store = fill(
        flat_schema({"x": ("0", "1"), "y": ("0", "1")}),
        [{"x": "1", "y": "1"}, {"x": "1", "y": "1"}, {"x": "1", "y": "0"}, {"x": "0", "y": "0"}],
    )
    broad = Invariant(
        "inv-001",
        (IntentEntry(Literal("x", "1"), 1.0, 3),),
        ("case-00000", "case-00001", "case-00002"),
    )
    narrow = Invariant(
        "inv-002",
        (IntentEntry(Literal("x", "1"), 1.0, 2), IntentEntry(Literal("y", "1"), 1.0, 2)),
        ("case-00000", "case-00001"),
    )
    store.replace_invariants([broad, narrow])
    return store


def test_hierarchy(described_store):
    links = hierarchy(described_store.invariants())
    assert links["inv-001"] == {"parents": [], "children": ["inv-002"]}
    assert links["inv-002"] == {"parents": ["inv-001"], "children": []}


def test_describe(described_store):
    text = describe("inv-002", described_store)
    lines = text.splitlines()
    assert lines[0] == "Invariant inv-002"
    assert lines[1] == "Extent: 2 objects"
    assert lines[3].split() == [
        "y=1", "frequency", "1.000", "population", "0.500", "lift", "2.000"
    ]
    assert lines[4].split()[0] == "x=1"
    assert "Parents: inv-001" in lines
    assert "Children: inv-002" in describe("inv-001", described_store)
    with pytest.raises(UnknownInvariant):
        describe("inv-999", described_store)


def test_assign_and_contextualize(described_store):
    invariants = described_store.invariants()
    assert assign({"x": "1", "y": "1"}, invariants).id == "inv-002"
    assert assign({"x": "1", "y": "0"}, invariants).id == "inv-001"
    assert assign({}, invariants).id == "inv-001"
    assert assign({"x": "1"}, []) is None
    narrow = described_store.invariant("inv-002")
    assert contextualize({"x": "1"}, narrow) == {"x": "1", "y": "1"}
    assert contextualize({"y": "0"}, narrow) == {"y": "0", "x": "1"}
