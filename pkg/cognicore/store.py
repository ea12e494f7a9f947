"""Cognitive database: object base, rule base, invariants and ledgers.

All mutations go through one ``Store`` under a re-entrant lock and bump the
revision counter. Readers take a ``Snapshot``: an immutable view of the
records at one revision with integer-coded columns for fast counting.
"""
from __future__ import annotations

import bisect
from collections import ChainMap
from dataclasses import dataclass, field, replace
import json
import logging
import os
import threading
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .const import (
    EXP_OPEN,
    EXPORT_KINDS,
    INVARIANT_KINDS,
    LEDGER_OPS,
    LEDGER_REFRESH,
    LEDGER_RULES,
    ONTO_PROCESS,
    PROVENANCE_DATA,
    PROVENANCES,
    RULE_STATUSES,
    STATUS_CONFIRMED,
    STATUS_MINED,
    STATUS_RETIRED,
)
from .exceptions import (
    CognicoreError,
    FormatError,
    IoError,
    OverlappingClassifiers,
    SchemaViolation,
    UnknownExpectation,
    UnknownInvariant,
    UnknownObject,
    UnknownObjectType,
)
from .ontology import Literal, Schema, parse_literal, sort_literals

if TYPE_CHECKING:
    from .tfs import Expectation, ReinforcementEvent

_LOGGER = logging.getLogger(__name__)

Scope = Union[None, str, Sequence[str]]


def canonical_json(item: Mapping[str, Any]) -> str:
    return json.dumps(item, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _opt_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


@dataclass(frozen=True)
class ObjectRecord:
    """An instance or precedent: a partial assignment plus context."""

    id: str
    type_id: str
    assignments: Mapping[str, str] = field(default_factory=dict)
    relations: tuple[tuple[str, str], ...] = ()
    time_start: Optional[float] = None
    time_end: Optional[float] = None
    parent_process: Optional[str] = None
    rev: int = 0

    @property
    def time(self) -> Optional[float]:
        return self.time_start if self.time_start is not None else self.time_end

    @property
    def latest_time(self) -> Optional[float]:
        times = [t for t in (self.time_start, self.time_end) if t is not None]
        return max(times) if times else None

    def related(self, role: str) -> tuple[str, ...]:
        return tuple(target for name, target in self.relations if name == role)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type_id": self.type_id,
            "assignments": dict(sorted(self.assignments.items())),
            "relations": [[role, target] for role, target in self.relations],
            "time_start": self.time_start,
            "time_end": self.time_end,
            "parent_process": self.parent_process,
            "rev": self.rev,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ObjectRecord":
        assignments = data.get("assignments") or {}
        if not isinstance(assignments, Mapping):
            raise ValueError("assignments must be an object")
        return cls(
            id=str(data["id"]),
            type_id=str(data["type_id"]),
            assignments={str(k): str(v) for k, v in assignments.items()},
            relations=tuple(
                (str(role), str(target)) for role, target in data.get("relations") or []
            ),
            time_start=_opt_float(data.get("time_start")),
            time_end=_opt_float(data.get("time_end")),
            parent_process=data.get("parent_process"),
            rev=int(data.get("rev", 0)),
        )


def rule_key(premise: Iterable[Literal], conclusion: Literal) -> str:
    return "&".join(lit.key for lit in sort_literals(premise)) + "=>" + conclusion.key


@dataclass(frozen=True)
class Rule:
    """Conjunctive premise implying one literal, with its evidence."""

    premise: tuple[Literal, ...]
    conclusion: Literal
    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0
    r_pos: float = 0.0
    r_neg: float = 0.0
    p_value: float = 1.0
    status: str = STATUS_MINED
    provenance: str = PROVENANCE_DATA
    provisional: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "premise", sort_literals(self.premise))
        if self.conclusion.classifier_id in self.premise_classifiers:
            raise OverlappingClassifiers(
                f"Conclusion classifier {self.conclusion.classifier_id!r} "
                "also appears in the premise",
                ident=self.conclusion.classifier_id,
            )
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("Contingency counts must be non-negative")

    @property
    def id(self) -> str:
        return rule_key(self.premise, self.conclusion)

    @property
    def premise_classifiers(self) -> frozenset[str]:
        return frozenset(lit.classifier_id for lit in self.premise)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "premise": [lit.key for lit in self.premise],
            "conclusion": self.conclusion.key,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "r_pos": self.r_pos,
            "r_neg": self.r_neg,
            "p_value": self.p_value,
            "status": self.status,
            "provenance": self.provenance,
            "provisional": self.provisional,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Rule":
        status = data.get("status", STATUS_MINED)
        provenance = data.get("provenance", PROVENANCE_DATA)
        if status not in RULE_STATUSES or provenance not in PROVENANCES:
            raise ValueError(f"bad status/provenance {status!r}/{provenance!r}")
        return cls(
            premise=tuple(parse_literal(text) for text in data.get("premise") or []),
            conclusion=parse_literal(data["conclusion"]),
            a=int(data.get("a", 0)),
            b=int(data.get("b", 0)),
            c=int(data.get("c", 0)),
            d=int(data.get("d", 0)),
            r_pos=float(data.get("r_pos", 0.0)),
            r_neg=float(data.get("r_neg", 0.0)),
            p_value=float(data.get("p_value", 1.0)),
            status=status,
            provenance=provenance,
            provisional=_opt_float(data.get("provisional")),
        )


@dataclass(frozen=True)
class IntentEntry:
    literal: Literal
    frequency: float
    support: int


@dataclass(frozen=True)
class Invariant:
    """A fixed point shared by a group of objects."""

    id: str
    intent: tuple[IntentEntry, ...]
    extent: tuple[str, ...]
    label: Optional[str] = None
    closure: tuple[Literal, ...] = ()
    rules: tuple[str, ...] = ()

    def intent_literals(self, min_frequency: float = 0.0) -> frozenset[Literal]:
        return frozenset(
            entry.literal for entry in self.intent if entry.frequency >= min_frequency
        )

    def frequency(self, lit: Literal) -> float:
        for entry in self.intent:
            if entry.literal == lit:
                return entry.frequency
        return 0.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "intent": [
                {
                    "literal": entry.literal.key,
                    "frequency": entry.frequency,
                    "support": entry.support,
                }
                for entry in self.intent
            ],
            "extent": list(self.extent),
            "label": self.label,
            "closure": [lit.key for lit in self.closure],
            "rules": list(self.rules),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Invariant":
        return cls(
            id=str(data["id"]),
            intent=tuple(
                IntentEntry(
                    parse_literal(entry["literal"]),
                    float(entry["frequency"]),
                    int(entry["support"]),
                )
                for entry in data.get("intent") or []
            ),
            extent=tuple(str(item) for item in data.get("extent") or []),
            label=data.get("label"),
            closure=tuple(parse_literal(text) for text in data.get("closure") or []),
            rules=tuple(str(item) for item in data.get("rules") or []),
        )


def eval_literal(
    record: Union[ObjectRecord, Mapping[str, str]], lit: Literal
) -> Optional[bool]:
    """True, False, or None when the classifier is unassigned."""
    assignments = record.assignments if isinstance(record, ObjectRecord) else record
    value = assignments.get(lit.classifier_id)
    if value is None:
        return None
    if lit.positive:
        return value == lit.category_code
    return value != lit.category_code


def eval_premise(
    record: Union[ObjectRecord, Mapping[str, str]], premise: Iterable[Literal]
) -> Optional[bool]:
    """Conjunction: None if any literal is unevaluable, else all true."""
    result = True
    for lit in premise:
        value = eval_literal(record, lit)
        if value is None:
            return None
        result = result and value
    return result


def _check_disjoint(premise: Iterable[Literal], conclusion: Literal) -> None:
    if any(lit.classifier_id == conclusion.classifier_id for lit in premise):
        raise OverlappingClassifiers(
            f"Classifier {conclusion.classifier_id!r} is on both sides",
            ident=conclusion.classifier_id,
        )


class EvidenceView:
    """Integer-coded columns of one record population.

    Column value is the category index, -1 when unassigned and -2 for a code
    outside the current domain.
    """

    def __init__(self, schema: Schema, records: Sequence[ObjectRecord]) -> None:
        self._schema = schema
        self._records = tuple(records)
        self.ids = tuple(record.id for record in self._records)
        self.size = len(self._records)
        self._columns: dict[str, np.ndarray] = {}
        self._literals: dict[Literal, tuple[np.ndarray, np.ndarray]] = {}

    def column(self, classifier_id: str) -> np.ndarray:
        col = self._columns.get(classifier_id)
        if col is None:
            index = {
                code: i
                for i, code in enumerate(self._schema.classifier(classifier_id).codes)
            }
            col = np.fromiter(
                (
                    index.get(record.assignments[classifier_id], -2)
                    if classifier_id in record.assignments
                    else -1
                    for record in self._records
                ),
                dtype=np.int64,
                count=self.size,
            )
            self._columns[classifier_id] = col
        return col

    def observed(self, classifier_id: str) -> dict[str, int]:
        """Count of records per assigned category (zero counts omitted)."""
        codes = self._schema.classifier(classifier_id).codes
        col = self.column(classifier_id)
        counts = np.bincount(col[col >= 0], minlength=len(codes))
        return {code: int(n) for code, n in zip(codes, counts) if n > 0}

    def literal(self, lit: Literal) -> tuple[np.ndarray, np.ndarray]:
        """(true mask, evaluable mask) for one literal."""
        cached = self._literals.get(lit)
        if cached is None:
            col = self.column(lit.classifier_id)
            codes = self._schema.classifier(lit.classifier_id).codes
            idx = codes.index(lit.category_code) if lit.category_code in codes else -3
            evaluable = col != -1
            hit = col == idx
            true = hit if lit.positive else evaluable & ~hit
            cached = (true, evaluable)
            self._literals[lit] = cached
        return cached

    def premise(self, premise: Iterable[Literal]) -> tuple[np.ndarray, np.ndarray]:
        true = np.ones(self.size, dtype=bool)
        evaluable = np.ones(self.size, dtype=bool)
        for lit in premise:
            lit_true, lit_eval = self.literal(lit)
            true = true & lit_true
            evaluable = evaluable & lit_eval
        return true, evaluable

    def counts(
        self, premise: Iterable[Literal], conclusion: Literal
    ) -> tuple[int, int, int, int]:
        premise = tuple(premise)
        _check_disjoint(premise, conclusion)
        p_true, p_eval = self.premise(premise)
        c_true, c_eval = self.literal(conclusion)
        return table_counts(p_true, p_eval & c_eval, c_true)


def table_counts(
    p_true: np.ndarray, evaluable: np.ndarray, c_true: np.ndarray
) -> tuple[int, int, int, int]:
    """2x2 table over the evaluable rows."""
    covered = p_true & evaluable
    n_covered = int(np.count_nonzero(covered))
    a = int(np.count_nonzero(covered & c_true))
    n_concl = int(np.count_nonzero(evaluable & c_true))
    n = int(np.count_nonzero(evaluable))
    b = n_covered - a
    c = n_concl - a
    return a, b, c, n - a - b - c


class Snapshot:
    """Records of one store revision; safe to share across threads."""

    def __init__(
        self,
        schema: Schema,
        revision: int,
        records: Sequence[ObjectRecord],
        records_rev: int = 0,
    ) -> None:
        self.schema = schema
        self.revision = revision
        self.records_rev = records_rev
        self.records = tuple(records)
        self._views: dict[Any, EvidenceView] = {}
        self._lock = threading.Lock()

    def view(self, scope: Scope = None) -> EvidenceView:
        key = (scope,) if scope is None or isinstance(scope, str) else tuple(scope)
        with self._lock:
            view = self._views.get(key)
            if view is None:
                if scope is None:
                    records = self.records
                else:
                    types = {scope} if isinstance(scope, str) else set(scope)
                    records = tuple(r for r in self.records if r.type_id in types)
                view = EvidenceView(self.schema, records)
                self._views[key] = view
        return view

    def contingency(
        self,
        premise: Iterable[Literal],
        conclusion: Literal,
        scope: Scope = None,
    ) -> tuple[int, int, int, int]:
        return self.view(scope).counts(premise, conclusion)


class Store:
    """Object base, rule base, invariants, and the expectation/event ledgers."""

    def __init__(self, schema: Schema) -> None:
        self.schema = schema
        self._lock = threading.RLock()
        self._revision = 0
        self._records: dict[str, ObjectRecord] = {}
        self._by_type: dict[str, dict[str, None]] = {}
        self._children: dict[str, set[str]] = {}
        self._referencing: dict[tuple[str, str], set[str]] = {}
        self._clock: Optional[float] = None
        self._clock_marks: list[tuple[float, int]] = []
        self._clock_times: list[float] = []
        self._records_rev = 0
        self._snapshot: Optional[Snapshot] = None
        self._rules: dict[str, Rule] = {}
        self._invariants: dict[str, Invariant] = {}
        self._expectations: dict[str, "Expectation"] = {}
        self._open_by_action: dict[str, str] = {}
        self._events: list["ReinforcementEvent"] = []
        self._scanned: set[tuple[str, str]] = set()
        self._refreshes: list[dict] = []
        self._expectation_seq = 0
        self._event_seq = 0

    @classmethod
    def from_directory(cls, schema: Schema, directory: str) -> "Store":
        store = cls(schema)
        store.load(directory)
        return store

    @property
    def revision(self) -> int:
        return self._revision

    @property
    def clock(self) -> Optional[float]:
        """Latest time stamped on any record."""
        return self._clock

    def __len__(self) -> int:
        return len(self._records)

    def _bump(self) -> int:
        self._revision += 1
        return self._revision

    # Object base

    def validate(
        self,
        record: ObjectRecord,
        known: Optional[Mapping[str, ObjectRecord]] = None,
    ) -> None:
        """Raise SchemaViolation unless ``record`` fits its object type."""
        known = self._records if known is None else known
        if not record.id:
            raise SchemaViolation("Record id is empty")
        try:
            otype = self.schema.object_type(record.type_id)
        except UnknownObjectType:
            raise SchemaViolation(
                f"Record {record.id!r} has unknown type {record.type_id!r}",
                ident=record.type_id,
            ) from None
        if otype.onto_kind in INVARIANT_KINDS:
            raise SchemaViolation(
                f"Type {otype.id!r} is an invariant kind and cannot hold instances",
                ident=otype.id,
            )
        for classifier_id, code in record.assignments.items():
            if classifier_id not in otype.attribute_ids:
                raise SchemaViolation(
                    f"Attribute {classifier_id!r} is not declared for {otype.id!r}",
                    ident=classifier_id,
                )
            if code not in self.schema.classifier(classifier_id).codes:
                raise SchemaViolation(
                    f"{code!r} is not a category of {classifier_id!r}",
                    ident=f"{classifier_id}={code}",
                )
        for role, _ in record.relations:
            if role not in otype.roles:
                raise SchemaViolation(
                    f"Role {role!r} is not declared for {otype.id!r}", ident=role
                )
        has_time = record.time_start is not None or record.time_end is not None
        if has_time and not otype.timed:
            raise SchemaViolation(
                f"Type {otype.id!r} ({otype.onto_kind}) cannot carry time fields",
                ident=record.id,
            )
        if (
            record.time_start is not None
            and record.time_end is not None
            and record.time_end < record.time_start
        ):
            raise SchemaViolation(f"Record {record.id!r} ends before it starts")
        if record.parent_process is not None:
            parent = known.get(record.parent_process)
            if parent is None or record.parent_process == record.id:
                raise SchemaViolation(
                    f"Parent process {record.parent_process!r} does not exist",
                    ident=record.parent_process,
                )
            parent_type = self.schema.object_type(parent.type_id)
            if parent_type.onto_kind != ONTO_PROCESS:
                raise SchemaViolation(
                    f"Parent {parent.id!r} is not a process", ident=parent.id
                )
            if (
                otype.parent_process_type is not None
                and parent.type_id != otype.parent_process_type
            ):
                raise SchemaViolation(
                    f"Parent {parent.id!r} must be of type {otype.parent_process_type!r}",
                    ident=parent.id,
                )

    def insert(self, record: ObjectRecord) -> int:
        """Upsert a record; returns the new revision."""
        with self._lock:
            self.validate(record)
            rev = self._bump()
            self._put_record(
                replace(
                    record,
                    assignments=dict(record.assignments),
                    relations=tuple(tuple(r) for r in record.relations),
                    rev=rev,
                )
            )
            self._records_rev = rev
            return rev

    def _put_record(self, record: ObjectRecord) -> None:
        previous = self._records.get(record.id)
        if previous is not None:
            self._unindex(previous)
        self._records[record.id] = record
        self._by_type.setdefault(record.type_id, {})[record.id] = None
        if record.parent_process is not None:
            self._children.setdefault(record.parent_process, set()).add(record.id)
        for role, target in record.relations:
            self._referencing.setdefault((role, target), set()).add(record.id)
        self._advance_clock(record)

    def _unindex(self, record: ObjectRecord) -> None:
        self._by_type.get(record.type_id, {}).pop(record.id, None)
        if record.parent_process is not None:
            self._children.get(record.parent_process, set()).discard(record.id)
        for role, target in record.relations:
            self._referencing.get((role, target), set()).discard(record.id)

    def _advance_clock(self, record: ObjectRecord) -> None:
        latest = record.latest_time
        if latest is not None and (self._clock is None or latest > self._clock):
            self._clock = latest
            self._clock_marks.append((latest, record.rev))
            self._clock_times.append(latest)

    def revision_at_clock(self, moment: float) -> Optional[int]:
        """First revision at which the store clock reached ``moment``."""
        pos = bisect.bisect_left(self._clock_times, moment)
        if pos == len(self._clock_times):
            return None
        return self._clock_marks[pos][1]

    def find(self, record_id: str) -> Optional[ObjectRecord]:
        return self._records.get(record_id)

    def get(self, record_id: str) -> ObjectRecord:
        record = self._records.get(record_id)
        if record is None:
            raise UnknownObject(f"Unknown object {record_id!r}", ident=record_id)
        return record

    def records(self, type_id: Optional[str] = None) -> tuple[ObjectRecord, ...]:
        """Records sorted by id, optionally of one type."""
        with self._lock:
            if type_id is None:
                items = list(self._records.values())
            else:
                items = [self._records[i] for i in self._by_type.get(type_id, {})]
        return tuple(sorted(items, key=lambda r: r.id))

    def records_of_type(self, type_id: str) -> tuple[ObjectRecord, ...]:
        """Records of one type in insertion order."""
        with self._lock:
            return tuple(self._records[i] for i in self._by_type.get(type_id, {}))

    def referencing(self, role: str, target_id: str) -> tuple[ObjectRecord, ...]:
        with self._lock:
            ids = sorted(self._referencing.get((role, target_id), ()))
            return tuple(self._records[i] for i in ids)

    def members(self, process_id: str) -> tuple[ObjectRecord, ...]:
        """Records under a process, transitively, ordered by (time, id)."""
        with self._lock:
            found: dict[str, ObjectRecord] = {}
            pending = [process_id]
            while pending:
                for child_id in self._children.get(pending.pop(), ()):
                    if child_id not in found and child_id != process_id:
                        found[child_id] = self._records[child_id]
                        pending.append(child_id)
        return tuple(
            sorted(
                found.values(),
                key=lambda r: (r.time is None, r.time or 0.0, r.id),
            )
        )

    def in_process(self, record: ObjectRecord, process_id: str) -> bool:
        seen: set[str] = set()
        current = record.parent_process
        while current is not None and current not in seen:
            if current == process_id:
                return True
            seen.add(current)
            parent = self._records.get(current)
            current = parent.parent_process if parent is not None else None
        return False

    def snapshot(self) -> Snapshot:
        with self._lock:
            if self._snapshot is None or self._snapshot.records_rev != self._records_rev:
                self._snapshot = Snapshot(
                    self.schema,
                    self._revision,
                    sorted(self._records.values(), key=lambda r: r.id),
                    records_rev=self._records_rev,
                )
            return self._snapshot

    def contingency(
        self,
        premise: Iterable[Literal],
        conclusion: Literal,
        scope: Scope = None,
    ) -> tuple[int, int, int, int]:
        return self.snapshot().contingency(premise, conclusion, scope)

    # Rule base

    def rule(self, rule_id: str) -> Optional[Rule]:
        return self._rules.get(rule_id)

    def rules(self, statuses: Optional[Iterable[str]] = None) -> tuple[Rule, ...]:
        wanted = None if statuses is None else set(statuses)
        with self._lock:
            items = [
                rule
                for rule in self._rules.values()
                if wanted is None or rule.status in wanted
            ]
        return tuple(sorted(items, key=lambda r: r.id))

    def put_rules(self, rules: Iterable[Rule]) -> int:
        with self._lock:
            for rule in rules:
                self._rules[rule.id] = rule
            return self._bump()

    def put_rule(self, rule: Rule) -> int:
        return self.put_rules([rule])

    def adopt_rules(self, rules: Iterable[Rule]) -> int:
        """Store rules that did not come from mining and log them for replay."""
        rules = list(rules)
        with self._lock:
            start_rev = self._revision
            self.put_rules(rules)
            return self.log_refresh(
                {
                    "rev": start_rev,
                    "op": LEDGER_RULES,
                    "rules": [rule.to_dict() for rule in rules],
                }
            )

    def remove_rule(self, rule_id: str) -> bool:
        with self._lock:
            if self._rules.pop(rule_id, None) is None:
                return False
            self._bump()
            return True

    def merge_mined(self, mined: Iterable[Rule]) -> list[str]:
        """Store freshly mined rules, keeping reinforcement already earned."""
        merged: list[str] = []
        with self._lock:
            for rule in mined:
                old = self._rules.get(rule.id)
                if old is not None:
                    status = (
                        old.status
                        if old.status in (STATUS_CONFIRMED, STATUS_RETIRED)
                        else STATUS_MINED
                    )
                    rule = replace(
                        rule,
                        r_pos=old.r_pos,
                        r_neg=old.r_neg,
                        status=status,
                        provenance=old.provenance,
                    )
                self._rules[rule.id] = rule
                merged.append(rule.id)
            self._bump()
        return merged

    # Invariants

    def invariants(self) -> tuple[Invariant, ...]:
        return tuple(sorted(self._invariants.values(), key=lambda inv: inv.id))

    def invariant(self, invariant_id: str) -> Invariant:
        inv = self._invariants.get(invariant_id)
        if inv is None:
            raise UnknownInvariant(
                f"Unknown invariant {invariant_id!r}", ident=invariant_id
            )
        return inv

    def replace_invariants(self, invariants: Iterable[Invariant]) -> int:
        with self._lock:
            self._invariants = {inv.id: inv for inv in invariants}
            return self._bump()

    # Expectation and event ledgers

    def next_expectation_id(self) -> str:
        with self._lock:
            self._expectation_seq += 1
            return f"exp-{self._expectation_seq:06d}"

    def next_event_id(self) -> str:
        with self._lock:
            self._event_seq += 1
            return f"evt-{self._event_seq:06d}"

    def add_expectation(self, expectation: "Expectation") -> int:
        with self._lock:
            rev = self._bump()
            expectation.issued_rev = rev
            self._expectations[expectation.id] = expectation
            if expectation.status == EXP_OPEN:
                self._open_by_action[expectation.action_id] = expectation.id
            return rev

    def expectation(self, expectation_id: str) -> "Expectation":
        exp = self._expectations.get(expectation_id)
        if exp is None:
            raise UnknownExpectation(
                f"Unknown expectation {expectation_id!r}", ident=expectation_id
            )
        return exp

    def expectations(self) -> tuple["Expectation", ...]:
        return tuple(sorted(self._expectations.values(), key=lambda e: e.id))

    def open_expectation_for(self, action_id: str) -> Optional["Expectation"]:
        exp_id = self._open_by_action.get(action_id)
        if exp_id is None:
            return None
        exp = self._expectations[exp_id]
        return exp if exp.status == EXP_OPEN else None

    def close_expectation(
        self, expectation_id: str, status: str, event: "ReinforcementEvent"
    ) -> "ReinforcementEvent":
        """Close an open expectation and record its single event atomically."""
        with self._lock:
            exp = self.expectation(expectation_id)
            rev = self._revision + 1
            exp.update_status(status, rev)
            self._bump()
            if self._open_by_action.get(exp.action_id) == exp.id:
                del self._open_by_action[exp.action_id]
            return self._record_event(replace(event, rev=rev))

    def append_event(self, event: "ReinforcementEvent") -> "ReinforcementEvent":
        with self._lock:
            rev = self._bump()
            return self._record_event(replace(event, rev=rev))

    def _record_event(self, event: "ReinforcementEvent") -> "ReinforcementEvent":
        self._events.append(event)
        if event.function is not None:
            self._scanned.add((event.function, event.action_id))
        return event

    def events(self) -> tuple["ReinforcementEvent", ...]:
        return tuple(self._events)

    def events_for(self, expectation_id: str) -> tuple["ReinforcementEvent", ...]:
        return tuple(e for e in self._events if e.expectation_id == expectation_id)

    def is_scanned(self, function: str, action_id: str) -> bool:
        return (function, action_id) in self._scanned

    def mark_scanned(self, function: str, action_id: str) -> None:
        with self._lock:
            self._scanned.add((function, action_id))

    def log_refresh(self, entry: Mapping[str, Any]) -> int:
        with self._lock:
            self._refreshes.append(dict(entry))
            return self._bump()

    def refreshes(self) -> tuple[dict, ...]:
        return tuple(dict(entry) for entry in self._refreshes)

    # Persistence

    def _items(self, kind: str) -> list[dict]:
        if kind == "objects":
            return [record.to_dict() for record in self.records()]
        if kind == "rules":
            return [rule.to_dict() for rule in self.rules()]
        if kind == "invariants":
            return [inv.to_dict() for inv in self.invariants()]
        if kind == "expectations":
            return [exp.to_dict() for exp in self.expectations()]
        if kind == "events":
            return [event.to_dict() for event in sorted(self._events, key=lambda e: e.id)]
        if kind == "refreshes":
            return sorted(self.refreshes(), key=lambda e: e["rev"])
        raise CognicoreError(f"Unknown export kind {kind!r}", ident=kind)

    def export(self, kind: str, path: str) -> int:
        """Write one kind as canonical JSON Lines; returns the line count."""
        lines = [canonical_json(item) for item in self._items(kind)]
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as handle:
                handle.write("".join(line + "\n" for line in lines))
        except OSError as exc:
            raise IoError(f"Cannot write {path}: {exc}", ident=path) from exc
        _LOGGER.debug("Exported %d %s to %s", len(lines), kind, path)
        return len(lines)

    def save(self, directory: str) -> None:
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as exc:
            raise IoError(f"Cannot create {directory}: {exc}", ident=directory) from exc
        for kind, file_name in EXPORT_KINDS.items():
            self.export(kind, os.path.join(directory, file_name))

    def load(self, directory: str) -> None:
        for kind, file_name in EXPORT_KINDS.items():
            path = os.path.join(directory, file_name)
            if os.path.exists(path):
                self.import_file(path, kind)

    def import_file(
        self, path: str, kind: Optional[str] = None, ledger: bool = False
    ) -> int:
        """Merge a JSON Lines file; nothing is merged if any line is bad.

        With ``ledger`` set, imported rules are also logged for replay.
        """
        if kind is None:
            base = os.path.basename(path)
            kind = next((k for k, f in EXPORT_KINDS.items() if f == base), None)
            if kind is None:
                raise CognicoreError(
                    f"Cannot tell what {base!r} holds; pass the kind", ident=base
                )
        try:
            with open(path, "r", encoding="utf-8") as handle:
                lines = handle.read().splitlines()
        except OSError as exc:
            raise IoError(f"Cannot read {path}: {exc}", ident=path) from exc

        parsed: list[tuple[int, Any]] = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                parsed.append((number, self._parse_item(kind, json.loads(line))))
            except (ValueError, KeyError, TypeError, CognicoreError) as exc:
                raise FormatError(str(exc), number) from exc

        with self._lock:
            if kind == "objects":
                self._merge_records(parsed)
            elif kind == "rules" and ledger:
                self.adopt_rules(rule for _, rule in parsed)
            elif kind == "rules":
                self._rules.update((rule.id, rule) for _, rule in parsed)
            elif kind == "invariants":
                self._invariants.update((inv.id, inv) for _, inv in parsed)
            elif kind == "expectations":
                self._merge_expectations([exp for _, exp in parsed])
            elif kind == "events":
                self._merge_events([event for _, event in parsed])
            else:
                self._refreshes.extend(entry for _, entry in parsed)
                self._refreshes.sort(key=lambda e: e["rev"])
            self._settle_revision([item for _, item in parsed])
            if kind == "objects":
                self._records_rev = self._revision
        _LOGGER.info("Imported %d %s from %s", len(parsed), kind, path)
        return len(parsed)

    def _parse_item(self, kind: str, data: Any) -> Any:
        if not isinstance(data, dict):
            raise ValueError("line is not a JSON object")
        if kind == "objects":
            return ObjectRecord.from_dict(data)
        if kind == "rules":
            rule = Rule.from_dict(data)
            for lit in (*rule.premise, rule.conclusion):
                self.schema.check_literal(lit)
            return rule
        if kind == "invariants":
            return Invariant.from_dict(data)
        # Ledger types live with the acceptor service.
        from .tfs import Expectation, ReinforcementEvent

        if kind == "expectations":
            return Expectation.from_dict(data)
        if kind == "events":
            return ReinforcementEvent.from_dict(data)
        if kind == "refreshes":
            if not isinstance(data.get("rev"), int):
                raise ValueError("refresh entry needs an integer rev")
            if data.get("op", LEDGER_REFRESH) not in LEDGER_OPS:
                raise ValueError(f"unknown ledger op {data['op']!r}")
            return data
        raise CognicoreError(f"Unknown import kind {kind!r}", ident=kind)

    def _merge_records(self, parsed: list[tuple[int, ObjectRecord]]) -> None:
        incoming = {record.id: record for _, record in parsed}
        known = ChainMap(incoming, self._records)
        for number, record in parsed:
            try:
                self.validate(record, known)
            except SchemaViolation as exc:
                raise FormatError(str(exc), number) from exc
        for record in sorted(incoming.values(), key=lambda r: (r.rev, r.id)):
            self._put_record(record)
        self._rebuild_clock()

    def _merge_expectations(self, expectations: list["Expectation"]) -> None:
        for exp in expectations:
            self._expectations[exp.id] = exp
            if exp.status == EXP_OPEN:
                self._open_by_action[exp.action_id] = exp.id
        self._expectation_seq = max(
            [self._expectation_seq] + [_seq(e.id) for e in expectations]
        )

    def _merge_events(self, events: list["ReinforcementEvent"]) -> None:
        known = {event.id for event in self._events}
        for event in sorted(events, key=lambda e: (e.rev, e.id)):
            if event.id not in known:
                self._record_event(event)
        self._events.sort(key=lambda e: (e.rev, e.id))
        self._event_seq = max([self._event_seq] + [_seq(e.id) for e in events])

    def _rebuild_clock(self) -> None:
        self._clock = None
        self._clock_marks = []
        self._clock_times = []
        for record in sorted(self._records.values(), key=lambda r: (r.rev, r.id)):
            self._advance_clock(record)

    def _settle_revision(self, items: list[Any]) -> None:
        stamped = [0]
        for item in items:
            for attr in ("rev", "issued_rev", "closed_rev"):
                value = item.get(attr) if isinstance(item, dict) else getattr(item, attr, None)
                if isinstance(value, int):
                    stamped.append(value)
        self._revision = max(self._revision + 1, max(stamped))


def _seq(ident: str) -> int:
    try:
        return int(ident.rsplit("-", 1)[-1])
    except ValueError:
        return 0
