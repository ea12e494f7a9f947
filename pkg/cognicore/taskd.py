"""Task-approach service: success functions over processes.

A success function names a trigger (an action pattern), a goal (a record
pattern) and a window. Each trigger is judged achieved when a linked goal
record lands inside the window, missed once the store clock passes the
window or the process ends, and pending otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Iterable, Optional, Sequence

from .const import (
    EXP_ACHIEVED,
    EXP_EXPIRED,
    EXP_FAILED,
    ONTO_ACTION,
    OUTCOME_NEGATIVE,
    OUTCOME_POSITIVE,
    SOURCE_SUCCESS_FUNCTION,
    TRIGGER_ACHIEVED,
    TRIGGER_MISSED,
    TRIGGER_PENDING,
)
from .exceptions import TypeMismatch, UnknownProcess
from .ontology import SuccessFunctionDef
from .store import ObjectRecord, Store, eval_literal, eval_premise
from .tfs import ReinforcementEvent

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriggerOutcome:
    action_id: str
    status: str
    reward: Optional[float] = None
    goal_id: Optional[str] = None
    closed_rev: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "action_id": self.action_id,
            "status": self.status,
            "reward": self.reward,
            "goal_id": self.goal_id,
            "closed_rev": self.closed_rev,
        }


@dataclass(frozen=True)
class SuccessReport:
    process_id: str
    function: str
    outcomes: tuple[TriggerOutcome, ...]

    @property
    def aggregate(self) -> Optional[float]:
        """Mean reward of the judged triggers; None when there is no evidence."""
        rewards = [o.reward for o in self.outcomes if o.status != TRIGGER_PENDING]
        if not rewards:
            return None
        return sum(rewards) / len(rewards)

    def to_dict(self) -> dict:
        return {
            "process_id": self.process_id,
            "function": self.function,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "aggregate": self.aggregate,
        }


def _scope_process(
    record: ObjectRecord, fn: SuccessFunctionDef, store: Store
) -> Optional[ObjectRecord]:
    seen = set()
    current = record.parent_process
    while current is not None and current not in seen:
        seen.add(current)
        parent = store.find(current)
        if parent is None:
            return None
        if parent.type_id == fn.scope_type:
            return parent
        current = parent.parent_process
    return None


def _is_trigger(record: ObjectRecord, fn: SuccessFunctionDef, store: Store) -> bool:
    if fn.trigger_type is not None:
        if record.type_id != fn.trigger_type:
            return False
    elif store.schema.object_type(record.type_id).onto_kind != ONTO_ACTION:
        return False
    return record.time is not None and eval_premise(record, fn.trigger) is True


def triggers(
    fn: SuccessFunctionDef,
    store: Store,
    process_id: Optional[str] = None,
    unscanned_only: bool = False,
) -> list[ObjectRecord]:
    """Trigger actions of ``fn`` in its scope, ordered by (rev, id)."""
    if fn.trigger_type is not None:
        pool = store.records_of_type(fn.trigger_type)
    else:
        pool = store.records()
    found = []
    for record in pool:
        if unscanned_only and store.is_scanned(fn.name, record.id):
            continue
        if not _is_trigger(record, fn, store):
            continue
        if process_id is not None:
            if not store.in_process(record, process_id):
                continue
        elif _scope_process(record, fn, store) is None:
            continue
        found.append(record)
    found.sort(key=lambda r: (r.rev, r.id))
    return found


def _linked(
    trigger: ObjectRecord,
    fn: SuccessFunctionDef,
    process: ObjectRecord,
    store: Store,
) -> list[ObjectRecord]:
    """Records in the trigger's window sharing its process and link targets."""
    start = trigger.time
    deadline = start + fn.window
    if fn.link:
        first = fn.link[0]
        candidates: dict[str, ObjectRecord] = {}
        for target in trigger.related(first):
            for record in store.referencing(first, target):
                candidates[record.id] = record
        pool = [
            record
            for record in candidates.values()
            if all(
                set(record.related(role)) == set(trigger.related(role))
                for role in fn.link
            )
        ]
    else:
        pool = list(store.members(process.id))
    return [
        record
        for record in pool
        if record.id != trigger.id
        and (fn.goal_type is None or record.type_id == fn.goal_type)
        and record.time is not None
        and start < record.time <= deadline
        and store.in_process(record, process.id)
    ]


def judge(
    fn: SuccessFunctionDef,
    trigger: ObjectRecord,
    store: Store,
    process: Optional[ObjectRecord] = None,
) -> TriggerOutcome:
    process = process or _scope_process(trigger, fn, store)
    if process is None:
        return TriggerOutcome(trigger.id, TRIGGER_PENDING)
    deadline = trigger.time + fn.window
    missed_rev = store.revision_at_clock(deadline)
    if process.time_end is not None:
        missed_rev = process.rev if missed_rev is None else min(missed_rev, process.rev)

    goals = [
        record
        for record in _linked(trigger, fn, process, store)
        if eval_premise(record, fn.goal) is True
        and (missed_rev is None or record.rev <= missed_rev)
    ]
    if goals:
        first = min(goals, key=lambda r: (r.rev, r.id))
        return TriggerOutcome(
            trigger.id,
            TRIGGER_ACHIEVED,
            fn.achieved_reward,
            first.id,
            max(trigger.rev, first.rev),
        )
    if missed_rev is not None:
        return TriggerOutcome(
            trigger.id,
            TRIGGER_MISSED,
            fn.missed_reward,
            None,
            max(trigger.rev, missed_rev),
        )
    return TriggerOutcome(trigger.id, TRIGGER_PENDING)


def evaluate(fn: SuccessFunctionDef, process_id: str, store: Store) -> SuccessReport:
    """Judge every trigger of ``fn`` inside one process."""
    process = store.find(process_id)
    if process is None:
        raise UnknownProcess(f"Unknown process {process_id!r}", ident=process_id)
    if process.type_id != fn.scope_type:
        raise TypeMismatch(
            f"{process_id!r} is a {process.type_id!r}, "
            f"{fn.name!r} scores {fn.scope_type!r}",
            ident=process_id,
        )
    outcomes = tuple(
        judge(fn, trigger, store, process)
        for trigger in triggers(fn, store, process_id)
    )
    return SuccessReport(process_id, fn.name, outcomes)


def _polarity(reward: float) -> Optional[tuple[str, float]]:
    if reward > 0.5:
        return OUTCOME_POSITIVE, 2.0 * (reward - 0.5)
    if reward < 0.5:
        return OUTCOME_NEGATIVE, 2.0 * (0.5 - reward)
    return None


def _close_status(
    trigger: ObjectRecord,
    outcome: TriggerOutcome,
    fn: SuccessFunctionDef,
    store: Store,
    expected,
) -> str:
    if outcome.status == TRIGGER_ACHIEVED:
        return EXP_ACHIEVED
    process = _scope_process(trigger, fn, store)
    for record in _linked(trigger, fn, process, store):
        if eval_literal(record, expected) is False:
            return EXP_FAILED
    return EXP_EXPIRED


def scan(
    store: Store,
    since: int = 0,
    fns: Optional[Iterable[SuccessFunctionDef]] = None,
    until: Optional[int] = None,
) -> list[ReinforcementEvent]:
    """Emit one event per trigger that closed in (since, until]."""
    until = store.revision if until is None else until
    fns: Sequence[SuccessFunctionDef] = (
        store.schema.success_functions if fns is None else tuple(fns)
    )
    emitted: list[ReinforcementEvent] = []
    for fn in fns:
        for trigger in triggers(fn, store, unscanned_only=True):
            outcome = judge(fn, trigger, store)
            if outcome.status == TRIGGER_PENDING:
                continue
            if not since < outcome.closed_rev <= until:
                continue
            polarity = _polarity(outcome.reward)
            if polarity is None:
                _LOGGER.debug("%s on %s carries no signal", fn.name, trigger.id)
                store.mark_scanned(fn.name, trigger.id)
                continue
            sign, weight = polarity
            exp = store.open_expectation_for(trigger.id)
            event = ReinforcementEvent(
                id=store.next_event_id(),
                expectation_id=exp.id if exp is not None else None,
                outcome=sign,
                weight=weight,
                source=SOURCE_SUCCESS_FUNCTION,
                action_id=trigger.id,
                function=fn.name,
            )
            if exp is not None:
                status = _close_status(trigger, outcome, fn, store, exp.expected)
                event = store.close_expectation(exp.id, status, event)
            else:
                event = store.append_event(event)
            emitted.append(event)
    if emitted:
        _LOGGER.info("Scan (%s, %s] emitted %d events", since, until, len(emitted))
    return emitted
