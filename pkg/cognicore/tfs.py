"""Functional-systems service: expected results of actions and reinforcement.

When an action is issued on the strength of a prediction, an ``Expectation``
records what the rule base expects to happen. Later observations close it and
each closure becomes one ``ReinforcementEvent`` that moves the pseudo-counts
of the rules that supported the prediction.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import logging
from typing import Any, Iterable, Mapping, Optional

from .config import MiningConfig
from .const import (
    EXP_ACHIEVED,
    EXP_EXPIRED,
    EXP_FAILED,
    EXP_OPEN,
    EXP_TERMINAL,
    LEDGER_MINE,
    LEDGER_RULES,
    OUTCOME_NEGATIVE,
    OUTCOME_POSITIVE,
    SOURCE_ACCEPTOR,
    SOURCE_SUCCESS_FUNCTION,
    STATUS_RETIRED,
)
from .exceptions import (
    AlreadyClosed,
    InvalidDeadline,
    NoSupportingRules,
)
from .lpi import Prediction, mine_into, refresh, refuted
from .ontology import Literal, Schema, parse_literal
from .store import ObjectRecord, Rule, Store, eval_literal

_LOGGER = logging.getLogger(__name__)


@dataclass
class Expectation:
    """Expected image of an action's result, held open until matched."""

    id: str
    action_id: str
    expected: Literal
    probability_at_issue: float
    supporting_rules: tuple[str, ...]
    deadline: float
    status: str = EXP_OPEN
    issued_at: Optional[float] = None
    issued_rev: int = 0
    closed_rev: Optional[int] = None

    @property
    def closed(self) -> bool:
        return self.status in EXP_TERMINAL

    def update_status(self, status: str, rev: Optional[int] = None) -> None:
        if self.closed:
            raise AlreadyClosed(
                f"Expectation {self.id} is already {self.status}", ident=self.id
            )
        if status not in EXP_TERMINAL:
            raise ValueError(f"Cannot move an expectation to {status!r}")
        self.status = status
        self.closed_rev = rev
        _LOGGER.debug("Expectation %s -> %s at rev %s", self.id, status, rev)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "action_id": self.action_id,
            "expected": self.expected.key,
            "probability_at_issue": self.probability_at_issue,
            "supporting_rules": list(self.supporting_rules),
            "deadline": self.deadline,
            "status": self.status,
            "issued_at": self.issued_at,
            "issued_rev": self.issued_rev,
            "closed_rev": self.closed_rev,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Expectation":
        status = data.get("status", EXP_OPEN)
        if status != EXP_OPEN and status not in EXP_TERMINAL:
            raise ValueError(f"bad expectation status {status!r}")
        issued_at = data.get("issued_at")
        closed_rev = data.get("closed_rev")
        return cls(
            id=str(data["id"]),
            action_id=str(data["action_id"]),
            expected=parse_literal(data["expected"]),
            probability_at_issue=float(data["probability_at_issue"]),
            supporting_rules=tuple(str(r) for r in data.get("supporting_rules") or []),
            deadline=float(data["deadline"]),
            status=status,
            issued_at=None if issued_at is None else float(issued_at),
            issued_rev=int(data.get("issued_rev", 0)),
            closed_rev=None if closed_rev is None else int(closed_rev),
        )


@dataclass(frozen=True)
class ReinforcementEvent:
    id: str
    expectation_id: Optional[str]
    outcome: str
    weight: float = 1.0
    source: str = SOURCE_ACCEPTOR
    action_id: Optional[str] = None
    function: Optional[str] = None
    rev: int = 0

    def __post_init__(self) -> None:
        if self.outcome not in (OUTCOME_POSITIVE, OUTCOME_NEGATIVE):
            raise ValueError(f"bad outcome {self.outcome!r}")
        if not self.weight > 0 or self.weight == float("inf"):
            raise ValueError(f"weight must be finite and positive, got {self.weight}")

    @property
    def positive(self) -> bool:
        return self.outcome == OUTCOME_POSITIVE

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "expectation_id": self.expectation_id,
            "outcome": self.outcome,
            "weight": self.weight,
            "source": self.source,
            "action_id": self.action_id,
            "function": self.function,
            "rev": self.rev,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReinforcementEvent":
        if data.get("source", SOURCE_ACCEPTOR) not in (
            SOURCE_ACCEPTOR,
            SOURCE_SUCCESS_FUNCTION,
        ):
            raise ValueError(f"bad event source {data.get('source')!r}")
        return cls(
            id=str(data["id"]),
            expectation_id=data.get("expectation_id"),
            outcome=data["outcome"],
            weight=float(data.get("weight", 1.0)),
            source=data.get("source", SOURCE_ACCEPTOR),
            action_id=data.get("action_id"),
            function=data.get("function"),
            rev=int(data.get("rev", 0)),
        )


def open_expectation(
    action_id: str,
    prediction: Prediction,
    deadline: float,
    store: Store,
    expected: Optional[Literal] = None,
) -> Expectation:
    """Register what ``prediction`` expects the action to bring about."""
    action = store.get(action_id)
    if not prediction.supporting_rules:
        raise NoSupportingRules(
            f"Prediction {prediction.target.key} has no supporting rules",
            ident=prediction.target.key,
        )
    issued_at = action.time
    if issued_at is None or deadline <= issued_at:
        raise InvalidDeadline(
            f"Deadline {deadline} is not after action time {issued_at}",
            ident=action_id,
        )
    exp = Expectation(
        id=store.next_expectation_id(),
        action_id=action_id,
        expected=expected or prediction.target,
        probability_at_issue=prediction.probability,
        supporting_rules=tuple(prediction.supporting_rules),
        deadline=float(deadline),
        issued_at=issued_at,
    )
    store.add_expectation(exp)
    _LOGGER.debug("Opened %s for %s expecting %s", exp.id, action_id, exp.expected)
    return exp


def in_context(exp: Expectation, observed: ObjectRecord, store: Store) -> bool:
    """Observed record is in the action's process and inside its window."""
    action = store.get(exp.action_id)
    if action.parent_process is not None and not store.in_process(
        observed, action.parent_process
    ):
        return False
    moment = observed.time
    start = action.time if action.time is not None else exp.issued_at
    return moment is not None and start is not None and start < moment <= exp.deadline


def _event_for(
    store: Store, exp: Expectation, outcome: str, source: str = SOURCE_ACCEPTOR
) -> ReinforcementEvent:
    return ReinforcementEvent(
        id=store.next_event_id(),
        expectation_id=exp.id,
        outcome=outcome,
        source=source,
        action_id=exp.action_id,
    )


def match_outcome(
    exp: Expectation,
    observed: Optional[ObjectRecord],
    store: Store,
    now: Optional[float] = None,
) -> tuple[Expectation, Optional[ReinforcementEvent]]:
    """Close ``exp`` against an observation, or expire it once ``now`` passes."""
    if exp.closed:
        raise AlreadyClosed(f"Expectation {exp.id} is already {exp.status}", ident=exp.id)
    verdict = None
    if observed is not None and in_context(exp, observed, store):
        verdict = eval_literal(observed, exp.expected)
    if verdict is True:
        status, outcome = EXP_ACHIEVED, OUTCOME_POSITIVE
    elif verdict is False:
        status, outcome = EXP_FAILED, OUTCOME_NEGATIVE
    elif now is not None and now >= exp.deadline:
        status, outcome = EXP_EXPIRED, OUTCOME_NEGATIVE
    else:
        return exp, None
    event = store.close_expectation(exp.id, status, _event_for(store, exp, outcome))
    _LOGGER.info("Expectation %s %s", exp.id, status)
    return store.expectation(exp.id), event


def expire_due(store: Store, now: float) -> list[ReinforcementEvent]:
    events = []
    for exp in store.expectations():
        if exp.status == EXP_OPEN and now >= exp.deadline:
            _, event = match_outcome(exp, None, store, now=now)
            events.append(event)
    return events


def reinforce(
    event: ReinforcementEvent, store: Store, cfg: Optional[MiningConfig] = None
) -> list[str]:
    """Move the pseudo-counts of the rules behind the event's expectation."""
    cfg = cfg or MiningConfig()
    if event.expectation_id is None:
        return []
    exp = store.expectation(event.expectation_id)
    updated = []
    changed = []
    for rule_id in exp.supporting_rules:
        rule = store.rule(rule_id)
        if rule is None:
            _LOGGER.warning("Skipping unknown rule %s in %s", rule_id, exp.id)
            continue
        if rule.status == STATUS_RETIRED:
            continue
        if event.positive:
            rule = replace(rule, r_pos=rule.r_pos + event.weight)
        else:
            rule = replace(rule, r_neg=rule.r_neg + event.weight)
        if refuted(rule, cfg):
            rule = replace(rule, status=STATUS_RETIRED)
            _LOGGER.info("Retired %s after reinforcement", rule.id)
        changed.append(rule)
        updated.append(rule.id)
    if changed:
        store.put_rules(changed)
    return updated


def _replay_order(source: Store) -> list[tuple[int, int, str, Any]]:
    items: list[tuple[int, int, str, Any]] = []
    items.extend((r.rev, 0, r.id, r) for r in source.records())
    items.extend((e.issued_rev, 1, e.id, e) for e in source.expectations())
    items.extend((e.rev, 2, e.id, e) for e in source.events())
    items.extend((entry["rev"], 3, "", entry) for entry in source.refreshes())
    items.sort(key=lambda item: item[:3])
    return items


def _replay_ledger(entry: Mapping[str, Any], store: Store) -> None:
    op = entry.get("op")
    if op == LEDGER_RULES:
        store.adopt_rules(Rule.from_dict(data) for data in entry["rules"])
        return
    cfg = MiningConfig.from_dict(entry.get("mining") or {})
    if op == LEDGER_MINE:
        mine_into(store, entry["target"], cfg, entry.get("classifiers"))
    else:
        refresh(store, cfg, targets=entry.get("targets"))


def replay(
    schema: Schema, source: Store, mining_cfg: Optional[MiningConfig] = None
) -> Store:
    """Rebuild a store from another store's records and ledgers in order.

    Refreshes and single-target mining runs repeat at the recorded points with
    their recorded settings. Adopted rules go back verbatim and events are
    reinforced as they were.
    """
    mining_cfg = mining_cfg or MiningConfig()
    target = Store(schema)
    for _, kind, _, item in _replay_order(source):
        if kind == 0:
            target.insert(replace(item, rev=0))
        elif kind == 1:
            copy = Expectation.from_dict(item.to_dict())
            target.add_expectation(copy)
        elif kind == 2:
            target.append_event(item)
            reinforce(item, target, mining_cfg)
        else:
            _replay_ledger(item, target)
    _LOGGER.info("Replayed %d records into a fresh store", len(target))
    return target


def reinforce_all(
    events: Iterable[ReinforcementEvent],
    store: Store,
    cfg: Optional[MiningConfig] = None,
) -> list[str]:
    updated: list[str] = []
    for event in events:
        updated.extend(reinforce(event, store, cfg))
    return updated
