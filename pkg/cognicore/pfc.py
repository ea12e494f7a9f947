"""Probabilistic formal concepts: rule-system fixed points and invariants."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from typing import Iterable, Mapping, Optional, Sequence, Union

from .config import ContextConfig
from .const import ACTIVE_STATUSES, DEFAULT_TOP_K
from .exceptions import (
    DegenerateTarget,
    EmptyContext,
    InconsistentStart,
    NonConvergence,
)
from .lpi import mine_laws, probability
from .ontology import Literal, sort_literals
from .store import IntentEntry, Invariant, ObjectRecord, Rule, Store, eval_literal

__all__ = [
    "ClosureState",
    "ContextConfig",
    "LiteralProfile",
    "assign",
    "characterize",
    "closure",
    "cluster",
    "contextualize",
    "describe",
    "hierarchy",
]

_LOGGER = logging.getLogger(__name__)


def _contradiction(literals: Iterable[Literal]) -> Optional[tuple[Literal, Literal]]:
    items = sort_literals(literals)
    for i, lit in enumerate(items):
        for other in items[i + 1 :]:
            if lit.contradicts(other):
                return lit, other
    return None


@dataclass(frozen=True)
class ClosureState:
    literals: frozenset[Literal]
    trace: tuple[str, ...] = ()

    @classmethod
    def from_assignments(
        cls,
        assignments: Mapping[str, str],
        classifiers: Optional[Iterable[str]] = None,
    ) -> "ClosureState":
        allowed = None if classifiers is None else set(classifiers)
        return cls(
            frozenset(
                Literal(cid, code)
                for cid, code in assignments.items()
                if allowed is None or cid in allowed
            )
        )

    @property
    def key(self) -> tuple[str, ...]:
        return tuple(lit.key for lit in sort_literals(self.literals))


def _usable(rules: Iterable[Rule], cfg: ContextConfig) -> list[Rule]:
    usable = [
        rule
        for rule in rules
        if rule.status in ACTIVE_STATUSES and probability(rule) >= cfg.apply_threshold
    ]
    usable.sort(key=lambda r: (-probability(r), r.p_value, r.id))
    return usable


def _step(state: set[Literal], usable: Sequence[Rule]) -> list[Rule]:
    """Rules that would commit a new literal, in commitment order."""
    applicable = [rule for rule in usable if state.issuperset(rule.premise)]
    fired = []
    for rule in applicable:
        lit = rule.conclusion
        if lit in state or any(lit.contradicts(other) for other in state):
            continue
        state.add(lit)
        fired.append(rule)
    return fired


def _closure(start: ClosureState, usable: Sequence[Rule], cfg: ContextConfig):
    clash = _contradiction(start.literals)
    if clash is not None:
        raise InconsistentStart(
            f"Start state holds {clash[0].key} and {clash[1].key}",
            ident=clash[0].classifier_id,
        )
    state = set(start.literals)
    trace = list(start.trace)
    for _ in range(cfg.max_iterations):
        fired = _step(state, usable)
        if not fired:
            return ClosureState(frozenset(state), tuple(trace))
        trace.extend(rule.id for rule in fired)
    last = ClosureState(frozenset(state), tuple(trace))
    if _step(set(state), usable):
        raise NonConvergence(
            f"Closure still changing after {cfg.max_iterations} iterations", last
        )
    return last


def closure(
    start: ClosureState, rules: Iterable[Rule], cfg: Optional[ContextConfig] = None
) -> ClosureState:
    """Apply confident rules until nothing new can be committed."""
    cfg = cfg or ContextConfig()
    return _closure(start, _usable(rules, cfg), cfg)


def _denoised(
    observed: frozenset[Literal], usable: Sequence[Rule]
) -> frozenset[Literal]:
    """Drop observed literals that applicable rules refute more strongly."""
    dropped = set()
    for lit in observed:
        others = observed - {lit}
        support = 0.0
        against = 0.0
        for rule in usable:
            if not others.issuperset(rule.premise):
                continue
            if rule.conclusion == lit:
                support = max(support, probability(rule))
            elif rule.conclusion.contradicts(lit):
                against = max(against, probability(rule))
        if against > support:
            dropped.add(lit)
    return observed - dropped


def _hamming(left: frozenset[Literal], right: frozenset[Literal]) -> int:
    """Number of classifiers on which two literal sets differ."""
    by_left: dict[str, set[Literal]] = {}
    by_right: dict[str, set[Literal]] = {}
    for lit in left:
        by_left.setdefault(lit.classifier_id, set()).add(lit)
    for lit in right:
        by_right.setdefault(lit.classifier_id, set()).add(lit)
    return sum(
        1
        for cid in set(by_left) | set(by_right)
        if by_left.get(cid) != by_right.get(cid)
    )


def _merge_groups(
    groups: dict[tuple[str, ...], list], limit: int
) -> dict[tuple[str, ...], list]:
    """Fold smaller groups into the first larger group within ``limit``."""
    merged = True
    while merged:
        merged = False
        ranked = sorted(groups, key=lambda k: (-len(groups[k]), k))
        for position in range(len(ranked) - 1, 0, -1):
            small_key = ranked[position]
            small = groups[small_key][0][1].literals
            for big_key in ranked[:position]:
                if big_key not in groups:
                    continue
                if _hamming(small, groups[big_key][0][1].literals) <= limit:
                    groups[big_key].extend(groups.pop(small_key))
                    merged = True
                    break
    return groups


def _absorb_small(
    groups: dict[tuple[str, ...], list],
    min_size: float,
    classifiers: Sequence[str],
) -> dict[tuple[str, ...], list]:
    """Move each object of a group below ``min_size`` to the nearest larger group.

    Distance is ``_hamming`` from the object's observed literals to the group's
    fixed point; ties go to the larger group, then to the smaller key.
    """
    anchors = sorted(
        (key for key, members in groups.items() if len(members) >= min_size),
        key=lambda k: (-len(groups[k]), k),
    )
    if not anchors:
        return groups
    out = {key: list(groups[key]) for key in anchors}
    fixed = {key: groups[key][0][1].literals for key in anchors}
    for key in sorted(k for k in groups if k not in out):
        for record, state in groups[key]:
            observed = ClosureState.from_assignments(
                record.assignments, classifiers
            ).literals
            nearest = min(
                anchors,
                key=lambda k: (_hamming(observed, fixed[k]), -len(groups[k]), k),
            )
            out[nearest].append((record, state))
    return out


def cluster(
    store: Store, cfg: Optional[ContextConfig] = None, jobs: int = 1
) -> list[Invariant]:
    """Group objects by the fixed point their observations converge to."""
    cfg = cfg or ContextConfig()
    snapshot = store.snapshot()
    schema = snapshot.schema
    classifiers = list(cfg.classifiers) or [cdef.id for cdef in schema.classifiers]
    for classifier_id in classifiers:
        schema.classifier(classifier_id)
    objects = [
        record
        for record in snapshot.records
        if any(cid in record.assignments for cid in classifiers)
    ]
    if not objects:
        raise EmptyContext("No object has an assignment among the context classifiers")

    rules: dict[str, Rule] = {}
    for target in classifiers:
        try:
            found = mine_laws(target, snapshot, cfg.mining, classifiers, jobs)
        except DegenerateTarget:
            continue
        rules.update((rule.id, rule) for rule in found)
    usable = _usable(rules.values(), cfg)

    def _fixed_point(record: ObjectRecord) -> ClosureState:
        observed = ClosureState.from_assignments(record.assignments, classifiers)
        start = ClosureState(_denoised(observed.literals, usable))
        return _closure(start, usable, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            states = list(executor.map(_fixed_point, objects))
    else:
        states = [_fixed_point(record) for record in objects]

    groups: dict[tuple[str, ...], list[tuple[ObjectRecord, ClosureState]]] = {}
    for record, state in zip(objects, states):
        groups.setdefault(state.key, []).append((record, state))
    if cfg.merge_hamming > 0:
        groups = _merge_groups(groups, cfg.merge_hamming)
    if cfg.min_extent_share > 0:
        groups = _absorb_small(
            groups, cfg.min_extent_share * len(objects), classifiers
        )

    ordered = sorted(groups.items(), key=lambda item: (-len(item[1]), item[0]))
    invariants = [
        _invariant(f"inv-{index:03d}", members, classifiers, cfg)
        for index, (_, members) in enumerate(ordered, start=1)
    ]
    population = _population(store, invariants)
    invariants = [
        _labelled(inv, population.get(inv.id, ())) for inv in invariants
    ]
    store.replace_invariants(invariants)
    _LOGGER.info(
        "Clustered %d objects into %d invariants using %d rules",
        len(objects),
        len(invariants),
        len(usable),
    )
    return invariants


def _invariant(
    ident: str,
    members: Sequence[tuple[ObjectRecord, ClosureState]],
    classifiers: Sequence[str],
    cfg: ContextConfig,
) -> Invariant:
    records = [record for record, _ in members]
    fixed = members[0][1]
    allowed = set(classifiers)
    candidates = set(fixed.literals)
    for record in records:
        candidates.update(
            Literal(cid, code)
            for cid, code in record.assignments.items()
            if cid in allowed
        )
    intent = []
    for lit in sort_literals(candidates):
        support = sum(1 for record in records if eval_literal(record, lit) is True)
        frequency = support / len(records)
        if lit in fixed.literals or frequency >= cfg.intent_min_frequency:
            intent.append(IntentEntry(lit, frequency, support))
    applied = sorted({rule_id for _, state in members for rule_id in state.trace})
    return Invariant(
        id=ident,
        intent=tuple(intent),
        extent=tuple(sorted(record.id for record in records)),
        closure=sort_literals(fixed.literals),
        rules=tuple(applied),
    )


def _population(
    store: Store, invariants: Iterable[Invariant]
) -> dict[str, tuple[ObjectRecord, ...]]:
    out = {}
    for inv in invariants:
        types = {store.get(object_id).type_id for object_id in inv.extent}
        out[inv.id] = tuple(r for r in store.records() if r.type_id in types)
    return out


@dataclass(frozen=True)
class LiteralProfile:
    literal: Literal
    frequency: float
    population_frequency: float
    lift: float


def _profiles(
    inv: Invariant, population: Sequence[ObjectRecord]
) -> list[LiteralProfile]:
    profiles = []
    for entry in inv.intent:
        hits = sum(1 for r in population if eval_literal(r, entry.literal) is True)
        base = hits / len(population) if population else 0.0
        lift = entry.frequency / base if base > 0 else 0.0
        profiles.append(LiteralProfile(entry.literal, entry.frequency, base, lift))
    profiles.sort(key=lambda p: (-p.lift, -p.frequency, p.literal.key))
    return profiles


def _labelled(inv: Invariant, population: Sequence[ObjectRecord]) -> Invariant:
    top = [p.literal.key for p in _profiles(inv, population)[:3] if p.lift > 1.0]
    return Invariant(
        id=inv.id,
        intent=inv.intent,
        extent=inv.extent,
        label=", ".join(top) or None,
        closure=inv.closure,
        rules=inv.rules,
    )


def characterize(
    inv: Union[Invariant, str], store: Store, top_k: int = DEFAULT_TOP_K
) -> list[LiteralProfile]:
    """Intent literals ranked by lift over the population of the same types."""
    if isinstance(inv, str):
        inv = store.invariant(inv)
    population = _population(store, [inv])[inv.id]
    return _profiles(inv, population)[:top_k]


def hierarchy(
    invariants: Sequence[Invariant], min_frequency: float = 0.5
) -> dict[str, dict[str, list[str]]]:
    """Subset ordering of intents: a parent's intent is inside its child's."""
    intents = {inv.id: inv.intent_literals(min_frequency) for inv in invariants}
    out = {inv.id: {"parents": [], "children": []} for inv in invariants}
    for parent, p_intent in intents.items():
        for child, c_intent in intents.items():
            if parent != child and p_intent and p_intent < c_intent:
                out[parent]["children"].append(child)
                out[child]["parents"].append(parent)
    for links in out.values():
        links["parents"].sort()
        links["children"].sort()
    return out


def describe(
    inv: Union[Invariant, str], store: Store, top_k: int = DEFAULT_TOP_K
) -> str:
    if isinstance(inv, str):
        inv = store.invariant(inv)
    lines = [f"Invariant {inv.id}" + (f" ({inv.label})" if inv.label else "")]
    lines.append(f"Extent: {len(inv.extent)} objects")
    profiles = characterize(inv, store, top_k)
    if profiles:
        lines.append(f"Characteristic literals (top {top_k} by lift):")
        for p in profiles:
            lines.append(
                f"  {p.literal.key}  frequency {p.frequency:.3f}  "
                f"population {p.population_frequency:.3f}  lift {p.lift:.3f}"
            )
    else:
        lines.append("No characteristic literals")
    links = hierarchy(store.invariants()).get(inv.id)
    if links is not None:
        if links["parents"]:
            lines.append("Parents: " + ", ".join(links["parents"]))
        if links["children"]:
            lines.append("Children: " + ", ".join(links["children"]))
    return "\n".join(lines) + "\n"


def assign(
    query: Mapping[str, str], invariants: Sequence[Invariant]
) -> Optional[Invariant]:
    """Nearest invariant to a partial assignment."""
    best = None
    best_score = None
    for inv in sorted(invariants, key=lambda i: i.id):
        total = 0.0
        for entry in inv.intent:
            value = eval_literal(query, entry.literal)
            if value is True:
                total += entry.frequency
            elif value is False:
                total -= entry.frequency
        if best_score is None or total > best_score:
            best, best_score = inv, total
    return best


def contextualize(
    query: Mapping[str, str], inv: Invariant, min_frequency: float = 0.9
) -> dict[str, str]:
    """Fill open classifiers with the invariant's near-certain literals."""
    extended = dict(query)
    for entry in inv.intent:
        lit = entry.literal
        if lit.positive and entry.frequency >= min_frequency:
            extended.setdefault(lit.classifier_id, lit.category_code)
    return extended
