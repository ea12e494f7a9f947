"""Logical-probabilistic inference over the rule base.

Rules are estimated with a Laplace-smoothed conditional frequency and gated
by a one-sided Fisher exact test, Bonferroni-corrected over the search levels
and the candidates of each level. ``mine`` grows conjunctive premises level
by level under a beam; a premise survives only if it is supported, significant
and strictly more probable than every premise one literal shorter.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
import logging
import math
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .config import MiningConfig
from .const import (
    ACTIVE_STATUSES,
    CORRECTION_NONE,
    LEDGER_MINE,
    LEDGER_REFRESH,
    P_VALUE_FLOOR,
    PROVENANCE_ABDUCTION,
    PROVENANCE_DATA,
    PROVENANCE_DEDUCTION,
    PROVENANCE_INDUCTION,
    RANKING_COMBINED,
    RANKING_PROBABILITY,
    RANKING_SIGNIFICANCE,
    STATUS_CONFIRMED,
    STATUS_HYPOTHESIS,
    STATUS_MINED,
    STATUS_RETIRED,
)
from .exceptions import (
    CognicoreError,
    ConclusionMismatch,
    ConfigError,
    DegenerateTarget,
    NonAtomicPremise,
    NotChainable,
    OverlappingClassifiers,
    PremiseMismatch,
    TargetAssigned,
)
from .ontology import Literal, sort_literals
from .store import EvidenceView, Rule, Snapshot, Store, eval_premise, table_counts

__all__ = [
    "MiningConfig",
    "Prediction",
    "abduce",
    "deduce",
    "estimate",
    "fisher_p",
    "hypothesize",
    "induce",
    "mine",
    "mine_all",
    "mine_into",
    "mine_laws",
    "predict",
    "probability",
    "refresh",
    "revise",
    "score",
]

_LOGGER = logging.getLogger(__name__)

Source = Union[Store, Snapshot]


def _snapshot(source: Source) -> Snapshot:
    return source.snapshot() if isinstance(source, Store) else source


def probability(rule: Rule) -> float:
    """Laplace estimate over data counts plus reinforcement pseudo-counts."""
    evidence = rule.a + rule.b + rule.r_pos + rule.r_neg
    return (rule.a + rule.r_pos + 1.0) / (evidence + 2.0)


def estimate(rule: Rule) -> float:
    """Provisional probability while a hypothesis has no evidence yet."""
    evidence = rule.a + rule.b + rule.r_pos + rule.r_neg
    if evidence == 0 and rule.provisional is not None:
        return rule.provisional
    return probability(rule)


def significance(p_value: float) -> float:
    return -math.log10(max(p_value, P_VALUE_FLOOR))


def score(prob: float, p_value: float, ranking: str = RANKING_PROBABILITY) -> float:
    if ranking == RANKING_PROBABILITY:
        return prob
    if ranking == RANKING_SIGNIFICANCE:
        return significance(p_value)
    if ranking == RANKING_COMBINED:
        return prob * (1.0 - p_value)
    raise ConfigError(f"Unknown ranking {ranking!r}", ident=ranking)


def rule_score(rule: Rule, ranking: str = RANKING_PROBABILITY) -> float:
    return score(probability(rule), rule.p_value, ranking)


_LOG_FACTORIALS: list[float] = [0.0]


def _log_factorial(n: int) -> float:
    if n >= len(_LOG_FACTORIALS):
        grown = np.arange(len(_LOG_FACTORIALS), 2 * n + 2, dtype=float)
        _LOG_FACTORIALS.extend(gammaln(grown + 1.0).tolist())
    return _LOG_FACTORIALS[n]


def _log_hypergeom(x: int, row: int, col: int, total: int) -> float:
    """log P(A = x) for the 2x2 table with margins row, col and total."""
    lf = _log_factorial
    return (
        lf(row) + lf(total - row) + lf(col) + lf(total - col) - lf(total)
        - lf(x) - lf(row - x) - lf(col - x) - lf(total - row - col + x)
    )


def _tail_ratio(start: int, stop: int, row: int, col: int, total: int) -> float:
    """Sum of P(A = x) / P(A = start) for x from start to stop inclusive."""
    rest = total - row - col
    acc = term = 1.0
    x = start
    if stop > start:
        while x < stop:
            term *= (row - x) * (col - x) / ((x + 1) * (rest + x + 1))
            acc += term
            x += 1
    else:
        while x > stop:
            term *= x * (rest + x) / ((row - x + 1) * (col - x + 1))
            acc += term
            x -= 1
    return acc


@lru_cache(maxsize=1 << 16)
def fisher_p(a: int, b: int, c: int, d: int) -> float:
    """One-sided Fisher exact p-value, P(A >= a) with the margins fixed."""
    if min(a, b, c, d) < 0:
        raise ValueError("Contingency counts must be non-negative")
    a, b, c, d = int(a), int(b), int(c), int(d)
    total = a + b + c + d
    row = a + b
    col = a + c
    low = max(0, row + col - total)
    high = min(row, col)
    if a <= low:
        return 1.0
    mode = (row + 1) * (col + 1) // (total + 2)
    # sum away from the mode so every relative term stays at or below 1
    if a >= mode:
        upper = math.exp(_log_hypergeom(a, row, col, total))
        return min(1.0, upper * _tail_ratio(a, high, row, col, total))
    lower = math.exp(_log_hypergeom(a - 1, row, col, total))
    return min(1.0, max(0.0, 1.0 - lower * _tail_ratio(a - 1, low, row, col, total)))


def revise(rule: Rule, source: Source, cfg: Optional[MiningConfig] = None) -> Rule:
    """Recount a rule against the store; hypotheses may be confirmed or retired."""
    cfg = cfg or MiningConfig()
    a, b, c, d = _snapshot(source).contingency(rule.premise, rule.conclusion)
    revised = replace(rule, a=a, b=b, c=c, d=d, p_value=fisher_p(a, b, c, d))
    if revised.status == STATUS_HYPOTHESIS:
        if revised.p_value <= cfg.alpha and a >= cfg.min_support_a:
            revised = replace(revised, status=STATUS_CONFIRMED)
        elif probability(revised) <= 0.5 and a + b >= cfg.min_support_a:
            revised = replace(revised, status=STATUS_RETIRED)
    return revised


def refuted(rule: Rule, cfg: MiningConfig) -> bool:
    """Reinforced probability no better than chance with enough evidence."""
    return (
        probability(rule) <= 0.5
        and rule.a + rule.r_pos + rule.r_neg >= cfg.min_support_a
    )


class _Node:
    __slots__ = ("premise", "true", "evaluable", "counts", "prob", "p_value", "score")

    def __init__(
        self,
        premise: tuple[Literal, ...],
        true: np.ndarray,
        evaluable: np.ndarray,
        counts: tuple[int, int, int, int],
        ranking: str,
    ) -> None:
        self.premise = premise
        self.true = true
        self.evaluable = evaluable
        self.counts = counts
        a, b = counts[0], counts[1]
        self.prob = (a + 1.0) / (a + b + 2.0)
        self.p_value = fisher_p(*counts)
        self.score = score(self.prob, self.p_value, ranking)

    @property
    def key(self) -> str:
        return "&".join(lit.key for lit in self.premise)


class _LawSearch:
    """Beam search for one conclusion over one evidence view."""

    def __init__(
        self,
        view: EvidenceView,
        conclusion: Literal,
        universe: Sequence[Literal],
        cfg: MiningConfig,
    ) -> None:
        self.view = view
        self.conclusion = conclusion
        self.universe = universe
        self.cfg = cfg
        self.c_true, self.c_eval = view.literal(conclusion)
        self._nodes: dict[tuple[Literal, ...], _Node] = {}

    def node(
        self, premise: tuple[Literal, ...], parent: Optional[_Node] = None
    ) -> _Node:
        found = self._nodes.get(premise)
        if found is not None:
            return found
        if parent is not None:
            added = [lit for lit in premise if lit not in parent.premise]
            true, evaluable = parent.true, parent.evaluable
            for lit in added:
                lit_true, lit_eval = self.view.literal(lit)
                true = true & lit_true
                evaluable = evaluable & lit_eval
        else:
            true, evaluable = self.view.premise(premise)
        counts = table_counts(true, evaluable & self.c_eval, self.c_true)
        found = _Node(premise, true, evaluable, counts, self.cfg.ranking)
        self._nodes[premise] = found
        return found

    def _level_alpha(self, tested: int) -> float:
        """Alpha spread evenly over the levels and the candidates of one level."""
        if self.cfg.correction == CORRECTION_NONE or tested == 0:
            return self.cfg.alpha
        return self.cfg.alpha / (self.cfg.max_premise_len * tested)

    def _passes(self, child: _Node, alpha: float) -> bool:
        if child.p_value > alpha:
            return False
        for lit in child.premise:
            general = self.node(tuple(x for x in child.premise if x != lit))
            if child.prob <= general.prob:
                return False
            lit_true, _ = self.view.literal(lit)
            rows = general.true & child.evaluable & self.c_eval
            if fisher_p(*table_counts(lit_true, rows, self.c_true)) > alpha:
                return False
        return True

    def run(self) -> dict[tuple[Literal, ...], _Node]:
        kept: dict[tuple[Literal, ...], _Node] = {}
        frontier = [self.node(())]
        for _ in range(self.cfg.max_premise_len):
            children: dict[tuple[Literal, ...], _Node] = {}
            for parent in frontier:
                used = {lit.classifier_id for lit in parent.premise}
                for lit in self.universe:
                    if lit.classifier_id in used:
                        continue
                    premise = sort_literals(parent.premise + (lit,))
                    if premise not in children:
                        children[premise] = self.node(premise, parent)
            supported = [
                child
                for child in children.values()
                if child.counts[0] >= self.cfg.min_support_a
            ]
            alpha = self._level_alpha(len(supported))
            for child in supported:
                if self._passes(child, alpha):
                    kept[child.premise] = child
            supported.sort(key=lambda n: (-n.score, n.key))
            frontier = supported[: self.cfg.beam_width]
            if not frontier:
                break
        return kept

    def rules(self, maximal_only: bool) -> list[Rule]:
        kept = self.run()
        extended: set[tuple[Literal, ...]] = set()
        if maximal_only:
            for premise in kept:
                for lit in premise:
                    extended.add(tuple(x for x in premise if x != lit))
        return [
            Rule(
                premise=premise,
                conclusion=self.conclusion,
                a=node.counts[0],
                b=node.counts[1],
                c=node.counts[2],
                d=node.counts[3],
                p_value=node.p_value,
                status=STATUS_MINED,
                provenance=PROVENANCE_DATA,
            )
            for premise, node in kept.items()
            if premise not in extended
        ]


def _universe(
    view: EvidenceView, target: str, classifiers: Iterable[str]
) -> list[Literal]:
    literals: list[Literal] = []
    for classifier_id in classifiers:
        if classifier_id == target:
            continue
        observed = sorted(view.observed(classifier_id))
        literals.extend(Literal(classifier_id, code) for code in observed)
        if len(observed) >= 3:
            literals.extend(Literal(classifier_id, code).negate() for code in observed)
    return sorted(literals, key=lambda lit: lit.key)


def _mine(
    target: str,
    source: Source,
    cfg: MiningConfig,
    classifiers: Optional[Iterable[str]],
    jobs: int,
    maximal_only: bool,
    scope=None,
) -> list[Rule]:
    snapshot = _snapshot(source)
    schema = snapshot.schema
    schema.classifier(target)
    view = snapshot.view(scope)
    observed = sorted(view.observed(target))
    if len(observed) < 2:
        raise DegenerateTarget(
            f"Target {target!r} has {len(observed)} observed categories", ident=target
        )
    if classifiers is None:
        classifiers = [cdef.id for cdef in schema.classifiers]
    else:
        classifiers = list(classifiers)
        for classifier_id in classifiers:
            schema.classifier(classifier_id)
    universe = _universe(view, target, classifiers)
    conclusions = [Literal(target, code) for code in observed]

    def _task(conclusion: Literal) -> list[Rule]:
        return _LawSearch(view, conclusion, universe, cfg).rules(maximal_only)

    if jobs > 1 and len(conclusions) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            batches = list(executor.map(_task, conclusions))
    else:
        batches = [_task(conclusion) for conclusion in conclusions]
    rules = sorted((rule for batch in batches for rule in batch), key=lambda r: r.id)
    _LOGGER.debug(
        "Mined %d rules for %s over %d literals", len(rules), target, len(universe)
    )
    return rules


def mine(
    target: str,
    source: Source,
    cfg: Optional[MiningConfig] = None,
    classifiers: Optional[Iterable[str]] = None,
    jobs: int = 1,
    scope=None,
) -> list[Rule]:
    """Maximally specific probabilistic laws concluding a category of ``target``."""
    return _mine(target, source, cfg or MiningConfig(), classifiers, jobs, True, scope)


def mine_laws(
    target: str,
    source: Source,
    cfg: Optional[MiningConfig] = None,
    classifiers: Optional[Iterable[str]] = None,
    jobs: int = 1,
    scope=None,
) -> list[Rule]:
    """Every premise that passed the law test, not only the most specific."""
    return _mine(target, source, cfg or MiningConfig(), classifiers, jobs, False, scope)


def mine_all(
    source: Source,
    cfg: Optional[MiningConfig] = None,
    targets: Optional[Iterable[str]] = None,
    classifiers: Optional[Iterable[str]] = None,
    jobs: int = 1,
) -> list[Rule]:
    snapshot = _snapshot(source)
    if targets is None:
        targets = [cdef.id for cdef in snapshot.schema.classifiers]
    rules: dict[str, Rule] = {}
    for target in targets:
        try:
            found = mine(target, snapshot, cfg, classifiers, jobs)
        except DegenerateTarget as exc:
            _LOGGER.debug("Skipping target: %s", exc)
            continue
        rules.update((rule.id, rule) for rule in found)
    return [rules[key] for key in sorted(rules)]


def mine_into(
    store: Store,
    target: str,
    cfg: Optional[MiningConfig] = None,
    classifiers: Optional[Iterable[str]] = None,
    jobs: int = 1,
) -> list[Rule]:
    """Mine one target into the rule base and log the run for replay."""
    cfg = cfg or MiningConfig()
    classifiers = None if classifiers is None else list(classifiers)
    start_rev = store.revision
    rules = mine(target, store.snapshot(), cfg, classifiers, jobs)
    store.merge_mined(rules)
    store.log_refresh(
        {
            "rev": start_rev,
            "op": LEDGER_MINE,
            "target": target,
            "classifiers": classifiers,
            "mining": cfg.to_dict(),
        }
    )
    return rules


def refresh(
    store: Store,
    cfg: Optional[MiningConfig] = None,
    targets: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> dict:
    """Re-mine, merge into the rule base and revise every live rule."""
    cfg = cfg or MiningConfig()
    start_rev = store.revision
    snapshot = store.snapshot()
    mined = mine_all(snapshot, cfg, targets=targets, jobs=jobs)
    store.merge_mined(mined)

    changed: list[Rule] = []
    retired = 0
    for rule in store.rules():
        if rule.status == STATUS_RETIRED:
            continue
        revised = revise(rule, snapshot, cfg)
        if revised.status != STATUS_RETIRED and refuted(revised, cfg):
            revised = replace(revised, status=STATUS_RETIRED)
        if revised.status == STATUS_RETIRED:
            retired += 1
        if revised != rule:
            changed.append(revised)
    if changed:
        store.put_rules(changed)

    entry = {
        "rev": start_rev,
        "op": LEDGER_REFRESH,
        "targets": None if targets is None else sorted(targets),
        "mining": cfg.to_dict(),
    }
    store.log_refresh(entry)
    _LOGGER.info(
        "Refresh at rev %s: %d mined, %d revised, %d retired",
        start_rev,
        len(mined),
        len(changed),
        retired,
    )
    return {
        "rev": start_rev,
        "mined": len(mined),
        "revised": len(changed),
        "retired": retired,
    }


def _hypothesis(
    premise: Iterable[Literal], conclusion: Literal, provenance: str, provisional: float
) -> Rule:
    return Rule(
        premise=tuple(premise),
        conclusion=conclusion,
        status=STATUS_HYPOTHESIS,
        provenance=provenance,
        provisional=provisional,
    )


def deduce(r1: Rule, r2: Rule) -> Rule:
    """Chain r1 into r2: r1.premise plus the rest of r2.premise => r2.conclusion."""
    if r1.conclusion not in r2.premise:
        raise NotChainable(
            f"{r1.conclusion.key} is not in the premise of {r2.id}", ident=r2.id
        )
    premise = set(r1.premise) | (set(r2.premise) - {r1.conclusion})
    if any(lit.classifier_id == r2.conclusion.classifier_id for lit in premise):
        raise NotChainable(
            f"Chained premise mentions {r2.conclusion.classifier_id!r}", ident=r2.id
        )
    literals = sort_literals(premise)
    for i, lit in enumerate(literals):
        if any(lit.contradicts(other) for other in literals[i + 1 :]):
            raise NotChainable(f"Chained premise contradicts itself at {lit.key}")
    return _hypothesis(
        literals, r2.conclusion, PROVENANCE_DEDUCTION, estimate(r1) * estimate(r2)
    )


def induce(r1: Rule, r2: Rule) -> Rule:
    """Two effects of one cause: hypothesise r2.conclusion => r1.conclusion."""
    if set(r1.premise) != set(r2.premise):
        raise PremiseMismatch(f"{r1.id} and {r2.id} have different premises")
    if r1.conclusion.classifier_id == r2.conclusion.classifier_id:
        raise PremiseMismatch(
            f"{r1.id} and {r2.id} conclude on the same classifier",
            ident=r1.conclusion.classifier_id,
        )
    return _hypothesis(
        (r2.conclusion,),
        r1.conclusion,
        PROVENANCE_INDUCTION,
        min(estimate(r1), estimate(r2)),
    )


def abduce(r1: Rule, r2: Rule) -> Rule:
    """Two causes of one effect: hypothesise r2.premise => the single r1 cause."""
    if r1.conclusion != r2.conclusion:
        raise ConclusionMismatch(f"{r1.id} and {r2.id} conclude differently")
    if len(r1.premise) != 1:
        raise NonAtomicPremise(f"{r1.id} needs a single-literal premise", ident=r1.id)
    if set(r1.premise) == set(r2.premise):
        raise PremiseMismatch(f"{r1.id} and {r2.id} have the same premise")
    cause = r1.premise[0]
    if any(lit.classifier_id == cause.classifier_id for lit in r2.premise):
        raise OverlappingClassifiers(
            f"{cause.classifier_id!r} is already in the premise of {r2.id}",
            ident=cause.classifier_id,
        )
    return _hypothesis(
        r2.premise, cause, PROVENANCE_ABDUCTION, min(estimate(r1), estimate(r2))
    )


def hypothesize(rules: Iterable[Rule], symmetric: bool = False) -> list[Rule]:
    """Apply deduction, induction and abduction to every pair of live rules."""
    pool = sorted(
        (rule for rule in rules if rule.status in ACTIVE_STATUSES),
        key=lambda r: r.id,
    )
    known = {rule.id for rule in pool}
    found: dict[str, Rule] = {}

    def _add(make, r1: Rule, r2: Rule) -> None:
        try:
            rule = make(r1, r2)
        except (
            NotChainable,
            PremiseMismatch,
            ConclusionMismatch,
            NonAtomicPremise,
            OverlappingClassifiers,
        ):
            return
        if rule.id not in known and rule.id not in found:
            found[rule.id] = rule

    for r1 in pool:
        for r2 in pool:
            if r1 is r2:
                continue
            _add(deduce, r1, r2)
            if symmetric or r1.id < r2.id:
                _add(induce, r1, r2)
            _add(abduce, r1, r2)
    return [found[key] for key in sorted(found)]


@dataclass(frozen=True)
class Prediction:
    target: Literal
    probability: float
    p_value: float
    score: float
    supporting_rules: tuple[str, ...]
    evidence: tuple[Rule, ...] = field(default=(), repr=False, compare=False)

    def explain(self) -> list[str]:
        lines = []
        for rule in self.evidence:
            condition = " AND ".join(lit.key for lit in rule.premise) or "TRUE"
            lines.append(
                f"IF {condition} THEN {rule.conclusion.key} "
                f"(probability {probability(rule):.3f}, p-value {rule.p_value:.3g})"
            )
        return lines

    def to_dict(self) -> dict:
        return {
            "target": self.target.key,
            "probability": self.probability,
            "p_value": self.p_value,
            "score": self.score,
            "supporting_rules": list(self.supporting_rules),
        }


def predict(
    query: Mapping[str, str],
    target: str,
    store: Optional[Store],
    cfg: Optional[MiningConfig] = None,
    rules: Optional[Iterable[Rule]] = None,
) -> list[Prediction]:
    """Rank the categories of ``target`` by the live rules that fire on ``query``."""
    cfg = cfg or MiningConfig()
    if store is None and rules is None:
        raise CognicoreError("predict needs a store or a rule pool", ident=target)
    if store is not None:
        store.schema.classifier(target)
        for classifier_id, code in query.items():
            store.schema.check_literal(Literal(classifier_id, code))
    if target in query:
        raise TargetAssigned(f"Query already assigns {target!r}", ident=target)
    pool = store.rules(ACTIVE_STATUSES) if rules is None else rules

    by_code: dict[str, list[Rule]] = {}
    for rule in pool:
        if rule.status not in ACTIVE_STATUSES:
            continue
        conclusion = rule.conclusion
        if conclusion.classifier_id != target or not conclusion.positive:
            continue
        if eval_premise(query, rule.premise) is True:
            by_code.setdefault(conclusion.category_code, []).append(rule)

    predictions = []
    for code, applicable in by_code.items():
        applicable.sort(key=lambda r: (-rule_score(r, cfg.ranking), r.p_value, r.id))
        best = applicable[0]
        predictions.append(
            Prediction(
                target=Literal(target, code),
                probability=probability(best),
                p_value=best.p_value,
                score=rule_score(best, cfg.ranking),
                supporting_rules=tuple(rule.id for rule in applicable),
                evidence=tuple(applicable),
            )
        )
    predictions.sort(key=lambda p: (-p.score, p.target.category_code))
    return predictions
