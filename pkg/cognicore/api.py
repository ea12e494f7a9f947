"""Cognicore API client: one knowledge base on disk, one call per command.

Every call loads the store directory, runs one engine operation, saves what
changed and returns a result dict built by ``_ok``. Engine errors propagate
as ``CognicoreError`` and are turned into ``_err`` dicts by the CLI.
"""
from __future__ import annotations

import logging
import os
from typing import Any, Iterable, Mapping, Optional, Sequence

from .config import ContextConfig, LoopConfig, MiningConfig, RecommendConfig, SimEnvConfig
from .const import DEFAULT_TOP_K, EXP_OPEN, EXPORT_KINDS
from .decision import recommend
from .exceptions import CognicoreError, EmptyInput, IoError
from .ingest import ingest
from .lpi import hypothesize, mine_into, predict, refresh, revise
from .ontology import Literal, Schema, load_schema, parse_literal
from .pfc import assign, cluster, contextualize, describe, hierarchy
from .simulator import simulate_crm, simulate_pm
from .store import Store
from .taskd import evaluate, scan
from .tfs import expire_due, match_outcome, open_expectation, reinforce, reinforce_all, replay

_LOGGER: logging.Logger = logging.getLogger(__package__)


def _ok(message: str, **extra: Any) -> dict:
    return {"status": "success", "message": message, **extra}


def _err(message: str, **extra: Any) -> dict:
    return {"status": "error", "message": message, **extra}


def parse_query(items: Iterable[str]) -> dict[str, str]:
    """``classifier=code`` strings into an assignment mapping."""
    query: dict[str, str] = {}
    for item in items:
        lit = parse_literal(item)
        if not lit.positive:
            raise CognicoreError(f"Query literals must be positive: {item!r}", ident=item)
        query[lit.classifier_id] = lit.category_code
    return query


class KnowledgeBase:
    """A schema plus the store directory it governs."""

    def __init__(
        self,
        schema_path: str,
        store_dir: str,
        mining: Optional[MiningConfig] = None,
        jobs: int = 1,
    ) -> None:
        self._schema_path = schema_path
        self._store_dir = store_dir
        self.mining = mining or MiningConfig()
        self.jobs = jobs
        self._schema: Optional[Schema] = None
        self._store: Optional[Store] = None

    @property
    def schema(self) -> Schema:
        if self._schema is None:
            self._schema = load_schema(self._schema_path)
        return self._schema

    @property
    def store(self) -> Store:
        if self._store is None:
            self._store = self._load_store()
        return self._store

    def _load_store(self) -> Store:
        if os.path.isdir(self._store_dir):
            store = Store.from_directory(self.schema, self._store_dir)
            _LOGGER.debug(
                "Loaded store %s at revision %d", self._store_dir, store.revision
            )
            return store
        return Store(self.schema)

    def _save_store(self) -> None:
        self.store.save(self._store_dir)
        _LOGGER.debug("Saved store %s at revision %d", self._store_dir, self.store.revision)

    # Schema and ingestion

    def check_schema(self) -> dict:
        schema = self.schema
        return _ok(
            "Schema is valid",
            classifiers=len(schema.classifiers),
            object_types=len(schema.object_types),
            success_functions=len(schema.success_functions),
        )

    def ingest(self, csv_path: str, type_id: str, id_prefix: Optional[str] = None) -> dict:
        result = ingest(csv_path, self.store, type_id, id_prefix)
        self._save_store()
        return _ok(f"Ingested {result.count} {type_id} records", **result.to_dict())

    # Rule base

    def mine(self, target: str, classifiers: Optional[Sequence[str]] = None) -> dict:
        rules = mine_into(self.store, target, self.mining, classifiers, self.jobs)
        self._save_store()
        return _ok(
            f"Mined {len(rules)} laws for {target}",
            rules=[self.store.rule(rule.id).to_dict() for rule in rules],
        )

    def refresh(self, targets: Optional[Sequence[str]] = None) -> dict:
        summary = refresh(self.store, self.mining, targets=targets, jobs=self.jobs)
        self._save_store()
        return _ok("Rule base refreshed", **summary)

    def hypothesize(self, symmetric: bool = False, revise_now: bool = False) -> dict:
        store = self.store
        found = hypothesize(store.rules(), symmetric)
        if revise_now:
            snapshot = store.snapshot()
            found = [revise(rule, snapshot, self.mining) for rule in found]
        fresh = [rule for rule in found if store.rule(rule.id) is None]
        if fresh:
            store.adopt_rules(fresh)
            self._save_store()
        return _ok(
            f"Generated {len(found)} hypotheses ({len(fresh)} new)",
            rules=[rule.to_dict() for rule in found],
        )

    def predict(
        self,
        query: Mapping[str, str],
        target: str,
        use_invariants: bool = False,
        explain: bool = False,
    ) -> dict:
        extra: dict[str, Any] = {}
        if use_invariants:
            nearest = assign(query, self.store.invariants())
            if nearest is not None:
                query = {
                    key: value
                    for key, value in contextualize(query, nearest).items()
                    if key != target
                }
                extra["invariant"] = nearest.id
                extra["query"] = dict(sorted(query.items()))
        predictions = predict(query, target, self.store, self.mining)
        items = []
        for prediction in predictions:
            item = prediction.to_dict()
            if explain:
                item["explanation"] = prediction.explain()
            items.append(item)
        return _ok(f"{len(items)} predictions for {target}", predictions=items, **extra)

    def recommend(
        self,
        query: Mapping[str, str],
        target: str,
        cfg: Optional[RecommendConfig] = None,
        user: Optional[str] = None,
    ) -> dict:
        decision = recommend(query, target, self.store, cfg, self.mining, user)
        return _ok(f"Decision: {decision.kind}", **decision.to_dict())

    # Invariants

    def cluster(self, cfg: Optional[ContextConfig] = None) -> dict:
        invariants = cluster(self.store, cfg, self.jobs)
        self._save_store()
        links = hierarchy(invariants)
        return _ok(
            f"Found {len(invariants)} invariants",
            invariants=[
                {
                    "id": inv.id,
                    "label": inv.label,
                    "size": len(inv.extent),
                    "parents": links[inv.id]["parents"],
                }
                for inv in invariants
            ],
        )

    def describe(self, invariant_id: str, top_k: int = DEFAULT_TOP_K) -> str:
        return describe(invariant_id, self.store, top_k)

    # Expectations and reinforcement

    def expect(
        self,
        action_id: str,
        target: str,
        deadline: float,
        expected: Optional[str] = None,
    ) -> dict:
        store = self.store
        action = store.get(action_id)
        query = {
            key: value for key, value in action.assignments.items() if key != target
        }
        predictions = predict(query, target, store, self.mining)
        if expected is not None:
            wanted = parse_literal(expected)
            predictions = [p for p in predictions if p.target == wanted]
        if not predictions:
            raise EmptyInput(f"No prediction for {target} on {action_id}", ident=action_id)
        exp = open_expectation(action_id, predictions[0], deadline, store)
        self._save_store()
        return _ok(f"Opened {exp.id}", **exp.to_dict())

    def feedback(
        self,
        expectation_id: str,
        observed_id: Optional[str] = None,
        now: Optional[float] = None,
    ) -> dict:
        store = self.store
        exp = store.expectation(expectation_id)
        observed = store.get(observed_id) if observed_id is not None else None
        exp, event = match_outcome(exp, observed, store, now)
        updated = reinforce(event, store, self.mining) if event is not None else []
        self._save_store()
        return _ok(
            f"{exp.id} is {exp.status}",
            expectation=exp.to_dict(),
            event=None if event is None else event.to_dict(),
            updated_rules=updated,
        )

    def scan(self, since: int = 0, now: Optional[float] = None) -> dict:
        store = self.store
        events = scan(store, since=since)
        if now is not None:
            events.extend(expire_due(store, now))
        updated = reinforce_all(events, store, self.mining)
        self._save_store()
        return _ok(
            f"Scan emitted {len(events)} events",
            events=[event.to_dict() for event in events],
            updated_rules=sorted(set(updated)),
            open_expectations=sum(
                1 for exp in store.expectations() if exp.status == EXP_OPEN
            ),
        )

    def evaluate(self, function: str, process_id: str) -> dict:
        report = evaluate(self.schema.success_function(function), process_id, self.store)
        return _ok(f"{function} on {process_id}", **report.to_dict())

    # Files

    def export(self, kind: str, path: str) -> dict:
        if kind not in EXPORT_KINDS:
            raise CognicoreError(f"Unknown export kind {kind!r}", ident=kind)
        count = self.store.export(kind, path)
        return _ok(f"Exported {count} {kind}", kind=kind, count=count, path=path)

    def import_file(self, path: str, kind: Optional[str] = None) -> dict:
        count = self.store.import_file(path, kind, ledger=True)
        self._save_store()
        return _ok(f"Imported {count} items", count=count, revision=self.store.revision)

    def replay(self) -> dict:
        source = self.store
        rebuilt = replay(self.schema, source, self.mining)
        expected = [rule.to_dict() for rule in source.rules()]
        actual = [rule.to_dict() for rule in rebuilt.rules()]
        if expected != actual:
            differing = sorted(
                {r["id"] for r in expected} ^ {r["id"] for r in actual}
                | {
                    a["id"]
                    for a, b in zip(expected, actual)
                    if a != b
                }
            )
            raise CognicoreError(
                f"Replay diverges on {len(differing)} rules", ident=differing[:10]
            )
        return _ok("Replay reproduces the rule base", rules=len(actual))


def run_simulation(
    environment: str,
    env: SimEnvConfig,
    loop: LoopConfig,
    metrics_path: str,
    store_dir: Optional[str] = None,
) -> dict:
    """Run one seeded closed loop and write its metrics."""
    runner = simulate_crm if environment == "crm" else simulate_pm
    try:
        result = runner(env, loop, metrics_path=metrics_path, store_dir=store_dir)
    except OSError as exc:
        raise IoError(f"Simulation output failed: {exc}", ident=metrics_path) from exc
    return _ok(f"Simulated {result.summary['steps']} steps", **result.summary)
