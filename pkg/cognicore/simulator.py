"""Seeded closed-loop simulations of the recommend, act, observe, reinforce cycle.

An ``Environment`` hides a success matrix over (context, choice) pairs and
knows how to write its actions and results as records. ``ClosedLoop`` drives
the engine against it: warm-up exploration, periodic refreshes of the rule
base, recommendations with expectations, success-function scans and
reinforcement.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
import json
import logging
import os
from typing import Any, Optional

import numpy as np
import pandas as pd

from .config import LoopConfig, SimEnvConfig
from .const import DECISION_ABSTAIN, DECISION_AUTO, DECISION_MENU
from .decision import Option, recommend_action
from .exceptions import IoError
from .lpi import refresh
from .ontology import Literal, Schema, check_schema, parse_schema
from .store import ObjectRecord, Store
from .taskd import scan
from .tfs import open_expectation, reinforce

_LOGGER = logging.getLogger(__name__)

EXPLORE = "explore"
FALLBACK = "fallback"


class Environment(ABC):
    """Hidden world a closed loop acts in."""

    NAME: str = ""
    CONTEXT: str = ""
    CHOICE: str = ""
    OUTCOME: Literal = Literal("", "")
    SUCCESS_FUNCTION: str = ""

    def __init__(self, cfg: SimEnvConfig, window: float = 1.0) -> None:
        self.cfg = cfg
        self.window = window
        self.acceptance = np.asarray(cfg.acceptance, dtype=float)
        self.schema: Schema = check_schema(parse_schema(self.schema_dict()))

    @abstractmethod
    def schema_dict(self) -> dict:
        """Schema file contents for this environment."""

    @abstractmethod
    def setup(self, store: Store) -> None:
        """Insert the records that exist before the first step."""

    @abstractmethod
    def subject(
        self, step: int, rng: np.random.Generator, store: Store
    ) -> tuple[str, int, str]:
        """Draw (subject id, context index, process id) for one step."""

    @abstractmethod
    def context_weights(self) -> np.ndarray:
        """Probability of each context index."""

    @abstractmethod
    def action_record(
        self, step: int, time: float, subject_id: str, context: int, choice: int, process_id: str
    ) -> ObjectRecord:
        pass

    @abstractmethod
    def result_record(
        self,
        step: int,
        time: float,
        subject_id: str,
        context: int,
        choice: int,
        success: bool,
        process_id: str,
    ) -> ObjectRecord:
        pass

    def context_code(self, index: int) -> str:
        return self.schema.classifier(self.CONTEXT).codes[index]

    def choice_code(self, index: int) -> str:
        return self.schema.classifier(self.CHOICE).codes[index]

    def choice_index(self, code: str) -> int:
        return self.schema.classifier(self.CHOICE).codes.index(code)

    def oracle_rate(self) -> float:
        """Expected success of an omniscient policy."""
        return float(np.dot(self.context_weights(), self.acceptance.max(axis=1)))

    def sample(self, rng: np.random.Generator, context: int, choice: int) -> bool:
        return bool(rng.random() < self.acceptance[context, choice])


def _categories(prefix: str, count: int) -> list[dict]:
    return [{"code": f"{prefix}{i}"} for i in range(count)]


class CrmEnvironment(Environment):
    """Clients in segments receive product offers and may subscribe."""

    NAME = "crm"
    CONTEXT = "segment"
    CHOICE = "product"
    OUTCOME = Literal("subscribed", "yes")
    SUCCESS_FUNCTION = "subscription"
    CAMPAIGN = "campaign-1"

    def schema_dict(self) -> dict:
        slots = [["client", "client"], ["item", "item"]]
        return {
            "classifiers": [
                {"id": "segment", "name": "Segment", "domain": _categories("s", self.cfg.n_segments)},
                {"id": "product", "name": "Product", "domain": _categories("p", self.cfg.n_products)},
                {
                    "id": "subscribed",
                    "name": "Subscribed",
                    "kind": "boolean",
                    "domain": [{"code": "yes"}, {"code": "no"}],
                },
            ],
            "object_types": [
                {"id": "client", "onto_kind": "entity", "attribute_ids": ["segment"]},
                {"id": "item", "onto_kind": "entity", "attribute_ids": ["product"]},
                {"id": "campaign", "onto_kind": "process"},
                {
                    "id": "offer",
                    "onto_kind": "action",
                    "attribute_ids": ["segment", "product"],
                    "relation_slots": slots,
                    "parent_process_type": "campaign",
                },
                {
                    "id": "response",
                    "onto_kind": "coincidence",
                    "attribute_ids": ["segment", "product", "subscribed"],
                    "relation_slots": slots,
                    "parent_process_type": "campaign",
                },
            ],
            "success_functions": [
                {
                    "name": self.SUCCESS_FUNCTION,
                    "scope_type": "campaign",
                    "trigger_type": "offer",
                    "goal_type": "response",
                    "goal": ["subscribed=yes"],
                    "window": self.window,
                    "link": ["client", "item"],
                }
            ],
        }

    def setup(self, store: Store) -> None:
        for index in range(self.cfg.n_products):
            code = self.choice_code(index)
            store.insert(ObjectRecord(f"item-{code}", "item", {"product": code}))
        for index in range(self.cfg.n_clients):
            store.insert(
                ObjectRecord(
                    f"client-{index:05d}",
                    "client",
                    {"segment": self.context_code(index % self.cfg.n_segments)},
                )
            )
        store.insert(ObjectRecord(self.CAMPAIGN, "campaign", time_start=0.0))

    def subject(self, step, rng, store):
        index = int(rng.integers(self.cfg.n_clients))
        return f"client-{index:05d}", index % self.cfg.n_segments, self.CAMPAIGN

    def context_weights(self) -> np.ndarray:
        counts = np.bincount(
            np.arange(self.cfg.n_clients) % self.cfg.n_segments,
            minlength=self.cfg.n_segments,
        )
        return counts / counts.sum()

    def _relations(self, subject_id: str, choice: int) -> tuple[tuple[str, str], ...]:
        return (("client", subject_id), ("item", f"item-{self.choice_code(choice)}"))

    def action_record(self, step, time, subject_id, context, choice, process_id):
        return ObjectRecord(
            f"offer-{step:06d}",
            "offer",
            {"segment": self.context_code(context), "product": self.choice_code(choice)},
            relations=self._relations(subject_id, choice),
            time_start=time,
            parent_process=process_id,
        )

    def result_record(self, step, time, subject_id, context, choice, success, process_id):
        return ObjectRecord(
            f"response-{step:06d}",
            "response",
            {
                "segment": self.context_code(context),
                "product": self.choice_code(choice),
                "subscribed": "yes" if success else "no",
            },
            relations=self._relations(subject_id, choice),
            time_start=time,
            parent_process=process_id,
        )


class PmEnvironment(Environment):
    """Tasks of several kinds are assigned to positions and get done or fail.

    Segments are task kinds, products are positions and clients are projects.
    """

    NAME = "pm"
    CONTEXT = "task_kind"
    CHOICE = "position"
    OUTCOME = Literal("status", "done")
    SUCCESS_FUNCTION = "task_done"

    def schema_dict(self) -> dict:
        return {
            "classifiers": [
                {"id": "task_kind", "name": "Task kind", "domain": _categories("k", self.cfg.n_segments)},
                {"id": "position", "name": "Position", "domain": _categories("e", self.cfg.n_products)},
                {
                    "id": "status",
                    "name": "Status",
                    "kind": "boolean",
                    "domain": [{"code": "done", "label": "Done"}, {"code": "failed", "label": "Failed"}],
                },
            ],
            "object_types": [
                {"id": "project", "onto_kind": "process"},
                {"id": "task", "onto_kind": "entity", "attribute_ids": ["task_kind"]},
                {
                    "id": "assignment",
                    "onto_kind": "action",
                    "attribute_ids": ["task_kind", "position"],
                    "relation_slots": [["task", "task"]],
                    "parent_process_type": "project",
                },
                {
                    "id": "task_result",
                    "onto_kind": "coincidence",
                    "attribute_ids": ["task_kind", "position", "status"],
                    "relation_slots": [["task", "task"]],
                    "parent_process_type": "project",
                },
            ],
            "success_functions": [
                {
                    "name": self.SUCCESS_FUNCTION,
                    "scope_type": "project",
                    "trigger_type": "assignment",
                    "goal_type": "task_result",
                    "goal": ["status=done"],
                    "window": self.window,
                    "link": ["task"],
                }
            ],
        }

    def setup(self, store: Store) -> None:
        for index in range(self.cfg.n_clients):
            store.insert(ObjectRecord(f"project-{index:03d}", "project", time_start=0.0))

    def subject(self, step, rng, store):
        kind = int(rng.integers(self.cfg.n_segments))
        task_id = f"task-{step:06d}"
        store.insert(ObjectRecord(task_id, "task", {"task_kind": self.context_code(kind)}))
        return task_id, kind, f"project-{step % self.cfg.n_clients:03d}"

    def context_weights(self) -> np.ndarray:
        return np.full(self.cfg.n_segments, 1.0 / self.cfg.n_segments)

    def action_record(self, step, time, subject_id, context, choice, process_id):
        return ObjectRecord(
            f"assignment-{step:06d}",
            "assignment",
            {"task_kind": self.context_code(context), "position": self.choice_code(choice)},
            relations=(("task", subject_id),),
            time_start=time,
            parent_process=process_id,
        )

    def result_record(self, step, time, subject_id, context, choice, success, process_id):
        return ObjectRecord(
            f"result-{step:06d}",
            "task_result",
            {
                "task_kind": self.context_code(context),
                "position": self.choice_code(choice),
                "status": "done" if success else "failed",
            },
            relations=(("task", subject_id),),
            time_start=time,
            parent_process=process_id,
        )


@dataclass
class SimulationResult:
    metrics: pd.DataFrame
    summary: dict
    store: Store = field(repr=False)

    def write(self, metrics_path: str) -> str:
        """Write the metrics CSV and summary.json next to it."""
        summary_path = os.path.join(
            os.path.dirname(os.path.abspath(metrics_path)), "summary.json"
        )
        try:
            self.metrics.to_csv(metrics_path, index=False, float_format="%.6f")
            with open(summary_path, "w", encoding="utf-8", newline="\n") as handle:
                json.dump(self.summary, handle, indent=2, sort_keys=True)
                handle.write("\n")
        except OSError as exc:
            raise IoError(f"Cannot write metrics: {exc}", ident=metrics_path) from exc
        return summary_path


class ClosedLoop:
    """Runs an environment against the engine for one seeded episode."""

    def __init__(
        self, env: Environment, loop: LoopConfig, store: Optional[Store] = None
    ) -> None:
        self.env = env
        self.loop = loop
        self.store = store or Store(env.schema)
        self.rng = np.random.default_rng(env.cfg.seed)
        self.function = env.schema.success_function(env.SUCCESS_FUNCTION)
        self._successes: dict[int, Counter] = {}
        self._last_scan = 0
        self._actions: list[str] = []
        self._outcomes: list[int] = []
        self._regret = 0.0
        self.decisions: Counter = Counter()

    def _fallback(self, context: int) -> int:
        local = self._successes.get(context)
        if local:
            return min(local, key=lambda choice: (-local[choice], choice))
        overall: Counter = Counter()
        for counts in self._successes.values():
            overall.update(counts)
        if overall:
            return min(overall, key=lambda choice: (-overall[choice], choice))
        return int(self.rng.integers(self.env.cfg.n_products))

    def _choose(self, step: int, context: int) -> tuple[int, Optional[Option], str]:
        if step < self.loop.warmup:
            return int(self.rng.integers(self.env.cfg.n_products)), None, EXPLORE
        env = self.env
        decision = recommend_action(
            {env.CONTEXT: env.context_code(context)},
            env.CHOICE,
            env.OUTCOME,
            self.store,
            self.loop.recommend,
            self.loop.mining,
        )
        if decision.kind == DECISION_AUTO or (
            decision.kind == DECISION_MENU and self.loop.accept_menu
        ):
            top = decision.top
            return env.choice_index(top.choice.category_code), top, decision.kind
        choice = self._fallback(context)
        option = next(
            (
                o
                for o in decision.options
                if o.choice.category_code == env.choice_code(choice)
            ),
            None,
        )
        kind = FALLBACK if decision.kind != DECISION_ABSTAIN else DECISION_ABSTAIN
        return choice, option, kind

    def step(self, step: int) -> None:
        env, loop, store = self.env, self.loop, self.store
        moment = float(step)
        if step >= loop.warmup and (step - loop.warmup) % loop.refresh_every == 0:
            refresh(store, loop.mining, targets=[env.OUTCOME.classifier_id], jobs=loop.jobs)

        subject_id, context, process_id = env.subject(step, self.rng, store)
        choice, option, kind = self._choose(step, context)
        self.decisions[kind] += 1

        action = env.action_record(step, moment, subject_id, context, choice, process_id)
        store.insert(action)
        if option is not None:
            open_expectation(
                action.id,
                option.prediction,
                moment + loop.deadline,
                store,
                expected=env.OUTCOME,
            )
        success = env.sample(self.rng, context, choice)
        store.insert(
            env.result_record(
                step,
                moment + loop.deadline / 2.0,
                subject_id,
                context,
                choice,
                success,
                process_id,
            )
        )
        if success:
            self._successes.setdefault(context, Counter())[choice] += 1

        until = store.revision
        for event in scan(store, since=self._last_scan, fns=[self.function], until=until):
            reinforce(event, store, loop.mining)
        self._last_scan = until

        self._actions.append(env.choice_code(choice))
        self._outcomes.append(int(success))
        best = env.acceptance[context].max()
        self._regret += float(best - env.acceptance[context, choice])

    def run(self) -> SimulationResult:
        self.env.setup(self.store)
        for step in range(self.env.cfg.episode_length):
            self.step(step)
        return self.result()

    def result(self) -> SimulationResult:
        outcomes = pd.Series(self._outcomes, dtype=float)
        metrics = pd.DataFrame(
            {
                "step": range(len(self._outcomes)),
                "action": self._actions,
                "outcome": self._outcomes,
                "trailing_rate": outcomes.rolling(self.loop.trailing, min_periods=1).mean(),
            }
        )
        windows = []
        for start in range(0, len(self._outcomes), self.loop.window):
            chunk = self._outcomes[start : start + self.loop.window]
            windows.append(
                {
                    "start": start,
                    "end": start + len(chunk),
                    "rate": float(np.mean(chunk)),
                }
            )
        summary: dict[str, Any] = {
            "environment": self.env.NAME,
            "seed": self.env.cfg.seed,
            "steps": len(self._outcomes),
            "oracle_rate": self.env.oracle_rate(),
            "overall_rate": float(np.mean(self._outcomes)) if self._outcomes else None,
            "trailing_rate": (
                float(metrics["trailing_rate"].iloc[-1]) if self._outcomes else None
            ),
            "pseudo_regret": self._regret,
            "windows": windows,
            "decisions": dict(sorted(self.decisions.items())),
            "rules": len(self.store.rules()),
            "revision": self.store.revision,
        }
        _LOGGER.info(
            "%s simulation: %d steps, trailing rate %s vs oracle %.3f",
            self.env.NAME,
            summary["steps"],
            summary["trailing_rate"],
            summary["oracle_rate"],
        )
        return SimulationResult(metrics, summary, self.store)


def _simulate(
    env: Environment,
    loop: LoopConfig,
    metrics_path: Optional[str],
    store_dir: Optional[str],
) -> SimulationResult:
    result = ClosedLoop(env, loop).run()
    if metrics_path is not None:
        result.write(metrics_path)
    if store_dir is not None:
        result.store.save(store_dir)
    return result


def simulate_crm(
    env: Optional[SimEnvConfig] = None,
    loop: Optional[LoopConfig] = None,
    metrics_path: Optional[str] = None,
    store_dir: Optional[str] = None,
) -> SimulationResult:
    loop = loop or LoopConfig()
    environment = CrmEnvironment(env or SimEnvConfig(), window=loop.deadline)
    return _simulate(environment, loop, metrics_path, store_dir)


def simulate_pm(
    env: Optional[SimEnvConfig] = None,
    loop: Optional[LoopConfig] = None,
    metrics_path: Optional[str] = None,
    store_dir: Optional[str] = None,
) -> SimulationResult:
    loop = loop or LoopConfig()
    environment = PmEnvironment(
        env or SimEnvConfig(n_segments=3, n_products=3, n_clients=5, episode_length=1000),
        window=loop.deadline,
    )
    return _simulate(environment, loop, metrics_path, store_dir)
