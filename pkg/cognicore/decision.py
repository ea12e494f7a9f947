"""Recommendations: predictions turned into auto, menu or abstain decisions."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Iterable, Mapping, Optional

from .config import MiningConfig, RecommendConfig
from .const import DECISION_ABSTAIN, DECISION_AUTO, DECISION_MENU
from .lpi import Prediction, predict
from .ontology import Literal
from .store import Rule, Store

__all__ = [
    "Decision",
    "Option",
    "RecommendConfig",
    "decide",
    "recommend",
    "recommend_action",
]

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Option:
    """A choice and the prediction that argues for it."""

    choice: Literal
    prediction: Prediction

    def to_dict(self) -> dict:
        data = self.prediction.to_dict()
        data["choice"] = self.choice.key
        return data


@dataclass(frozen=True)
class Decision:
    kind: str
    options: tuple[Option, ...] = ()
    threshold: Optional[float] = None

    @property
    def top(self) -> Optional[Option]:
        return self.options[0] if self.options else None

    @property
    def choice(self) -> Optional[Literal]:
        """The chosen literal for an automatic decision."""
        if self.kind == DECISION_AUTO:
            return self.options[0].choice
        return None

    def to_dict(self) -> dict:
        return {
            "decision": self.kind,
            "choice": None if self.choice is None else self.choice.key,
            "threshold": self.threshold,
            "options": [option.to_dict() for option in self.options],
        }


def decide(
    options: Iterable[Option],
    cfg: RecommendConfig,
    alpha: float,
    user: Optional[str] = None,
) -> Decision:
    """Auto needs a top option above the threshold and clear of the runner-up."""
    every = tuple(options)
    ranked = every[: cfg.top_k]
    threshold = cfg.threshold_for(user)
    if not ranked:
        return Decision(DECISION_ABSTAIN, (), threshold)
    top = ranked[0].prediction
    clear = len(every) < 2 or top.score - every[1].prediction.score > cfg.tie_margin
    if (
        cfg.auto_decide
        and clear
        and top.probability >= threshold
        and top.p_value <= alpha
    ):
        return Decision(DECISION_AUTO, ranked, threshold)
    return Decision(DECISION_MENU, ranked, threshold)


def recommend(
    query: Mapping[str, str],
    target: str,
    store: Store,
    cfg: Optional[RecommendConfig] = None,
    mining: Optional[MiningConfig] = None,
    user: Optional[str] = None,
    rules: Optional[Iterable[Rule]] = None,
) -> Decision:
    """Recommend a category of ``target`` for the query."""
    cfg = cfg or RecommendConfig()
    mining = mining or MiningConfig()
    predictions = predict(query, target, store, mining, rules)
    decision = decide(
        (Option(p.target, p) for p in predictions), cfg, mining.alpha, user
    )
    _LOGGER.debug("Recommend %s for %s: %s", target, dict(query), decision.kind)
    return decision


def recommend_action(
    query: Mapping[str, str],
    choice_classifier: str,
    outcome: Literal,
    store: Store,
    cfg: Optional[RecommendConfig] = None,
    mining: Optional[MiningConfig] = None,
    user: Optional[str] = None,
) -> Decision:
    """Rank each category of ``choice_classifier`` by how well it brings ``outcome``."""
    cfg = cfg or RecommendConfig()
    mining = mining or MiningConfig()
    rules = store.rules()
    options = []
    for code in store.schema.classifier(choice_classifier).codes:
        extended = dict(query)
        extended[choice_classifier] = code
        for prediction in predict(
            extended, outcome.classifier_id, store, mining, rules
        ):
            if prediction.target == outcome:
                options.append(Option(Literal(choice_classifier, code), prediction))
    options.sort(key=lambda o: (-o.prediction.score, o.choice.category_code))
    return decide(options, cfg, mining.alpha, user)
