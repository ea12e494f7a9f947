"""Tests for auto, menu and abstain decisions."""
import pytest

from cognicore.config import RecommendConfig
from cognicore.const import DECISION_ABSTAIN, DECISION_AUTO, DECISION_MENU
from cognicore.decision import recommend, recommend_action
from cognicore.ontology import Literal
from cognicore.store import Rule, Store

from .helpers import flat_schema


@pytest.fixture
def store():
    return Store(
        flat_schema(
            {
                "x": ("0", "1"),
                "seg": ("s0", "s1"),
                "c": ("c0", "c1", "c2"),
                "t": ("yes", "no"),
            }
        )
    )


def _rule(premise, conclusion, a, b, p_value):
    return Rule(
        tuple(Literal(*item.split("=")) for item in premise),
        Literal(*conclusion.split("=")),
        a=a,
        b=b,
        p_value=p_value,
    )


RULES = [
    _rule(["x=1"], "t=yes", 18, 0, 0.001),
    _rule(["x=0"], "t=yes", 3, 2, 0.2),
    _rule(["x=0"], "t=no", 2, 3, 0.3),
]


def test_confident_prediction_is_automatic(store):
    decision = recommend({"x": "1"}, "t", store, rules=RULES)
    assert decision.kind == DECISION_AUTO
    assert decision.choice == Literal("t", "yes")
    data = decision.to_dict()
    assert data["decision"] == "auto"
    assert data["choice"] == "t=yes"
    assert data["threshold"] == 0.8
    assert data["options"][0]["probability"] == pytest.approx(19 / 20)


def test_uncertain_prediction_is_a_menu(store):
    decision = recommend({"x": "0"}, "t", store, rules=RULES)
    assert decision.kind == DECISION_MENU
    assert decision.choice is None
    assert [o.choice.key for o in decision.options] == ["t=yes", "t=no"]
    assert decision.top.prediction.probability == pytest.approx(4 / 7)
    limited = recommend({"x": "0"}, "t", store, RecommendConfig(top_k=1), rules=RULES)
    assert len(limited.options) == 1


def test_nothing_fires_abstains(store):
    decision = recommend({"seg": "s0"}, "t", store, rules=RULES)
    assert decision.kind == DECISION_ABSTAIN
    assert decision.options == ()
    assert decision.to_dict()["choice"] is None


def test_gates_on_threshold_significance_and_switch(store):
    cautious = RecommendConfig(user_thresholds={"cautious": 0.99})
    decision = recommend({"x": "1"}, "t", store, cautious, user="cautious")
    assert decision.kind == DECISION_ABSTAIN
    decision = recommend({"x": "1"}, "t", store, cautious, user="cautious", rules=RULES)
    assert (decision.kind, decision.threshold) == (DECISION_MENU, 0.99)
    assert recommend({"x": "1"}, "t", store, cautious, rules=RULES).kind == DECISION_AUTO
    manual = RecommendConfig(auto_decide=False)
    assert recommend({"x": "1"}, "t", store, manual, rules=RULES).kind == DECISION_MENU
    doubtful = [_rule(["x=1"], "t=yes", 18, 0, 0.2)]
    assert recommend({"x": "1"}, "t", store, rules=doubtful).kind == DECISION_MENU


def test_recommend_action_ranks_choices(store):
    store.put_rules(
        [
            _rule(["seg=s0", "c=c1"], "t=yes", 18, 0, 0.001),
            _rule(["seg=s0", "c=c0"], "t=yes", 3, 5, 0.5),
            _rule(["seg=s1", "c=c2"], "t=yes", 18, 0, 0.001),
        ]
    )
    decision = recommend_action({"seg": "s0"}, "c", Literal("t", "yes"), store)
    assert decision.kind == DECISION_AUTO
    assert decision.choice == Literal("c", "c1")
    assert [o.choice.key for o in decision.options] == ["c=c1", "c=c0"]
    assert decision.to_dict()["options"][0]["choice"] == "c=c1"


def test_tied_options_are_a_menu(store):
    tied = [
        _rule(["x=1"], "t=yes", 9, 1, 0.001),
        _rule(["seg=s0"], "t=no", 9, 1, 0.001),
    ]
    decision = recommend({"x": "1", "seg": "s0"}, "t", store, rules=tied)
    assert decision.kind == DECISION_MENU
    assert [o.prediction.probability for o in decision.options] == pytest.approx(
        [10 / 12, 10 / 12]
    )


def test_tie_margin(store):
    close = [
        _rule(["x=1"], "t=yes", 18, 0, 0.001),
        _rule(["seg=s0"], "t=no", 9, 1, 0.001),
    ]
    query = {"x": "1", "seg": "s0"}
    assert recommend(query, "t", store, rules=close).kind == DECISION_AUTO
    wide = RecommendConfig(tie_margin=0.2)
    assert recommend(query, "t", store, wide, rules=close).kind == DECISION_MENU
