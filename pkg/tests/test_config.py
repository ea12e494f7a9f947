"""Tests for validated configuration sections."""
import json

import pytest

from cognicore.config import (
    ContextConfig,
    LoopConfig,
    MiningConfig,
    RecommendConfig,
    SimEnvConfig,
    load_config_file,
    peaked_matrix,
)
from cognicore.exceptions import ConfigError, IoError, ParseError


def test_defaults():
    mining = MiningConfig()
    assert (mining.alpha, mining.max_premise_len, mining.min_support_a) == (0.05, 4, 5)
    assert LoopConfig().mining.max_premise_len == 2
    assert RecommendConfig().threshold_for("anyone") == 0.8
    assert mining.correction == "bonferroni"
    context = ContextConfig()
    assert (context.mining.max_premise_len, context.min_extent_share) == (2, 0.1)
    assert ContextConfig.from_dict({}).mining.max_premise_len == 2
    assert ContextConfig.from_dict({"mining": {"max_premise_len": 3}}).mining.max_premise_len == 3
    assert RecommendConfig().tie_margin == 0.0


@pytest.mark.parametrize(
    "raw",
    [
        {"alpha": 0.0},
        {"alpha": 1.0},
        {"alpha": "often"},
        {"max_premise_len": 0},
        {"ranking": "votes"},
        {"correction": "holm"},
        {"depth": 3},
    ],
)
def test_mining_rejects(raw):
    with pytest.raises(ConfigError):
        MiningConfig.from_dict(raw)


def test_error_names_the_option():
    with pytest.raises(ConfigError) as info:
        MiningConfig(alpha=2.0)
    assert info.value.ident == "alpha"


def test_with_overrides():
    base = MiningConfig()
    changed = base.with_overrides(alpha=0.01, ranking=None)
    assert changed.alpha == 0.01
    assert changed.ranking == base.ranking
    with pytest.raises(ConfigError):
        base.with_overrides(alpha=5.0)
    with pytest.raises(ConfigError):
        base.with_overrides(depth=3)


def test_context_and_recommend():
    cfg = ContextConfig.from_dict(
        {"classifiers": ["x"], "merge_hamming": 1, "mining": {"beam_width": 10}}
    )
    assert cfg.classifiers == ("x",)
    assert cfg.mining.beam_width == 10
    with pytest.raises(ConfigError):
        ContextConfig(apply_threshold=0.5)
    with pytest.raises(ConfigError):
        ContextConfig(min_extent_share=1.5)
    rec = RecommendConfig.from_dict({"user_thresholds": {"ann": 0.95}})
    assert rec.threshold_for("ann") == 0.95
    assert rec.threshold_for("bob") == 0.8
    with pytest.raises(ConfigError):
        RecommendConfig(confidence_threshold=1.5)
    with pytest.raises(ConfigError):
        RecommendConfig.from_dict({"tie_margin": -0.1})


def test_acceptance_matrix():
    assert peaked_matrix(3, 2) == ((0.9, 0.1), (0.1, 0.9), (0.9, 0.1))
    env = SimEnvConfig(n_segments=2, n_products=2, acceptance=[[0.5, 0.5], [0.2, 0.7]])
    assert env.acceptance == ((0.5, 0.5), (0.2, 0.7))
    with pytest.raises(ConfigError):
        SimEnvConfig(n_segments=3, n_products=2, acceptance=[[0.5, 0.5]])
    with pytest.raises(ConfigError):
        SimEnvConfig(n_segments=1, n_products=2, acceptance=[[0.5, 1.5]])
    with pytest.raises(ConfigError):
        SimEnvConfig(n_products=1)
    assert SimEnvConfig.from_dict(env.to_dict()) == env


def test_loop_from_dict():
    loop = LoopConfig.from_dict(
        {"warmup": 10, "mining": {"alpha": 0.01}, "recommend": {"top_k": 2}}
    )
    assert loop.warmup == 10
    assert (loop.mining.alpha, loop.mining.max_premise_len) == (0.01, 2)
    assert loop.recommend.top_k == 2
    override = MiningConfig(max_premise_len=3)
    assert LoopConfig.from_dict({}, mining=override).mining is override
    with pytest.raises(ConfigError):
        LoopConfig(deadline=0.0)


def test_load_config_file(tmp_path):
    assert load_config_file(None) == {}
    path = tmp_path / "cognicore.json"
    path.write_text(json.dumps({"mining": {"alpha": 0.01}, "loop": {}}), encoding="utf-8")
    assert load_config_file(str(path)) == {"mining": {"alpha": 0.01}, "loop": {}}
    path.write_text(json.dumps({"plugins": {}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(str(path))
    path.write_text("[1]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(str(path))
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ParseError):
        load_config_file(str(path))
    with pytest.raises(IoError):
        load_config_file(str(tmp_path / "missing.json"))
