"""Validated configuration for mining, context, recommendation and simulation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import json
import logging
from typing import Any, Mapping, Optional

import voluptuous as vol

from .const import (
    CORRECTION_BONFERRONI,
    CORRECTIONS,
    DEFAULT_ALPHA,
    DEFAULT_APPLY_THRESHOLD,
    DEFAULT_BEAM_WIDTH,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_CONTEXT_PREMISE_LEN,
    DEFAULT_INTENT_FREQUENCY,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_MAX_PREMISE_LEN,
    DEFAULT_MIN_EXTENT_SHARE,
    DEFAULT_MIN_SUPPORT,
    DEFAULT_TOP_K,
    RANKING_PROBABILITY,
    RANKINGS,
)
from .exceptions import ConfigError, IoError, ParseError

_LOGGER = logging.getLogger(__name__)

PROBABILITY = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))
POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))

MINING_SCHEMA = vol.Schema(
    {
        vol.Optional("alpha", default=DEFAULT_ALPHA): vol.All(
            vol.Coerce(float),
            vol.Range(min=0.0, max=1.0, min_included=False, max_included=False),
        ),
        vol.Optional("max_premise_len", default=DEFAULT_MAX_PREMISE_LEN): POSITIVE_INT,
        vol.Optional("min_support_a", default=DEFAULT_MIN_SUPPORT): POSITIVE_INT,
        vol.Optional("beam_width", default=DEFAULT_BEAM_WIDTH): POSITIVE_INT,
        vol.Optional("ranking", default=RANKING_PROBABILITY): vol.In(RANKINGS),
        vol.Optional("correction", default=CORRECTION_BONFERRONI): vol.In(CORRECTIONS),
    }
)

CONTEXT_SCHEMA = vol.Schema(
    {
        vol.Optional("classifiers", default=[]): [str],
        vol.Optional("max_iterations", default=DEFAULT_MAX_ITERATIONS): POSITIVE_INT,
        vol.Optional("apply_threshold", default=DEFAULT_APPLY_THRESHOLD): vol.All(
            vol.Coerce(float), vol.Range(min=0.5, max=1.0, min_included=False)
        ),
        vol.Optional(
            "intent_min_frequency", default=DEFAULT_INTENT_FREQUENCY
        ): PROBABILITY,
        vol.Optional("merge_hamming", default=0): NON_NEGATIVE_INT,
        vol.Optional(
            "min_extent_share", default=DEFAULT_MIN_EXTENT_SHARE
        ): PROBABILITY,
        vol.Optional("mining", default={}): dict,
    }
)

RECOMMEND_SCHEMA = vol.Schema(
    {
        vol.Optional(
            "confidence_threshold", default=DEFAULT_CONFIDENCE_THRESHOLD
        ): PROBABILITY,
        vol.Optional("auto_decide", default=True): bool,
        vol.Optional("top_k", default=DEFAULT_TOP_K): POSITIVE_INT,
        vol.Optional("user_thresholds", default={}): {str: PROBABILITY},
        vol.Optional("tie_margin", default=0.0): PROBABILITY,
    }
)

SIM_ENV_SCHEMA = vol.Schema(
    {
        vol.Optional("seed", default=42): vol.Coerce(int),
        vol.Optional("n_segments", default=4): POSITIVE_INT,
        vol.Optional("n_clients", default=200): POSITIVE_INT,
        vol.Optional("n_products", default=3): vol.All(
            vol.Coerce(int), vol.Range(min=2)
        ),
        vol.Optional("acceptance", default=None): vol.Any(None, [[PROBABILITY]]),
        vol.Optional("episode_length", default=2000): POSITIVE_INT,
    }
)

LOOP_SCHEMA = vol.Schema(
    {
        vol.Optional("warmup", default=200): NON_NEGATIVE_INT,
        vol.Optional("refresh_every", default=100): POSITIVE_INT,
        vol.Optional("trailing", default=500): POSITIVE_INT,
        vol.Optional("window", default=500): POSITIVE_INT,
        vol.Optional("deadline", default=1.0): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Optional("accept_menu", default=False): bool,
        vol.Optional("jobs", default=1): POSITIVE_INT,
        vol.Optional("mining", default={}): dict,
        vol.Optional("recommend", default={}): dict,
    }
)

CONFIG_FILE_SCHEMA = vol.Schema(
    {
        vol.Optional("mining"): dict,
        vol.Optional("context"): dict,
        vol.Optional("recommend"): dict,
        vol.Optional("env"): dict,
        vol.Optional("loop"): dict,
    }
)


def _validated(schema: vol.Schema, data: Mapping[str, Any], section: str) -> dict:
    try:
        return schema(dict(data))
    except vol.Invalid as exc:
        key = ".".join(str(part) for part in exc.path) or section
        raise ConfigError(
            f"Invalid {section} option {key!r}: {exc.error_message}", ident=key
        ) from exc


@dataclass(frozen=True)
class MiningConfig:
    alpha: float = DEFAULT_ALPHA
    max_premise_len: int = DEFAULT_MAX_PREMISE_LEN
    min_support_a: int = DEFAULT_MIN_SUPPORT
    beam_width: int = DEFAULT_BEAM_WIDTH
    ranking: str = RANKING_PROBABILITY
    correction: str = CORRECTION_BONFERRONI

    def __post_init__(self) -> None:
        _validated(MINING_SCHEMA, asdict(self), "mining")

    @classmethod
    def from_dict(cls, raw: Optional[Mapping[str, Any]] = None) -> "MiningConfig":
        return cls(**_validated(MINING_SCHEMA, raw or {}, "mining"))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **changes: Any) -> "MiningConfig":
        """Copy with every non-None keyword applied."""
        changes = {key: value for key, value in changes.items() if value is not None}
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _context_mining() -> MiningConfig:
    return MiningConfig(max_premise_len=DEFAULT_CONTEXT_PREMISE_LEN)


@dataclass(frozen=True)
class ContextConfig:
    """Which classifiers form the context and how the closure runs.

    Groups holding less than ``min_extent_share`` of the objects are folded
    into the nearest group above that share.
    """

    classifiers: tuple[str, ...] = ()
    mining: MiningConfig = field(default_factory=_context_mining)
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    apply_threshold: float = DEFAULT_APPLY_THRESHOLD
    intent_min_frequency: float = DEFAULT_INTENT_FREQUENCY
    merge_hamming: int = 0
    min_extent_share: float = DEFAULT_MIN_EXTENT_SHARE

    def __post_init__(self) -> None:
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        _validated(
            CONTEXT_SCHEMA,
            {
                "classifiers": list(self.classifiers),
                "max_iterations": self.max_iterations,
                "apply_threshold": self.apply_threshold,
                "intent_min_frequency": self.intent_min_frequency,
                "merge_hamming": self.merge_hamming,
                "min_extent_share": self.min_extent_share,
            },
            "context",
        )

    @classmethod
    def from_dict(
        cls,
        raw: Optional[Mapping[str, Any]] = None,
        mining: Optional[MiningConfig] = None,
    ) -> "ContextConfig":
        data = _validated(CONTEXT_SCHEMA, raw or {}, "context")
        nested = data.pop("mining")
        if mining is None:
            mining = MiningConfig.from_dict(
                {"max_premise_len": DEFAULT_CONTEXT_PREMISE_LEN, **nested}
            )
        data["mining"] = mining
        data["classifiers"] = tuple(data["classifiers"])
        return cls(**data)


@dataclass(frozen=True)
class RecommendConfig:
    """When to act without asking.

    An automatic decision also needs the top option to beat the runner-up by
    more than ``tie_margin``.
    """

    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    auto_decide: bool = True
    top_k: int = DEFAULT_TOP_K
    user_thresholds: Mapping[str, float] = field(default_factory=dict)
    tie_margin: float = 0.0

    def __post_init__(self) -> None:
        data = asdict(self)
        data["user_thresholds"] = dict(self.user_thresholds)
        _validated(RECOMMEND_SCHEMA, data, "recommend")

    @classmethod
    def from_dict(cls, raw: Optional[Mapping[str, Any]] = None) -> "RecommendConfig":
        return cls(**_validated(RECOMMEND_SCHEMA, raw or {}, "recommend"))

    def threshold_for(self, user: Optional[str] = None) -> float:
        if user is not None and user in self.user_thresholds:
            return self.user_thresholds[user]
        return self.confidence_threshold


def peaked_matrix(
    rows: int, columns: int, high: float = 0.9, low: float = 0.1
) -> tuple[tuple[float, ...], ...]:
    """Row i favours column i mod ``columns``."""
    return tuple(
        tuple(high if col == row % columns else low for col in range(columns))
        for row in range(rows)
    )


@dataclass(frozen=True)
class SimEnvConfig:
    """Hidden environment of a closed-loop simulation.

    ``acceptance[s][p]`` is the success probability of choice ``p`` in context
    ``s``; when omitted a peaked matrix is used.
    """

    seed: int = 42
    n_segments: int = 4
    n_clients: int = 200
    n_products: int = 3
    acceptance: Optional[tuple[tuple[float, ...], ...]] = None
    episode_length: int = 2000

    def __post_init__(self) -> None:
        if self.acceptance is None:
            matrix = peaked_matrix(self.n_segments, self.n_products)
        else:
            matrix = tuple(tuple(float(p) for p in row) for row in self.acceptance)
        object.__setattr__(self, "acceptance", matrix)
        data = asdict(self)
        data["acceptance"] = [list(row) for row in matrix]
        _validated(SIM_ENV_SCHEMA, data, "env")
        if len(matrix) != self.n_segments or any(
            len(row) != self.n_products for row in matrix
        ):
            raise ConfigError(
                f"Acceptance matrix must be {self.n_segments} x {self.n_products}",
                ident="acceptance",
            )

    @classmethod
    def from_dict(cls, raw: Optional[Mapping[str, Any]] = None) -> "SimEnvConfig":
        data = _validated(SIM_ENV_SCHEMA, raw or {}, "env")
        if data["acceptance"] is not None:
            data["acceptance"] = tuple(tuple(row) for row in data["acceptance"])
        return cls(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["acceptance"] = [list(row) for row in self.acceptance]
        return data


def _sim_mining() -> MiningConfig:
    return MiningConfig(max_premise_len=2)


@dataclass(frozen=True)
class LoopConfig:
    """Closed-loop schedule: exploration, refreshes, reporting windows."""

    warmup: int = 200
    refresh_every: int = 100
    trailing: int = 500
    window: int = 500
    deadline: float = 1.0
    accept_menu: bool = False
    jobs: int = 1
    mining: MiningConfig = field(default_factory=_sim_mining)
    recommend: RecommendConfig = field(default_factory=RecommendConfig)

    def __post_init__(self) -> None:
        data = {
            key: value
            for key, value in asdict(self).items()
            if key not in ("mining", "recommend")
        }
        _validated(LOOP_SCHEMA, data, "loop")

    @classmethod
    def from_dict(
        cls,
        raw: Optional[Mapping[str, Any]] = None,
        mining: Optional[MiningConfig] = None,
        recommend: Optional[RecommendConfig] = None,
    ) -> "LoopConfig":
        data = _validated(LOOP_SCHEMA, raw or {}, "loop")
        nested_mining = data.pop("mining")
        nested_recommend = data.pop("recommend")
        if mining is None:
            mining = MiningConfig.from_dict({"max_premise_len": 2, **nested_mining})
        if recommend is None:
            recommend = RecommendConfig.from_dict(nested_recommend)
        return cls(mining=mining, recommend=recommend, **data)


def load_config_file(path: Optional[str]) -> dict:
    """Read a JSON config block; sections are validated by their dataclasses."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise IoError(f"Cannot read config {path}: {exc}", ident=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"Config {path} is not JSON: {exc}", ident=path) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a JSON object", ident=path)
    data = _validated(CONFIG_FILE_SCHEMA, raw, "config")
    _LOGGER.debug("Loaded config sections %s from %s", sorted(data), path)
    return data
