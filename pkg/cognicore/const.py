"""Constants for Cognicore."""

NAME = "Cognicore"
DOMAIN = "cognicore"
VERSION = "0.1.0"

STARTUP_MESSAGE = f"""
-------------------------------------------------------------------
{NAME}
Version: {VERSION}
Knowledge-base decision support: rules, invariants, expectations.
-------------------------------------------------------------------
"""

# Upper-ontology kinds an object type may declare.
ONTO_ENTITY = "entity"
ONTO_STATE = "state"
ONTO_ACTION = "action"
ONTO_COINCIDENCE = "coincidence"
ONTO_PROCESS = "process"
ONTO_IMAGE = "image"
ONTO_SCENE = "scene"
ONTO_SCENARIO = "scenario"
ONTO_FORK = "fork"
ONTO_PHENOMENON = "phenomenon"

ONTO_KINDS = (
    ONTO_ENTITY,
    ONTO_STATE,
    ONTO_ACTION,
    ONTO_COINCIDENCE,
    ONTO_PROCESS,
    ONTO_IMAGE,
    ONTO_SCENE,
    ONTO_SCENARIO,
    ONTO_FORK,
    ONTO_PHENOMENON,
)
TIMED_KINDS = frozenset({ONTO_STATE, ONTO_ACTION, ONTO_COINCIDENCE, ONTO_PROCESS})
INVARIANT_KINDS = frozenset(
    {ONTO_IMAGE, ONTO_SCENE, ONTO_SCENARIO, ONTO_FORK, ONTO_PHENOMENON}
)

KIND_CATEGORICAL = "categorical"
KIND_BOOLEAN = "boolean"
KIND_BINNED = "binned_numeric"
CLASSIFIER_KINDS = (KIND_CATEGORICAL, KIND_BOOLEAN, KIND_BINNED)

POSITIVE = "positive"
NEGATIVE = "negative"

STATUS_MINED = "mined"
STATUS_HYPOTHESIS = "hypothesis"
STATUS_CONFIRMED = "confirmed"
STATUS_RETIRED = "retired"
RULE_STATUSES = (STATUS_MINED, STATUS_HYPOTHESIS, STATUS_CONFIRMED, STATUS_RETIRED)
ACTIVE_STATUSES = frozenset({STATUS_MINED, STATUS_CONFIRMED})

PROVENANCE_DATA = "data"
PROVENANCE_DEDUCTION = "deduction"
PROVENANCE_INDUCTION = "induction"
PROVENANCE_ABDUCTION = "abduction"
PROVENANCE_MANUAL = "manual"
PROVENANCES = (
    PROVENANCE_DATA,
    PROVENANCE_DEDUCTION,
    PROVENANCE_INDUCTION,
    PROVENANCE_ABDUCTION,
    PROVENANCE_MANUAL,
)

RANKING_PROBABILITY = "probability"
RANKING_SIGNIFICANCE = "significance"
RANKING_COMBINED = "combined"
RANKINGS = (RANKING_PROBABILITY, RANKING_SIGNIFICANCE, RANKING_COMBINED)

CORRECTION_BONFERRONI = "bonferroni"
CORRECTION_NONE = "none"
CORRECTIONS = (CORRECTION_BONFERRONI, CORRECTION_NONE)

EXP_OPEN = "open"
EXP_ACHIEVED = "achieved"
EXP_FAILED = "failed"
EXP_EXPIRED = "expired"
EXP_TERMINAL = frozenset({EXP_ACHIEVED, EXP_FAILED, EXP_EXPIRED})

OUTCOME_POSITIVE = "positive"
OUTCOME_NEGATIVE = "negative"

SOURCE_ACCEPTOR = "acceptor"
SOURCE_SUCCESS_FUNCTION = "success_function"

TRIGGER_ACHIEVED = "achieved"
TRIGGER_MISSED = "missed"
TRIGGER_PENDING = "pending"

DECISION_AUTO = "auto"
DECISION_MENU = "menu"
DECISION_ABSTAIN = "abstain"

# Store files, one JSON object per line.
FILE_OBJECTS = "objects.jsonl"
FILE_RULES = "rules.jsonl"
FILE_INVARIANTS = "invariants.jsonl"
FILE_EXPECTATIONS = "expectations.jsonl"
FILE_EVENTS = "events.jsonl"
FILE_REFRESHES = "refreshes.jsonl"

EXPORT_KINDS = {
    "objects": FILE_OBJECTS,
    "rules": FILE_RULES,
    "invariants": FILE_INVARIANTS,
    "expectations": FILE_EXPECTATIONS,
    "events": FILE_EVENTS,
    "refreshes": FILE_REFRESHES,
}

# Rule-base ledger operations, replayed in revision order.
LEDGER_REFRESH = "refresh"
LEDGER_MINE = "mine"
LEDGER_RULES = "rules"
LEDGER_OPS = (LEDGER_REFRESH, LEDGER_MINE, LEDGER_RULES)

# Record columns with a fixed meaning in CSV ingestion.
COLUMN_ID = "id"
COLUMN_TIME_START = "time_start"
COLUMN_TIME_END = "time_end"
COLUMN_PARENT_PROCESS = "parent_process"

DEFAULT_ALPHA = 0.05
DEFAULT_MAX_PREMISE_LEN = 4
DEFAULT_MIN_SUPPORT = 5
DEFAULT_BEAM_WIDTH = 200
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_APPLY_THRESHOLD = 0.8
DEFAULT_INTENT_FREQUENCY = 0.5
DEFAULT_MIN_EXTENT_SHARE = 0.1
DEFAULT_CONTEXT_PREMISE_LEN = 2
DEFAULT_CONFIDENCE_THRESHOLD = 0.8
DEFAULT_TOP_K = 10

# Smallest p-value the significance ranking distinguishes.
P_VALUE_FLOOR = 1e-300
