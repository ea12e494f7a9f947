"""Metadata base: classifiers, object types, success functions.

A schema file is JSON with ``classifiers``, ``object_types`` and
``success_functions``. Its shape is checked with voluptuous; semantic checks
(uniqueness, references, domain sizes) are collected by ``validate_schema``
so that every problem is reported at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import voluptuous as vol

from .const import (
    CLASSIFIER_KINDS,
    KIND_BINNED,
    KIND_BOOLEAN,
    KIND_CATEGORICAL,
    NEGATIVE,
    ONTO_ACTION,
    ONTO_KINDS,
    ONTO_PROCESS,
    POSITIVE,
    TIMED_KINDS,
)
from .exceptions import (
    ConfigError,
    DanglingReference,
    DuplicateId,
    EmptyInput,
    InvalidDefinition,
    IoError,
    ParseError,
    UnknownCategory,
    UnknownClassifier,
    UnknownObjectType,
)

_LOGGER = logging.getLogger(__name__)

_FORBIDDEN_ID_CHARS = set("=!&, \t\n")
_FORBIDDEN_CODE_CHARS = set("&,")


@dataclass(frozen=True)
class Literal:
    """One classifier/category commitment, positive or negated."""

    classifier_id: str
    category_code: str
    polarity: str = POSITIVE

    @property
    def positive(self) -> bool:
        return self.polarity == POSITIVE

    @property
    def key(self) -> str:
        op = "=" if self.positive else "!="
        return f"{self.classifier_id}{op}{self.category_code}"

    def negate(self) -> "Literal":
        return Literal(
            self.classifier_id,
            self.category_code,
            NEGATIVE if self.positive else POSITIVE,
        )

    def contradicts(self, other: "Literal") -> bool:
        """Both cannot hold on one record."""
        if self.classifier_id != other.classifier_id:
            return False
        if self.category_code == other.category_code:
            return self.polarity != other.polarity
        return self.positive and other.positive

    def __str__(self) -> str:
        return self.key


def parse_literal(text: str) -> Literal:
    """Parse ``classifier=code`` or ``classifier!=code``."""
    raw = (text or "").strip()
    pos = raw.find("=")
    if pos <= 0:
        raise ParseError(f"Not a literal: {text!r}", ident=text)
    if raw[pos - 1] == "!":
        classifier_id, polarity = raw[: pos - 1], NEGATIVE
    else:
        classifier_id, polarity = raw[:pos], POSITIVE
    code = raw[pos + 1 :]
    if not classifier_id or not code:
        raise ParseError(f"Not a literal: {text!r}", ident=text)
    return Literal(classifier_id.strip(), code.strip(), polarity)


def literal_key(lit: Literal) -> str:
    return lit.key


def sort_literals(literals: Iterable[Literal]) -> tuple[Literal, ...]:
    return tuple(sorted(set(literals), key=literal_key))


@dataclass(frozen=True)
class CategoryDef:
    code: str
    label: str


@dataclass(frozen=True)
class CategoryAssignment:
    classifier_id: str
    category_code: str


@dataclass(frozen=True)
class ClassifierDef:
    id: str
    name: str
    kind: str
    domain: tuple[CategoryDef, ...]
    missing_tokens: tuple[str, ...] = ("",)
    bin_thresholds: Optional[tuple[float, ...]] = None
    aliases: tuple[str, ...] = ()

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(cat.code for cat in self.domain)

    def is_missing(self, text: str) -> bool:
        return text in {token.strip() for token in self.missing_tokens}


@dataclass(frozen=True)
class ObjectTypeDef:
    id: str
    name: str
    onto_kind: str
    attribute_ids: tuple[str, ...] = ()
    relation_slots: tuple[tuple[str, str], ...] = ()
    parent_process_type: Optional[str] = None

    @property
    def timed(self) -> bool:
        return self.onto_kind in TIMED_KINDS

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(role for role, _ in self.relation_slots)


@dataclass(frozen=True)
class SuccessFunctionDef:
    """Declarative trigger/goal/window pattern scored into [0, 1]."""

    name: str
    scope_type: str
    trigger: tuple[Literal, ...] = ()
    goal: tuple[Literal, ...] = ()
    window: float = 1.0
    achieved_reward: float = 1.0
    missed_reward: float = 0.0
    trigger_type: Optional[str] = None
    goal_type: Optional[str] = None
    link: tuple[str, ...] = ()

    @property
    def reward_map(self) -> dict:
        return {"achieved": self.achieved_reward, "missed": self.missed_reward}


@dataclass(frozen=True)
class Finding:
    """One schema violation."""

    kind: type
    ident: str
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class Schema:
    classifiers: tuple[ClassifierDef, ...]
    object_types: tuple[ObjectTypeDef, ...] = ()
    success_functions: tuple[SuccessFunctionDef, ...] = ()
    _classifier_map: dict = field(init=False, repr=False, compare=False)
    _type_map: dict = field(init=False, repr=False, compare=False)
    _header_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_classifier_map", {c.id: c for c in self.classifiers}
        )
        object.__setattr__(self, "_type_map", {t.id: t for t in self.object_types})
        headers: dict[str, str] = {}
        for cdef in self.classifiers:
            for name in (cdef.id, cdef.name, *cdef.aliases):
                headers.setdefault(name.strip().casefold(), cdef.id)
        object.__setattr__(self, "_header_map", headers)

    def has_classifier(self, classifier_id: str) -> bool:
        return classifier_id in self._classifier_map

    def classifier(self, classifier_id: str) -> ClassifierDef:
        try:
            return self._classifier_map[classifier_id]
        except KeyError:
            raise UnknownClassifier(
                f"Unknown classifier {classifier_id!r}", ident=classifier_id
            ) from None

    def object_type(self, type_id: str) -> ObjectTypeDef:
        try:
            return self._type_map[type_id]
        except KeyError:
            raise UnknownObjectType(
                f"Unknown object type {type_id!r}", ident=type_id
            ) from None

    def has_object_type(self, type_id: str) -> bool:
        return type_id in self._type_map

    def success_function(self, name: str) -> SuccessFunctionDef:
        for fn in self.success_functions:
            if fn.name == name:
                return fn
        raise ConfigError(f"Unknown success function {name!r}", ident=name)

    def classifier_for_header(self, header: str) -> Optional[str]:
        """Map a CSV header to a classifier id via id, name or alias."""
        return self._header_map.get(header.strip().casefold())

    def check_literal(self, lit: Literal) -> None:
        cdef = self.classifier(lit.classifier_id)
        if lit.category_code not in cdef.codes:
            raise UnknownCategory(
                f"{lit.category_code!r} is not a category of {cdef.id!r}",
                ident=lit.key,
            )


CATEGORY_SCHEMA = vol.Schema(
    {
        vol.Required("code"): vol.Coerce(str),
        vol.Optional("label"): vol.Coerce(str),
    }
)

CLASSIFIER_SCHEMA = vol.Schema(
    {
        vol.Required("id"): str,
        vol.Optional("name"): str,
        vol.Optional("kind", default=KIND_CATEGORICAL): vol.In(CLASSIFIER_KINDS),
        vol.Required("domain"): [CATEGORY_SCHEMA],
        vol.Optional("missing_tokens", default=[""]): [vol.Coerce(str)],
        vol.Optional("bin_thresholds", default=None): vol.Any(
            None, [vol.Coerce(float)]
        ),
        vol.Optional("aliases", default=[]): [str],
    }
)

OBJECT_TYPE_SCHEMA = vol.Schema(
    {
        vol.Required("id"): str,
        vol.Optional("name"): str,
        vol.Required("onto_kind"): vol.In(ONTO_KINDS),
        vol.Optional("attribute_ids", default=[]): [str],
        vol.Optional("relation_slots", default=[]): [vol.ExactSequence([str, str])],
        vol.Optional("parent_process_type", default=None): vol.Any(None, str),
    }
)

LITERAL_SCHEMA = vol.Any(
    str,
    vol.Schema(
        {
            vol.Required("classifier_id"): str,
            vol.Required("category_code"): vol.Coerce(str),
            vol.Optional("polarity", default=POSITIVE): vol.In([POSITIVE, NEGATIVE]),
        }
    ),
)

SUCCESS_FUNCTION_SCHEMA = vol.Schema(
    {
        vol.Required("name"): str,
        vol.Required("scope_type"): str,
        vol.Optional("trigger", default=[]): [LITERAL_SCHEMA],
        vol.Optional("goal", default=[]): [LITERAL_SCHEMA],
        vol.Required("window"): vol.Coerce(float),
        vol.Optional("reward_map", default={}): {
            vol.Optional("achieved", default=1.0): vol.Coerce(float),
            vol.Optional("missed", default=0.0): vol.Coerce(float),
        },
        vol.Optional("trigger_type", default=None): vol.Any(None, str),
        vol.Optional("goal_type", default=None): vol.Any(None, str),
        vol.Optional("link", default=[]): [str],
    }
)

SCHEMA_FILE_SCHEMA = vol.Schema(
    {
        vol.Required("classifiers"): [CLASSIFIER_SCHEMA],
        vol.Optional("object_types", default=[]): [OBJECT_TYPE_SCHEMA],
        vol.Optional("success_functions", default=[]): [SUCCESS_FUNCTION_SCHEMA],
    }
)


def _literal_from(raw: Any) -> Literal:
    if isinstance(raw, str):
        return parse_literal(raw)
    return Literal(raw["classifier_id"], raw["category_code"], raw["polarity"])


def parse_schema(raw: Mapping[str, Any]) -> Schema:
    """Build a Schema from its JSON form without semantic validation."""
    try:
        data = SCHEMA_FILE_SCHEMA(dict(raw))
    except vol.Invalid as exc:
        raise ParseError(f"Malformed schema: {exc}") from exc

    classifiers = tuple(
        ClassifierDef(
            id=item["id"],
            name=item.get("name") or item["id"],
            kind=item["kind"],
            domain=tuple(
                CategoryDef(cat["code"], cat.get("label") or cat["code"])
                for cat in item["domain"]
            ),
            missing_tokens=tuple(item["missing_tokens"]),
            bin_thresholds=(
                None
                if item["bin_thresholds"] is None
                else tuple(item["bin_thresholds"])
            ),
            aliases=tuple(item["aliases"]),
        )
        for item in data["classifiers"]
    )
    object_types = tuple(
        ObjectTypeDef(
            id=item["id"],
            name=item.get("name") or item["id"],
            onto_kind=item["onto_kind"],
            attribute_ids=tuple(item["attribute_ids"]),
            relation_slots=tuple(tuple(slot) for slot in item["relation_slots"]),
            parent_process_type=item["parent_process_type"],
        )
        for item in data["object_types"]
    )
    success_functions = tuple(
        SuccessFunctionDef(
            name=item["name"],
            scope_type=item["scope_type"],
            trigger=tuple(_literal_from(lit) for lit in item["trigger"]),
            goal=tuple(_literal_from(lit) for lit in item["goal"]),
            window=item["window"],
            achieved_reward=item["reward_map"]["achieved"],
            missed_reward=item["reward_map"]["missed"],
            trigger_type=item["trigger_type"],
            goal_type=item["goal_type"],
            link=tuple(item["link"]),
        )
        for item in data["success_functions"]
    )
    return Schema(classifiers, object_types, success_functions)


def _dup(ident: str, what: str) -> Finding:
    return Finding(DuplicateId, ident, f"Duplicate {what} id {ident!r}")


def _dangling(ident: str, where: str) -> Finding:
    return Finding(DanglingReference, ident, f"{where} references unknown {ident!r}")


def _invalid(ident: str, message: str) -> Finding:
    return Finding(InvalidDefinition, ident, message)


def _check_classifier(cdef: ClassifierDef) -> list[Finding]:
    findings: list[Finding] = []
    if not cdef.id or _FORBIDDEN_ID_CHARS & set(cdef.id):
        findings.append(_invalid(cdef.id, f"Classifier id {cdef.id!r} is not usable"))
    if not cdef.domain:
        findings.append(_invalid(cdef.id, f"Classifier {cdef.id!r} has an empty domain"))
    seen: set[str] = set()
    for cat in cdef.domain:
        if not cat.code.strip():
            findings.append(_invalid(cdef.id, f"Classifier {cdef.id!r} has an empty code"))
        elif _FORBIDDEN_CODE_CHARS & set(cat.code):
            findings.append(
                _invalid(cat.code, f"Category code {cat.code!r} contains '&' or ','")
            )
        if cat.code in seen:
            findings.append(_dup(f"{cdef.id}:{cat.code}", "category"))
        seen.add(cat.code)
    if cdef.kind == KIND_BOOLEAN and len(cdef.domain) != 2:
        findings.append(
            _invalid(cdef.id, f"Boolean classifier {cdef.id!r} needs exactly 2 categories")
        )
    if cdef.kind == KIND_BINNED:
        thresholds = cdef.bin_thresholds
        if thresholds is None:
            findings.append(_invalid(cdef.id, f"Binned classifier {cdef.id!r} has no thresholds"))
        else:
            if len(cdef.domain) != len(thresholds) + 1:
                findings.append(
                    _invalid(
                        cdef.id,
                        f"Binned classifier {cdef.id!r} needs {len(thresholds) + 1} categories",
                    )
                )
            if any(lo > hi for lo, hi in zip(thresholds, thresholds[1:])):
                findings.append(
                    _invalid(cdef.id, f"Thresholds of {cdef.id!r} are not ascending")
                )
    elif cdef.bin_thresholds is not None:
        findings.append(
            _invalid(cdef.id, f"Only binned classifiers take thresholds ({cdef.id!r})")
        )
    return findings


def _check_literals(
    schema: Schema, literals: Sequence[Literal], where: str
) -> list[Finding]:
    findings: list[Finding] = []
    for lit in literals:
        if not schema.has_classifier(lit.classifier_id):
            findings.append(_dangling(lit.classifier_id, where))
        elif lit.category_code not in schema.classifier(lit.classifier_id).codes:
            findings.append(_dangling(lit.key, where))
    return findings


def validate_schema(schema: Schema) -> list[Finding]:
    """Return every violation in ``schema``; an empty list means valid."""
    findings: list[Finding] = []

    seen: set[str] = set()
    for cdef in schema.classifiers:
        if cdef.id in seen:
            findings.append(_dup(cdef.id, "classifier"))
        seen.add(cdef.id)
        findings.extend(_check_classifier(cdef))

    seen = set()
    for otype in schema.object_types:
        if otype.id in seen:
            findings.append(_dup(otype.id, "object type"))
        seen.add(otype.id)
        where = f"Object type {otype.id!r}"
        for attr in otype.attribute_ids:
            if not schema.has_classifier(attr):
                findings.append(_dangling(attr, where))
        for role, target in otype.relation_slots:
            if not schema.has_object_type(target):
                findings.append(_dangling(target, f"{where} slot {role!r}"))
        parent = otype.parent_process_type
        if parent is not None:
            if not schema.has_object_type(parent):
                findings.append(_dangling(parent, where))
            elif schema.object_type(parent).onto_kind != ONTO_PROCESS:
                findings.append(_invalid(parent, f"{where}: parent {parent!r} is not a process"))

    seen = set()
    for fn in schema.success_functions:
        if fn.name in seen:
            findings.append(_dup(fn.name, "success function"))
        seen.add(fn.name)
        where = f"Success function {fn.name!r}"
        if not schema.has_object_type(fn.scope_type):
            findings.append(_dangling(fn.scope_type, where))
        elif schema.object_type(fn.scope_type).onto_kind != ONTO_PROCESS:
            findings.append(_invalid(fn.scope_type, f"{where}: scope is not a process"))
        for type_id in (fn.trigger_type, fn.goal_type):
            if type_id is not None and not schema.has_object_type(type_id):
                findings.append(_dangling(type_id, where))
        if (
            fn.trigger_type is not None
            and schema.has_object_type(fn.trigger_type)
            and schema.object_type(fn.trigger_type).onto_kind != ONTO_ACTION
        ):
            findings.append(_invalid(fn.trigger_type, f"{where}: trigger is not an action"))
        for role in fn.link:
            for type_id in (fn.trigger_type, fn.goal_type):
                if (
                    type_id is not None
                    and schema.has_object_type(type_id)
                    and role not in schema.object_type(type_id).roles
                ):
                    findings.append(_dangling(role, f"{where} link on {type_id!r}"))
        findings.extend(_check_literals(schema, fn.trigger, where))
        findings.extend(_check_literals(schema, fn.goal, where))
        if not fn.window > 0:
            findings.append(_invalid(fn.name, f"{where}: window must be positive"))
        for reward in (fn.achieved_reward, fn.missed_reward):
            if not 0.0 <= reward <= 1.0:
                findings.append(_invalid(fn.name, f"{where}: reward {reward} outside [0, 1]"))

    return findings


def raise_findings(findings: Sequence[Finding]) -> None:
    if not findings:
        return
    first = findings[0]
    summary = "; ".join(f.message for f in findings)
    raise first.kind(summary, ident=first.ident, findings=list(findings))


def load_schema(path: str) -> Schema:
    """Load and validate a schema file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise IoError(f"Cannot read schema {path}: {exc}", ident=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"Schema {path} is not JSON: {exc}", ident=path) from exc
    if not isinstance(raw, dict):
        raise ParseError(f"Schema {path} must be a JSON object", ident=path)

    schema = parse_schema(raw)
    raise_findings(validate_schema(schema))
    _LOGGER.debug(
        "Loaded schema %s: %d classifiers, %d object types, %d success functions",
        path,
        len(schema.classifiers),
        len(schema.object_types),
        len(schema.success_functions),
    )
    return schema


def check_schema(schema: Schema) -> Schema:
    """Raise the first finding's error if ``schema`` is invalid."""
    raise_findings(validate_schema(schema))
    return schema


def derive_bins(values: Sequence[float], k: int) -> list[float]:
    """Quantile thresholds at i/k, linear interpolation between order statistics."""
    if k < 1:
        raise ConfigError(f"Bin count must be at least 1, got {k}", ident=k)
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise EmptyInput("Cannot derive bins from no values")
    if k == 1:
        return []
    thresholds = [float(q) for q in np.quantile(data, np.arange(1, k) / k)]
    if len(set(thresholds)) < len(thresholds):
        _LOGGER.warning(
            "Degenerate bins: %d thresholds collapse to %d distinct values",
            len(thresholds),
            len(set(thresholds)),
        )
    return thresholds


def bin_index(thresholds: Sequence[float], x: float) -> int:
    """Number of thresholds strictly below ``x``."""
    return int(np.searchsorted(np.asarray(thresholds, dtype=float), x, side="left"))


def effective_bins(values: Sequence[float], thresholds: Sequence[float]) -> int:
    """Number of distinct bins the values actually occupy."""
    return len({bin_index(thresholds, x) for x in values})


def resolve(
    schema: Schema, classifier: str, raw: Any
) -> Optional[CategoryAssignment]:
    """Map a raw cell to a category; ``None`` means unassigned."""
    cdef = schema.classifier(classifier)
    text = "" if raw is None else str(raw).strip()
    if cdef.is_missing(text):
        return None

    if cdef.kind == KIND_BINNED and cdef.bin_thresholds is not None:
        try:
            number = float(text.replace(",", "."))
        except ValueError:
            number = None
        if number is not None and np.isfinite(number):
            code = cdef.domain[bin_index(cdef.bin_thresholds, number)].code
            return CategoryAssignment(cdef.id, code)

    for cat in cdef.domain:
        if cat.code == text:
            return CategoryAssignment(cdef.id, cat.code)
    for cat in cdef.domain:
        if cat.label == text:
            return CategoryAssignment(cdef.id, cat.code)
    raise UnknownCategory(
        f"Value {text!r} is not in the domain of {cdef.id!r}", ident=text
    )
