"""CSV ingestion of precedents into the object base."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Optional

import pandas as pd

from .const import COLUMN_ID, COLUMN_PARENT_PROCESS, COLUMN_TIME_END, COLUMN_TIME_START
from .exceptions import (
    CognicoreError,
    HeaderMismatch,
    IoError,
    ParseError,
    UnknownCategory,
)
from .ontology import resolve
from .store import ObjectRecord, Store

_LOGGER = logging.getLogger(__name__)

SPECIAL_COLUMNS = (COLUMN_ID, COLUMN_TIME_START, COLUMN_TIME_END, COLUMN_PARENT_PROCESS)


@dataclass(frozen=True)
class Reject:
    line: int
    message: str


@dataclass
class IngestResult:
    type_id: str
    count: int = 0
    rejects: list[Reject] = field(default_factory=list)
    revision: int = 0

    def to_dict(self) -> dict:
        return {
            "type_id": self.type_id,
            "count": self.count,
            "rejects": [{"line": r.line, "message": r.message} for r in self.rejects],
            "revision": self.revision,
        }


def _read(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8", sep=","
        )
    except OSError as exc:
        raise IoError(f"Cannot read {path}: {exc}", ident=path) from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"Cannot parse {path}: {exc}", ident=path) from exc


def map_headers(store: Store, type_id: str, headers) -> dict[str, tuple[str, str]]:
    """Column -> (kind, name) where kind is special, classifier or relation."""
    otype = store.schema.object_type(type_id)
    mapping = {}
    for header in headers:
        name = str(header).strip()
        lowered = name.casefold()
        if lowered in SPECIAL_COLUMNS:
            mapping[header] = ("special", lowered)
            continue
        classifier_id = store.schema.classifier_for_header(name)
        if classifier_id is not None and classifier_id in otype.attribute_ids:
            mapping[header] = ("classifier", classifier_id)
        elif name in otype.roles:
            mapping[header] = ("relation", name)
        else:
            raise HeaderMismatch(
                f"Column {name!r} maps to nothing on {type_id!r}", ident=name
            )
    return mapping


def _time(text: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    return float(text.replace(",", "."))


def ingest(
    path: str, store: Store, type_id: str, id_prefix: Optional[str] = None
) -> IngestResult:
    """Load one CSV of ``type_id`` records; bad rows are rejected, not fatal."""
    frame = _read(path)
    mapping = map_headers(store, type_id, frame.columns)
    prefix = id_prefix or type_id
    result = IngestResult(type_id)

    for index, row in enumerate(frame.itertuples(index=False, name=None)):
        line = index + 2
        specials: dict[str, str] = {}
        assignments: dict[str, str] = {}
        relations: list[tuple[str, str]] = []
        try:
            for header, cell in zip(frame.columns, row):
                kind, name = mapping[header]
                if kind == "special":
                    specials[name] = cell.strip()
                elif kind == "relation":
                    if cell.strip():
                        relations.append((name, cell.strip()))
                else:
                    try:
                        assignment = resolve(store.schema, name, cell)
                    except UnknownCategory as exc:
                        _LOGGER.warning("Line %d: %s; left unassigned", line, exc)
                        assignment = None
                    if assignment is not None:
                        assignments[name] = assignment.category_code
            record = ObjectRecord(
                id=specials.get(COLUMN_ID) or f"{prefix}-{index + 1:06d}",
                type_id=type_id,
                assignments=assignments,
                relations=tuple(relations),
                time_start=_time(specials.get(COLUMN_TIME_START, "")),
                time_end=_time(specials.get(COLUMN_TIME_END, "")),
                parent_process=specials.get(COLUMN_PARENT_PROCESS) or None,
            )
            result.revision = store.insert(record)
        except (CognicoreError, ValueError) as exc:
            _LOGGER.warning("Rejected line %d of %s: %s", line, path, exc)
            result.rejects.append(Reject(line, str(exc)))
            continue
        result.count += 1

    _LOGGER.info(
        "Ingested %d %s records from %s (%d rejected)",
        result.count,
        type_id,
        path,
        len(result.rejects),
    )
    return result
