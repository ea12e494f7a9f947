"""Builders shared by the test modules."""
from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from cognicore.ontology import Schema, check_schema, parse_schema
from cognicore.store import ObjectRecord, Store


def flat_schema(
    classifiers: Mapping[str, Sequence[str]], type_id: str = "case"
) -> Schema:
    """One entity type carrying every classifier."""
    raw = {
        "classifiers": [
            {"id": cid, "domain": [{"code": code} for code in codes]}
            for cid, codes in classifiers.items()
        ],
        "object_types": [
            {"id": type_id, "onto_kind": "entity", "attribute_ids": list(classifiers)}
        ],
    }
    return check_schema(parse_schema(raw))


def fill(
    schema: Schema,
    rows: Iterable[Mapping[str, str]],
    type_id: str = "case",
    store: Optional[Store] = None,
) -> Store:
    store = store or Store(schema)
    for index, row in enumerate(rows):
        store.insert(ObjectRecord(f"{type_id}-{index:05d}", type_id, dict(row)))
    return store


def planted_rows(
    seed: int, size: int = 500, noise: int = 8, share: float = 0.7
) -> list[dict]:
    """Three planted rules among noise attributes, sampled per record.

    a=1 => t1=yes at 0.9, b=1 => t2=yes at 0.8, c=1 => t3=yes at 0.95; each
    cause fires with probability ``share`` and a target is yes at 0.3 otherwise.
    """
    rng = np.random.default_rng(seed)
    columns: dict[str, list[str]] = {}
    for cause, target, rate in (("a", "t1", 0.9), ("b", "t2", 0.8), ("c", "t3", 0.95)):
        fired = rng.random(size) < share
        outcome = rng.random(size) < np.where(fired, rate, 0.3)
        columns[cause] = ["1" if v else "0" for v in fired]
        columns[target] = ["yes" if v else "no" for v in outcome]
    for k in range(noise):
        columns[f"n{k}"] = [str(v) for v in rng.integers(0, 2, size)]
    return [{key: values[i] for key, values in columns.items()} for i in range(size)]


def planted_schema(noise: int = 8) -> Schema:
    classifiers: dict[str, Sequence[str]] = {}
    for cause, target in (("a", "t1"), ("b", "t2"), ("c", "t3")):
        classifiers[cause] = ("1", "0")
        classifiers[target] = ("yes", "no")
    for k in range(noise):
        classifiers[f"n{k}"] = ("1", "0")
    return flat_schema(classifiers)


def binary_schema(attributes: int) -> Schema:
    return flat_schema({f"x{k}": ("0", "1") for k in range(attributes)})


def noise_rows(seed: int, size: int = 200, attributes: int = 8) -> list[dict]:
    """Independent uniform binary attributes."""
    values = np.random.default_rng(seed).integers(0, 2, size=(size, attributes))
    return [{f"x{k}": str(v) for k, v in enumerate(row)} for row in values]


def cluster_rows(
    seed: int, per_cluster: int = 50, clusters: int = 3, block: int = 4, noise: float = 0.1
) -> tuple[list[dict], list[int]]:
    """Prototype k sets attributes of block k to 1; every bit flips with ``noise``.

    Returns the rows and the cluster each row was drawn from.
    """
    rng = np.random.default_rng(seed)
    width = clusters * block
    rows, labels = [], []
    for label in range(clusters):
        proto = np.zeros(width, dtype=int)
        proto[label * block : (label + 1) * block] = 1
        for _ in range(per_cluster):
            bits = np.where(rng.random(width) < noise, 1 - proto, proto)
            rows.append({f"x{k}": str(v) for k, v in enumerate(bits)})
            labels.append(label)
    return rows, labels
