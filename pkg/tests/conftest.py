"""Shared fixtures for cognicore tests."""
from __future__ import annotations

import os

import pytest

import cognicore
from cognicore.ontology import load_schema
from cognicore.store import ObjectRecord, Store

SCHEMA_DIR = os.path.join(os.path.dirname(cognicore.__file__), "schemas")
FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def schema_path():
    def _path(name: str) -> str:
        return os.path.join(SCHEMA_DIR, name)

    return _path


@pytest.fixture
def fixture_path():
    def _path(name: str) -> str:
        return os.path.join(FIXTURE_DIR, name)

    return _path


@pytest.fixture
def cbt_schema(schema_path):
    return load_schema(schema_path("cbt.json"))


@pytest.fixture
def crm_schema(schema_path):
    return load_schema(schema_path("crm.json"))


@pytest.fixture
def pm_schema(schema_path):
    return load_schema(schema_path("pm.json"))


@pytest.fixture
def pm_store(pm_schema):
    """One project, three tasks; results done, done, failed."""
    store = Store(pm_schema)
    store.insert(ObjectRecord("project-1", "project", time_start=0.0))
    for index, status in enumerate(("done", "done", "failed"), start=1):
        store.insert(ObjectRecord(f"task-{index}", "task", {"task_kind": "k0"}))
        store.insert(
            ObjectRecord(
                f"assignment-{index}",
                "assignment",
                {"task_kind": "k0", "position": "e0"},
                relations=(("task", f"task-{index}"),),
                time_start=float(index),
                parent_process="project-1",
            )
        )
        store.insert(
            ObjectRecord(
                f"result-{index}",
                "task_result",
                {"task_kind": "k0", "position": "e0", "status": status},
                relations=(("task", f"task-{index}"),),
                time_start=index + 0.5,
                parent_process="project-1",
            )
        )
    return store
