"""Tests for literals, schema loading and category resolution."""
import json

import pytest

from cognicore.exceptions import (
    ConfigError,
    DanglingReference,
    DuplicateId,
    EmptyInput,
    InvalidDefinition,
    IoError,
    ParseError,
    UnknownCategory,
    UnknownClassifier,
)
from cognicore.ontology import (
    Literal,
    bin_index,
    check_schema,
    derive_bins,
    effective_bins,
    load_schema,
    parse_literal,
    parse_schema,
    resolve,
    sort_literals,
    validate_schema,
)


def test_parse_literal():
    assert parse_literal("sex=female") == Literal("sex", "female")
    negated = parse_literal(" city != moscow ")
    assert (negated.classifier_id, negated.category_code) == ("city", "moscow")
    assert not negated.positive
    assert str(negated) == "city!=moscow"
    for text in ("", "sex", "=female", "sex=", "!=x"):
        with pytest.raises(ParseError):
            parse_literal(text)


def test_contradicts():
    female = Literal("sex", "female")
    assert female.contradicts(Literal("sex", "male"))
    assert female.contradicts(female.negate())
    assert not female.contradicts(Literal("sex", "male").negate())
    assert not female.contradicts(Literal("city", "moscow"))
    assert not female.negate().contradicts(Literal("sex", "male").negate())


def test_sort_literals_deduplicates():
    lits = [Literal("b", "1"), Literal("a", "2"), Literal("b", "1")]
    assert sort_literals(lits) == (Literal("a", "2"), Literal("b", "1"))


@pytest.mark.parametrize("name", ["cbt.json", "crm.json", "pm.json"])
def test_bundled_schemas_are_valid(schema_path, name):
    schema = load_schema(schema_path(name))
    assert validate_schema(schema) == []
    assert schema.classifiers


def test_headers_resolve_by_id_name_and_alias(cbt_schema, crm_schema):
    assert cbt_schema.classifier_for_header("Social Situation") == "social_situation"
    assert cbt_schema.classifier_for_header("situation") == "social_situation"
    assert cbt_schema.classifier_for_header(" DIAGNOSIS ") == "diagnosis"
    assert crm_schema.classifier_for_header("Пол") == "sex"
    assert crm_schema.classifier_for_header("bdate") is None


def test_findings_are_total():
    raw = {
        "classifiers": [
            {"id": "x", "domain": [{"code": "a"}]},
            {"id": "x", "domain": [{"code": "b"}]},
        ],
        "object_types": [
            {"id": "t", "onto_kind": "entity", "attribute_ids": ["zz"]},
        ],
    }
    with pytest.raises(DuplicateId) as info:
        check_schema(parse_schema(raw))
    kinds = [finding.kind for finding in info.value.findings]
    assert kinds == [DuplicateId, DanglingReference]


@pytest.mark.parametrize(
    "classifier",
    [
        {"id": "b", "kind": "boolean", "domain": [{"code": "1"}, {"code": "2"}, {"code": "3"}]},
        {"id": "n", "kind": "binned_numeric", "domain": [{"code": "lo"}, {"code": "hi"}]},
        {
            "id": "n",
            "kind": "binned_numeric",
            "domain": [{"code": "lo"}, {"code": "hi"}],
            "bin_thresholds": [1, 2],
        },
        {"id": "c", "domain": [{"code": "a,b"}]},
        {"id": "c", "domain": [{"code": "a"}], "bin_thresholds": [1]},
        {"id": "bad=id", "domain": [{"code": "a"}]},
        {"id": "c", "domain": []},
    ],
)
def test_invalid_classifiers(classifier):
    with pytest.raises(InvalidDefinition):
        check_schema(parse_schema({"classifiers": [classifier]}))


def test_success_function_scope_must_be_a_process():
    raw = {
        "classifiers": [{"id": "x", "domain": [{"code": "a"}]}],
        "object_types": [{"id": "e", "onto_kind": "entity", "attribute_ids": ["x"]}],
        "success_functions": [{"name": "f", "scope_type": "e", "window": 1}],
    }
    with pytest.raises(InvalidDefinition):
        check_schema(parse_schema(raw))


def test_malformed_schema():
    with pytest.raises(ParseError):
        parse_schema({"classifiers": [{"id": "x"}]})
    with pytest.raises(ParseError):
        parse_schema({"object_types": []})


def test_load_schema_errors(tmp_path):
    with pytest.raises(IoError):
        load_schema(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ParseError):
        load_schema(str(broken))
    listing = tmp_path / "list.json"
    listing.write_text(json.dumps([]), encoding="utf-8")
    with pytest.raises(ParseError):
        load_schema(str(listing))


def test_resolve(crm_schema):
    assert resolve(crm_schema, "sex", "Женский").category_code == "female"
    assert resolve(crm_schema, "sex", "male").category_code == "male"
    assert resolve(crm_schema, "sex", "Не указана") is None
    assert resolve(crm_schema, "sex", None) is None
    assert resolve(crm_schema, "age", "35").category_code == "30_to_49"
    assert resolve(crm_schema, "age", "29,5").category_code == "under_30"
    assert resolve(crm_schema, "age", "50_plus").category_code == "50_plus"
    with pytest.raises(UnknownCategory):
        resolve(crm_schema, "sex", "other")
    with pytest.raises(UnknownCategory):
        resolve(crm_schema, "age", "old")
    with pytest.raises(UnknownClassifier):
        resolve(crm_schema, "bdate", "1990")


def test_check_literal(crm_schema):
    crm_schema.check_literal(Literal("city", "moscow"))
    with pytest.raises(UnknownCategory):
        crm_schema.check_literal(Literal("city", "paris"))
    with pytest.raises(UnknownClassifier):
        crm_schema.check_literal(Literal("town", "moscow"))


def test_derive_bins():
    assert derive_bins(range(1, 11), 2) == [5.5]
    assert derive_bins([3.0, 1.0], 1) == []
    assert len(derive_bins(range(100), 4)) == 3
    with pytest.raises(ConfigError):
        derive_bins([1.0], 0)
    with pytest.raises(EmptyInput):
        derive_bins([], 2)


def test_bin_index_is_left_closed():
    thresholds = [30, 50]
    assert bin_index(thresholds, 29) == 0
    assert bin_index(thresholds, 30) == 0
    assert bin_index(thresholds, 30.5) == 1
    assert bin_index(thresholds, 50) == 1
    assert bin_index(thresholds, 51) == 2
    assert effective_bins([1, 2, 3], thresholds) == 1
    assert effective_bins([1, 40, 60], thresholds) == 3
