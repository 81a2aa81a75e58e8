import pytest
from hypothesis import given, settings, strategies as st

from reportkv.errors import CoercionError, OptionError, UnitError
from reportkv.normalize import (DROPPING, ExtractionResult, KeyValuePair, coerce_type, convert_unit, map_option,
                                normalize_extraction, parse_datetime)
from reportkv.prompts import RawExtraction, RawRecord
from reportkv.schema import FieldSpec

ESR = "Erythrocyte Sedimentation Rate (ESR)"
HEIGHT = FieldSpec("Height", "float", (), "cm", {"m": 100.0, "mm": 0.1})
PROTEIN = FieldSpec("Protein", "dictionary", options={"+": "positive", "-": "negative"})
BED = FieldSpec("Bed Number", "string")


def norm(schema, *records):
    return normalize_extraction(RawExtraction(list(records)), schema, "r")


def test_convert_unit_examples():
    assert convert_unit(3, "m", HEIGHT) == 300
    g = FieldSpec("HGB", "float", (), "g/L")
    assert convert_unit(135, "g/L", g) == 135
    with pytest.raises(UnitError) as exc:
        convert_unit(7, "furlong", HEIGHT)
    assert (exc.value.source_unit, exc.value.canonical_unit) == ("furlong", "cm")


def test_map_option_examples():
    assert map_option("+", PROTEIN) == "positive"
    assert map_option(" positive ", PROTEIN) == "positive"
    with pytest.raises(OptionError):
        map_option("++", PROTEIN)


def test_coerce_examples():
    assert coerce_type("42", BED) == "42"
    assert coerce_type("6.20", FieldSpec("WBC", "float")) == 6.2
    assert coerce_type("-3", FieldSpec("n", "integer")) == -3
    assert coerce_type("1e3", FieldSpec("f", "float")) == 1000.0
    with pytest.raises(CoercionError):
        coerce_type("12.5", FieldSpec("n", "integer"))
    with pytest.raises(CoercionError):
        coerce_type("nan", FieldSpec("f", "float"))


@pytest.mark.parametrize("raw,iso", [
    ("2024-05-12", "2024-05-12"),
    ("2024/5/3 08:30", "2024-05-03T08:30:00"),
    ("2024-05-12 08:30:15", "2024-05-12T08:30:15"),
    ("2024年05月12日", "2024-05-12"),
    ("2024年5月12日 9:05", "2024-05-12T09:05:00"),
])
def test_datetime_patterns(raw, iso):
    assert parse_datetime(raw) == iso


@pytest.mark.parametrize("raw", ["2024-05-", "2024-05", "2024/05/", "2024年05月", "2024-02-30", "yesterday"])
def test_incomplete_or_invalid_dates_rejected(raw):
    with pytest.raises(CoercionError):
        parse_datetime(raw)


def test_sed_rate_example(lab_schema):
    result = norm(lab_schema, RawRecord("cbc", "Sed rate", "15", "mm/h"))
    (pair,) = result.pairs
    assert (pair.scenario_id, pair.field_key, pair.value, pair.unit) == ("cbc", ESR, 15.0, "mm/h")
    assert result.warnings == []


def test_three_m_one_token(lab_schema):
    (pair,) = norm(lab_schema, RawRecord("physical", "Height", "3m", None)).pairs
    assert (pair.value, pair.unit) == (300.0, "cm")


def test_plus_to_positive(lab_schema):
    (pair,) = norm(lab_schema, RawRecord("urinalysis", "Nitrite (NIT)", "+", None)).pairs
    assert pair.value == "positive"


def test_integer_to_string(lab_schema):
    (pair,) = norm(lab_schema, RawRecord("general", "Bed Number", "12", None)).pairs
    assert pair.value == "12" and isinstance(pair.value, str)


def test_empty_extraction(lab_schema):
    result = norm(lab_schema)
    assert result.pairs == [] and result.warnings == []


def test_duplicates_keep_first(lab_schema):
    result = norm(lab_schema, RawRecord("cbc", "WBC", "6.2", None), RawRecord("cbc", "Leukocytes", "7.0", None))
    assert [p.value for p in result.pairs] == [6.2]
    assert [w.code for w in result.warnings] == ["duplicate"]


def test_unknown_key_preserved_in_provenance(lab_schema):
    result = norm(lab_schema, RawRecord("cbc", "Mystery", "1", None))
    (issue,) = result.warnings
    assert issue.code == "unknown_key" and issue.record["key"] == "Mystery"


def test_unknown_scenario_routes_to_general(lab_schema):
    (pair,) = norm(lab_schema, RawRecord("nope", "Name", "X", None)).pairs
    assert (pair.scenario_id, pair.field_key) == ("general", "Patient Name")


def test_bad_unit_flagged(lab_schema):
    result = norm(lab_schema, RawRecord("physical", "Height", "3", "furlong"))
    assert result.pairs == [] and result.warnings[0].code == "unit_error"
    assert result.warnings[0].field_key == "Height"


def test_integer_conversion_must_stay_whole(lab_schema):
    bad = norm(lab_schema, RawRecord("general", "Age", "45.5", None))
    assert bad.warnings[0].code == "type_error"


def test_result_file_round_trip(lab_schema):
    result = norm(lab_schema, RawRecord("cbc", "Sed rate", "15", "mm/h"), RawRecord("cbc", "Mystery", "1", None))
    assert ExtractionResult.from_dict(__import__("json").loads(result.dumps())) == result


def canonical_records(schema):
    recs = []
    for sc in schema.scenarios[:4]:
        for f in sc.fields:
            value = {"float": "1.5", "integer": "7", "string": "abc", "datetime": "2024-01-02",
                     "dictionary": (f.option_labels or ("x",))[0]}[f.value_type]
            recs.append(RawRecord(sc.id, f.key, value, f.canonical_unit))
    return recs


def test_idempotent_on_canonical_records(lab_schema):
    first = norm(lab_schema, *canonical_records(lab_schema))
    again = norm(lab_schema, *[RawRecord(p.scenario_id, p.field_key, str(p.value), p.unit) for p in first.pairs])
    assert [(p.match_key, p.value, p.unit) for p in again.pairs] == [(p.match_key, p.value, p.unit) for p in first.pairs]
    assert not [w for w in first.warnings if w.drops_record]


@given(st.floats(0.001, 1e6), st.sampled_from(["m", "mm", "cm"]))
def test_unit_round_trip(v, unit):
    once = convert_unit(v, unit, HEIGHT)
    assert convert_unit(once, "cm", HEIGHT) == once


def raw_records(lab_schema):
    keys = [f.key for sc in lab_schema.scenarios for f in sc.fields][:30] + ["Name", "Sed rate", "??"]
    return st.builds(RawRecord, st.sampled_from(lab_schema.scenario_ids + ["general", "bogus"]), st.sampled_from(keys),
                     st.text(max_size=12) | st.sampled_from(["3m", "+", "12", "2024-05-", "6.2", "1e400"]),
                     st.none() | st.sampled_from(["cm", "m", "g/L", "mm/h", "furlong"]))


def test_totality_and_conservation(lab_schema):
    @settings(max_examples=300, deadline=None)
    @given(st.lists(raw_records(lab_schema), max_size=15))
    def check(records):
        result = norm(lab_schema, *records)
        dropping = [w for w in result.warnings if w.code in DROPPING]
        assert len(records) == len(result.pairs) + len(dropping)
        assert len({p.match_key for p in result.pairs}) == len(result.pairs)
        for p in result.pairs:
            spec = lab_schema.scenario(p.scenario_id).fields if p.scenario_id != "general" else lab_schema.general_fields
            (f,) = [s for s in spec if s.key == p.field_key]
            assert p.unit == f.canonical_unit and p.value_type == f.value_type
            if f.value_type == "dictionary":
                assert p.value in f.option_labels

    check()
