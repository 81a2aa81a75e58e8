import pytest
from hypothesis import given, strategies as st

from reportkv.errors import ResponseParseError
from reportkv.prompts import (IMAGE_ONLY_NOTE, PromptTemplate, RawRecord, TemplateError, TemplateSet,
                              build_baseline_prompt, build_classification_prompt, build_extraction_prompt,
                              build_precorrection_prompt, escape_block, fence, parse_classification_response,
                              parse_extraction_response, parse_text_response, render_records, render_text_block,
                              unescape_block)
from reportkv.schema import FieldSpec, ScenarioSpec, Schema


def test_precorrection_names_lookalikes():
    p = build_precorrection_prompt("Hemog1obin 135 g/L")
    assert '"l" and "1"' in p.user or "l/1" in p.user or '"l"' in p.user
    assert "positional" in p.user.lower()
    assert p.user.count("Hemog1obin 135 g/L") == 1


def test_precorrection_rejects_empty():
    with pytest.raises(ValueError):
        build_precorrection_prompt("   ")


def test_precorrection_escapes_fences():
    raw = "WBC ```json\n{} ``` 6.2 \\ end"
    p = build_precorrection_prompt(raw)
    assert "```json\n{}" not in p.user
    # answering with the escaped text round-trips
    assert parse_text_response(render_text_block(raw)) == raw


@given(st.text())
def test_escape_round_trip(text):
    assert unescape_block(escape_block(text)) == text
    assert "```" not in escape_block(text)


def test_classification_lists_every_scenario_once(lab_schema):
    p = build_classification_prompt(lab_schema, "some text")
    for sc in lab_schema.scenarios:
        assert p.user.count(f"- {sc.id} | {sc.name} |") == 1
        for cue in sc.cues:
            assert cue in p.user
    assert "1 and 3" in p.user or "1-3" in p.user or "1 to 3" in p.user


def test_classification_includes_iron_directive(lab_schema):
    p = build_classification_prompt(lab_schema, "x")
    line = next(l for l in p.user.splitlines() if "Total Iron Binding Capacity (TIBC)" in l and "Serum Ferritin (SF)" in l)
    assert "Five Iron Profile" in line or "iron5" in line


def test_classification_empty_text_still_formed(lab_schema):
    p = build_classification_prompt(lab_schema, "")
    assert p.data == "" and "```text" in p.user


def test_task_before_data(lab_schema):
    p = build_classification_prompt(lab_schema, "DATA-MARKER")
    assert p.user.index("Output format") < p.user.index("DATA-MARKER")


def test_extraction_only_selected_fields(lab_schema):
    p = build_extraction_prompt(lab_schema, ["physical"], "text")
    assert "Height" in p.user and "m x 100" in p.user and "300 cm" in p.user
    assert "Hemoglobin" not in p.user
    for g in lab_schema.general_fields:
        assert g.key in p.user


def test_extraction_options_table(lab_schema):
    p = build_extraction_prompt(lab_schema, ["urinalysis"], "text")
    assert '"+" -> "positive"' in p.user and 'Nitrite' in p.user


def test_extraction_errors(lab_schema):
    with pytest.raises(KeyError, match="nope"):
        build_extraction_prompt(lab_schema, ["cbc", "nope"], "t")
    with pytest.raises(ValueError):
        build_extraction_prompt(lab_schema, [], "t")


def test_extraction_scenario_without_fields():
    schema = Schema((ScenarioSpec("empty", "Empty", ("cue",), ()),), (FieldSpec("Patient Name", "string"),))
    p = build_extraction_prompt(schema, ["empty"], "t")
    assert "Patient Name" in p.user


def test_baseline_embeds_whole_schema(lab_schema):
    p = build_baseline_prompt(lab_schema, "text")
    for sc in lab_schema.scenarios:
        for f in sc.fields:
            assert f'"{f.key}"' in p.user
    for g in lab_schema.general_fields:
        assert f'"{g.key}"' in p.user
    assert build_baseline_prompt(lab_schema, "text") == p


def test_baseline_empty_schema():
    p = build_baseline_prompt(Schema((), ()), "text")
    assert "extract" in p.user.lower()


def test_image_only_slot(lab_schema):
    p = build_baseline_prompt(lab_schema, None)
    assert IMAGE_ONLY_NOTE in p.user and p.data == ""


def test_template_placeholder_rules(tmp_path):
    with pytest.raises(TemplateError):
        PromptTemplate("precorrection", "no slot", ("ocr_text",))
    with pytest.raises(TemplateError):
        PromptTemplate("precorrection", "{{ocr_text}} {{ocr_text}}", ("ocr_text",))
    (tmp_path / "precorrection.txt").write_text("FIX: {{ocr_text}}", encoding="utf-8")
    t = TemplateSet.load(tmp_path)
    assert build_precorrection_prompt("abc", t).user == "FIX: abc"


def test_render_is_single_pass():
    t = PromptTemplate("x", "A {{ocr_text}} B", ("ocr_text",))
    assert t.render(ocr_text="{{schema}}") == "A {{schema}} B"


def test_parse_classification_cases(lab_schema):
    assert parse_classification_response(fence('{"scenario_ids": ["cbc"]}', "json"), lab_schema) == ["cbc"]
    notes = []
    ids = parse_classification_response(fence('{"scenario_ids": ["cbc", "cbc", "iron5"]}', "json"), lab_schema, notes)
    assert ids == ["cbc", "iron5"] and notes == []
    ids = parse_classification_response(fence('["cbc", "lipid", "coag", "renal"]', "json"), lab_schema, notes)
    assert ids == ["cbc", "lipid", "coag"] and len(notes) == 1
    notes = []
    assert parse_classification_response("Sure!\n" + fence('{"scenario_ids": ["zzz"]}', "json"), lab_schema, notes) == []
    assert len(notes) == 2


def test_parse_classification_needs_fence(lab_schema):
    with pytest.raises(ResponseParseError) as exc:
        parse_classification_response("cbc", lab_schema)
    assert exc.value.response == "cbc"


def test_parse_extraction_cases():
    recs = [RawRecord("cbc", "WBC", "6.2", "10^9/L"), RawRecord("cbc", "HGB", "135", "g/L"),
            RawRecord("general", "Patient Name", "⟦NAME_1⟧")]
    raw = parse_extraction_response(render_records(recs))
    assert raw.records == recs and raw.warnings == []
    assert parse_extraction_response(fence("", "json")).records == []
    body = '{"records": [{"scenario_id": "cbc", "key": "WBC", "value": "1"}, {"scenario_id": "cbc", "value": "2"},' \
           ' {"scenario_id": "cbc", "key": "RBC", "value": 3}]}'
    raw = parse_extraction_response("here you go\n" + fence(body, "json"))
    assert [r.key for r in raw.records] == ["WBC", "RBC"] and len(raw.warnings) == 1
    assert raw.records[1].value == "3"
    assert raw.source.startswith("here you go")
    with pytest.raises(ResponseParseError):
        parse_extraction_response("no block")


value_text = st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=20)


@given(st.lists(st.builds(RawRecord, st.sampled_from(["cbc", "general"]), st.text(min_size=1, max_size=10).map(lambda s: "k" + s.strip()),
                          value_text, st.none() | st.sampled_from(["g/L", "cm", "`x`"]))))
def test_records_round_trip(records):
    records = [r for r in records if r.key.strip() == r.key]
    assert parse_extraction_response(render_records(records)).records == records
