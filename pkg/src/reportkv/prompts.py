"""Prompt templates, schema rendering and model-response parsing.

Templates are plain text files with ``{{placeholder}}`` slots. Substitution is
a single pass, so data that happens to contain ``{{...}}`` is never expanded.
Model answers are expected inside a fenced block; text handed to the model
inside a fence is escaped so it cannot close the fence early.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ResponseParseError
from .schema import GENERAL_SCOPE, FieldSpec, Schema

logger = logging.getLogger(__name__)

KINDS = ("precorrection", "classification", "extraction", "baseline")
REQUIRED = {
    "precorrection": ("ocr_text",),
    "classification": ("schema", "few_shots", "ocr_text"),
    "extraction": ("schema", "scenario_ids", "ocr_text"),
    "baseline": ("schema", "ocr_text"),
}
MAX_SCENARIOS = 3
IMAGE_ONLY_NOTE = "(no OCR text supplied; read the attached report image)"

_SLOT = re.compile(r"\{\{(\w+)\}\}")
_FENCE = re.compile(r"```([A-Za-z0-9_-]*)[ \t]*\r?\n(.*?)(?:\r?\n)?```", re.DOTALL)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_placeholders: tuple[str, ...] = ()

    def __post_init__(self):
        found = _SLOT.findall(self.body)
        for name in self.required_placeholders:
            if found.count(name) != 1:
                raise TemplateError(f"template {self.id!r} must contain {{{{{name}}}}} exactly once")

    def render(self, **values: str) -> str:
        def sub(m):
            name = m.group(1)
            if name not in values:
                raise TemplateError(f"no value for placeholder {name!r} in template {self.id!r}")
            return values[name]

        return _SLOT.sub(sub, self.body)


@dataclass(frozen=True)
class TemplateSet:
    system: str
    templates: dict[str, PromptTemplate]

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        """Load templates from ``directory``; files that are absent fall back to the bundled ones."""
        bundled = resources.files("reportkv") / "templates"

        def read(name: str) -> str:
            if directory is not None:
                path = Path(directory) / name
                if path.exists():
                    return path.read_text(encoding="utf-8")
            return (bundled / name).read_text(encoding="utf-8")

        templates = {k: PromptTemplate(k, read(f"{k}.txt"), REQUIRED[k]) for k in KINDS}
        return cls(system=read("system.txt").strip(), templates=templates)

    def __getitem__(self, kind: str) -> PromptTemplate:
        return self.templates[kind]


_default_templates: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _default_templates
    if _default_templates is None:
        _default_templates = TemplateSet.load()
    return _default_templates


@dataclass(frozen=True)
class RenderedPrompt:
    kind: str
    system: str
    user: str
    data: str = ""

    @property
    def text(self) -> str:
        return f"{self.system}\n\n{self.user}"


# --- escaping ---------------------------------------------------------------


def escape_block(text: str) -> str:
    return text.replace("\\", "\\\\").replace("`", "\\`")


def unescape_block(text: str) -> str:
    return re.sub(r"\\([\\`])", r"\1", text)


def fence(content: str, lang: str = "") -> str:
    return f"```{lang}\n{content}\n```"


def find_fenced_block(response: str, langs: tuple[str, ...] | None = None) -> str:
    """Contents of the first fenced block (optionally restricted to ``langs``)."""
    for m in _FENCE.finditer(response):
        if langs is None or m.group(1).lower() in langs:
            return m.group(2)
    raise ResponseParseError("no fenced block in model response", response)


# --- schema rendering -------------------------------------------------------


def _q(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _num(x: float) -> str:
    return f"{x:.6g}"


def render_field(spec: FieldSpec) -> str:
    head = f"- key: {_q(spec.key)} | type: {spec.value_type} | unit: {spec.canonical_unit or '-'}"
    lines = [head]
    if spec.aliases:
        lines.append("    printed as: " + ", ".join(_q(a) for a in spec.aliases))
    conversions = [(u, f) for u, f in spec.unit_conversions.items() if u != spec.canonical_unit]
    if conversions:
        rules = "; ".join(f"{u} x {_num(f)} (e.g. 3 {u} -> {_num(3 * f)} {spec.canonical_unit})" for u, f in conversions)
        lines.append(f"    convert to {spec.canonical_unit}: {rules}")
    if spec.options:
        lines.append("    options: " + "; ".join(f"{_q(raw)} -> {_q(label)}" for raw, label in spec.options.items()))
    if spec.description:
        lines.append(f"    note: {spec.description}")
    return "\n".join(lines)


def render_fields_block(schema: Schema, scenario_ids) -> str:
    parts = []
    for sid in scenario_ids:
        sc = schema.scenario(sid)
        parts.append(f"## scenario {sc.id}: {sc.name}")
        parts.extend(render_field(f) for f in sc.fields)
    parts.append(f"## scenario {GENERAL_SCOPE}: General information")
    parts.extend(render_field(f) for f in schema.general_fields)
    return "\n".join(parts)


def render_scenario_list(schema: Schema) -> str:
    if not schema.scenarios:
        return "(none)"
    return "\n".join(f"- {sc.id} | {sc.name} | " + "; ".join(sc.cues) for sc in schema.scenarios)


def render_few_shots(schema: Schema) -> str:
    lines = [
        f"- When {d.condition}, {d.conclusion} (answer id: {sc.id})."
        for sc in schema.scenarios
        for d in sc.few_shot_directives
    ]
    return "\n".join(lines) if lines else "(none)"


# --- builders ---------------------------------------------------------------


def _data_slot(text: str | None) -> tuple[str, str]:
    """Returns (slot text, data). ``None`` means image-only: no OCR text at all."""
    if text is None:
        return IMAGE_ONLY_NOTE, ""
    return escape_block(text), text


def build_precorrection_prompt(raw_ocr_text: str, templates: TemplateSet | None = None) -> RenderedPrompt:
    if not raw_ocr_text.strip():
        raise ValueError("pre-correction needs non-empty OCR text")
    t = templates or default_templates()
    slot, data = _data_slot(raw_ocr_text)
    return RenderedPrompt("precorrection", t.system, t["precorrection"].render(ocr_text=slot), data)


def build_classification_prompt(schema: Schema, masked_text: str | None, templates: TemplateSet | None = None) -> RenderedPrompt:
    t = templates or default_templates()
    slot, data = _data_slot(masked_text)
    user = t["classification"].render(schema=render_scenario_list(schema), few_shots=render_few_shots(schema), ocr_text=slot)
    return RenderedPrompt("classification", t.system, user, data)


def build_extraction_prompt(schema: Schema, scenario_ids, masked_text: str | None,
                            templates: TemplateSet | None = None) -> RenderedPrompt:
    scenario_ids = list(scenario_ids)
    if not scenario_ids:
        raise ValueError("extraction needs at least one scenario id")
    for sid in scenario_ids:
        if schema.scenario(sid) is None:
            raise KeyError(f"unknown scenario id {sid!r}")
    t = templates or default_templates()
    slot, data = _data_slot(masked_text)
    user = t["extraction"].render(
        schema=render_fields_block(schema, scenario_ids),
        scenario_ids=", ".join(scenario_ids),
        ocr_text=slot,
    )
    return RenderedPrompt("extraction", t.system, user, data)


def build_baseline_prompt(schema: Schema, masked_text: str | None, templates: TemplateSet | None = None) -> RenderedPrompt:
    t = templates or default_templates()
    slot, data = _data_slot(masked_text)
    user = t["baseline"].render(schema=render_fields_block(schema, schema.scenario_ids), ocr_text=slot)
    return RenderedPrompt("baseline", t.system, user, data)


# --- response parsing -------------------------------------------------------


def _note(warnings: list[str] | None, msg: str) -> None:
    if warnings is None:
        logger.warning(msg)
    else:
        warnings.append(msg)


def parse_text_response(response: str) -> str:
    """Corrected text from a pre-correction answer."""
    return unescape_block(find_fenced_block(response))


def _load_json_block(response: str):
    block = find_fenced_block(response)
    if not block.strip():
        return None
    try:
        return json.loads(block)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(f"fenced block is not valid JSON: {exc.msg}", response) from exc


def parse_classification_response(response: str, schema: Schema, warnings: list[str] | None = None) -> list[str]:
    obj = _load_json_block(response)
    if obj is None:
        ids = []
    elif isinstance(obj, dict):
        ids = obj.get("scenario_ids", obj.get("scenarios", []))
    else:
        ids = obj
    if not isinstance(ids, list):
        raise ResponseParseError("scenario_ids must be a list", response)
    known = set(schema.scenario_ids)
    out: list[str] = []
    for sid in ids:
        sid = str(sid).strip()
        if sid in out:
            continue
        if sid not in known:
            _note(warnings, f"classifier returned unknown scenario id {sid!r}")
            continue
        out.append(sid)
    if len(out) > MAX_SCENARIOS:
        _note(warnings, f"classifier returned {len(out)} scenarios; keeping the first {MAX_SCENARIOS}")
        out = out[:MAX_SCENARIOS]
    if not out:
        _note(warnings, "classifier returned no known scenario")
    return out


@dataclass(frozen=True)
class RawRecord:
    scenario_id: str
    key: str
    value: str
    unit: str | None = None

    def to_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "key": self.key, "value": self.value, "unit": self.unit}


@dataclass
class RawExtraction:
    records: list[RawRecord] = field(default_factory=list)
    source: str = ""
    warnings: list[str] = field(default_factory=list)


def _text_or_none(v) -> str | None:
    if v is None:
        return None
    s = v if isinstance(v, str) else json.dumps(v, ensure_ascii=False)
    return s if s.strip() else None


def parse_extraction_response(response: str) -> RawExtraction:
    obj = _load_json_block(response)
    raw = RawExtraction(source=response)
    if obj is None:
        return raw
    items = obj.get("records", []) if isinstance(obj, dict) else obj
    if not isinstance(items, list):
        raise ResponseParseError("records must be a list", response)
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raw.warnings.append(f"record {i} is not an object; dropped")
            continue
        sid, key = _text_or_none(item.get("scenario_id")), _text_or_none(item.get("key"))
        if sid is None or key is None:
            missing = "scenario_id" if sid is None else "key"
            raw.warnings.append(f"record {i} has no {missing}; dropped")
            continue
        value = item.get("value")
        value = "" if value is None else (value if isinstance(value, str) else json.dumps(value, ensure_ascii=False))
        raw.records.append(RawRecord(sid.strip(), key.strip(), value, _text_or_none(item.get("unit"))))
    return raw


def render_records(records) -> str:
    """Fenced JSON block in the format :func:`parse_extraction_response` reads."""
    body = json.dumps({"records": [r.to_dict() for r in records]}, ensure_ascii=False, indent=1)
    return fence(body.replace("`", "\\u0060"), "json")


def render_scenario_ids(ids) -> str:
    return fence(json.dumps({"scenario_ids": list(ids)}, ensure_ascii=False), "json")


def render_text_block(text: str) -> str:
    return fence(escape_block(text), "text")
