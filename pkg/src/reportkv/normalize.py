"""Deterministic standardization of extracted records against the schema.

The model is asked to standardize names, units, options and types itself;
this module re-applies the same rules and its answer wins. Failures are
per-record issues on the result, never exceptions out of
:func:`normalize_extraction`.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Union

from .errors import AmbiguousFieldError, CoercionError, NormalizationError, OptionError, UnitError
from .prompts import RawExtraction, RawRecord
from .schema import GENERAL_SCOPE, FieldSpec, Schema, fold_name, locate_field

Value = Union[str, int, float]

# Issue codes that remove a record from the result. Rejected records with a
# resolved key still take part in evaluation (see evaluate.predicted_entries).
DROPPING = frozenset({"unknown_key", "ambiguous_key", "unit_error", "option_error", "type_error", "duplicate"})


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    record: dict | None = None
    scenario_id: str | None = None  # resolved scope, when the key resolved
    field_key: str | None = None

    @property
    def drops_record(self) -> bool:
        return self.code in DROPPING

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.record is not None:
            out["record"] = self.record
        if self.field_key is not None:
            out["scenario_id"] = self.scenario_id
            out["key"] = self.field_key
        return out

    @classmethod
    def from_dict(cls, obj) -> "Issue":
        if isinstance(obj, str):
            return cls("note", obj)
        return cls(obj.get("code", "note"), obj.get("message", ""), obj.get("record"),
                   obj.get("scenario_id"), obj.get("key"))


@dataclass(frozen=True)
class KeyValuePair:
    scenario_id: str
    field_key: str
    value_type: str
    value: Value
    unit: str | None = None
    provenance: dict | None = None

    @property
    def match_key(self) -> tuple[str, str]:
        return (self.scenario_id, self.field_key)

    def to_dict(self) -> dict:
        out = {"scenario_id": self.scenario_id, "key": self.field_key, "type": self.value_type,
               "value": self.value, "unit": self.unit}
        if self.provenance is not None:
            out["provenance"] = self.provenance
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "KeyValuePair":
        return cls(obj["scenario_id"], obj["key"], obj.get("type", "string"), obj["value"], obj.get("unit"),
                   obj.get("provenance"))


@dataclass(frozen=True)
class ExtractionResult:
    report_id: str
    pairs: list[KeyValuePair] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)
    schema_version: int = 1
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "schema_version": self.schema_version,
            "failed": self.failed,
            "pairs": [p.to_dict() for p in self.pairs],
            "warnings": [w.to_dict() for w in self.warnings],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=1) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExtractionResult":
        return cls(
            report_id=obj["report_id"],
            pairs=[KeyValuePair.from_dict(p) for p in obj.get("pairs", [])],
            warnings=[Issue.from_dict(w) for w in obj.get("warnings", [])],
            schema_version=obj.get("schema_version", 1),
            failed=bool(obj.get("failed", False)),
        )


def load_result(path: str | Path) -> ExtractionResult:
    return ExtractionResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- primitives -------------------------------------------------------------


def convert_unit(value: float, source_unit: str, spec: FieldSpec) -> float:
    if spec.canonical_unit is None:
        raise UnitError(source_unit, None)
    if source_unit.strip() == spec.canonical_unit:
        return value
    factor = spec.unit_conversions.get(source_unit.strip())
    if factor is None:
        raise UnitError(source_unit, spec.canonical_unit)
    return value * factor


def map_option(raw: str, spec: FieldSpec) -> str:
    token = raw.strip()
    options = spec.options or {}
    if token in options:
        return options[token]
    if token in spec.option_labels:
        return token
    raise OptionError(f"{raw!r} is not an option of {spec.key!r}", raw=raw)


_INT = re.compile(r"[+-]?\d+")
_FLOAT = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_DATETIME_PATTERNS = (
    (re.compile(r"(\d{4})-(\d{1,2})-(\d{1,2})(?:[ T](\d{1,2}):(\d{2})(?::(\d{2}))?)?"), True),
    (re.compile(r"(\d{4})/(\d{1,2})/(\d{1,2})(?: (\d{1,2}):(\d{2})(?::(\d{2}))?)?"), True),
    (re.compile(r"(\d{4})年(\d{1,2})月(\d{1,2})日(?:\s*(\d{1,2}):(\d{2})(?::(\d{2}))?)?"), True),
)


def parse_datetime(raw: str) -> str:
    """Normalize an accepted date(time) to ISO-8601; incomplete dates are rejected, never completed."""
    text = raw.strip()
    for pattern, _ in _DATETIME_PATTERNS:
        m = pattern.fullmatch(text)
        if not m:
            continue
        y, mo, d, hh, mm, ss = m.groups()
        try:
            if hh is None:
                return datetime(int(y), int(mo), int(d)).date().isoformat()
            return datetime(int(y), int(mo), int(d), int(hh), int(mm), int(ss or 0)).isoformat()
        except ValueError as exc:
            raise CoercionError(f"invalid date {raw!r}: {exc}", raw=raw) from None
    raise CoercionError(f"{raw!r} is not a complete date or datetime", raw=raw)


def coerce_type(raw: str, spec: FieldSpec) -> Value:
    text = raw.strip()
    kind = spec.value_type
    if kind == "string":
        return raw if isinstance(raw, str) else str(raw)
    if kind == "dictionary":
        return map_option(text, spec)
    if kind == "datetime":
        return parse_datetime(text)
    if kind == "integer":
        if _INT.fullmatch(text):
            return int(text)
        raise CoercionError(f"{raw!r} is not an integer", raw=raw)
    if kind == "float":
        if _FLOAT.fullmatch(text):
            value = float(text)
            if math.isfinite(value):
                return value
        raise CoercionError(f"{raw!r} is not a number", raw=raw)
    raise CoercionError(f"unsupported value type {kind!r}", raw=raw)


_NUMBER_WITH_UNIT = re.compile(r"\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([^\d\s.+-].*?)\s*")


def _standardize(record: RawRecord, spec: FieldSpec) -> tuple[Value, str | None, list[str]]:
    notes = []
    value_text, unit = record.value, record.unit.strip() if record.unit else None
    numeric = spec.value_type in ("integer", "float")
    if numeric and unit is None and spec.canonical_unit is not None:
        m = _NUMBER_WITH_UNIT.fullmatch(value_text)
        if m:  # "3m" printed as one token
            value_text, unit = m.group(1), m.group(2)
    if not numeric:
        if unit is not None and unit != spec.canonical_unit:
            notes.append(f"ignored unit {unit!r} on {spec.value_type} field {spec.key!r}")
        return coerce_type(value_text, spec), spec.canonical_unit, notes
    if spec.canonical_unit is None:
        if unit is not None:
            notes.append(f"ignored unit {unit!r} on unitless field {spec.key!r}")
        return coerce_type(value_text, spec), None, notes

    if unit is None or unit == spec.canonical_unit:
        return coerce_type(value_text, spec), spec.canonical_unit, notes
    converted = convert_unit(coerce_type(value_text, FieldSpec(spec.key, "float")), unit, spec)
    if spec.value_type == "integer":
        if not float(converted).is_integer():
            raise CoercionError(f"{record.value!r} {unit} is not a whole number of {spec.canonical_unit}", raw=record.value)
        return int(converted), spec.canonical_unit, notes
    return converted, spec.canonical_unit, notes


def normalize_extraction(raw: RawExtraction, schema: Schema, report_id: str) -> ExtractionResult:
    pairs: list[KeyValuePair] = []
    issues: list[Issue] = [Issue("parse", w) for w in raw.warnings]
    seen: set[tuple[str, str]] = set()

    for index, record in enumerate(raw.records):
        provenance = {"index": index, **record.to_dict()}
        scope = record.scenario_id if schema.scenario(record.scenario_id) is not None else None
        try:
            hit = locate_field(schema, scope if scope is not None else GENERAL_SCOPE, record.key)
        except AmbiguousFieldError as exc:
            issues.append(Issue("ambiguous_key", str(exc), provenance))
            continue
        if hit is None:
            unresolved = (record.scenario_id, fold_name(record.key))
            code = "duplicate" if unresolved in seen else "unknown_key"
            seen.add(unresolved)
            issues.append(Issue(code, f"key {record.key!r} does not resolve in scenario {record.scenario_id!r} or general fields",
                                provenance))
            continue
        scope_id, spec = hit
        match_key = (scope_id, spec.key)
        if match_key in seen:
            issues.append(Issue("duplicate", f"duplicate record for {scope_id}/{spec.key}; kept the first", provenance,
                                scope_id, spec.key))
            continue
        seen.add(match_key)
        try:
            value, unit, notes = _standardize(record, spec)
        except NormalizationError as exc:
            issues.append(Issue(exc.code, str(exc), provenance, scope_id, spec.key))
            continue
        issues.extend(Issue("note", n, provenance, scope_id, spec.key) for n in notes)
        pairs.append(KeyValuePair(scope_id, spec.key, spec.value_type, value, unit, provenance))

    return ExtractionResult(report_id=report_id, pairs=pairs, warnings=issues, schema_version=schema.version)
