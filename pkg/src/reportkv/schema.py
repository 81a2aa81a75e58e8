"""Extraction schema: scenarios, fields, aliases, units and option maps.

Schemas are immutable values. ``add_scenario`` derives a new schema with a
bumped version instead of mutating the old one, so a running batch can keep
using the version it started with.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import IO, Any, Iterable

from .errors import AmbiguousFieldError, ConflictError, SchemaError

VALUE_TYPES = ("datetime", "integer", "string", "float", "dictionary")

# Scope id used for general-information fields in extraction records and results.
GENERAL_SCOPE = "general"

_WS = re.compile(r"\s+")


def fold_name(name: str) -> str:
    """Case-fold and collapse internal whitespace; the only fuzziness allowed in lookups."""
    return _WS.sub(" ", name.strip()).casefold()


@dataclass(frozen=True)
class FieldSpec:
    key: str
    value_type: str = "string"
    aliases: tuple[str, ...] = ()
    canonical_unit: str | None = None
    unit_conversions: dict[str, float] = field(default_factory=dict)
    options: dict[str, str] | None = None
    description: str = ""

    def names(self) -> tuple[str, ...]:
        return (self.key, *self.aliases)

    @property
    def option_labels(self) -> tuple[str, ...]:
        """Canonical labels in first-seen order."""
        return tuple(dict.fromkeys((self.options or {}).values()))


@dataclass(frozen=True)
class FewShotDirective:
    condition: str
    conclusion: str


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    name: str
    cues: tuple[str, ...]
    fields: tuple[FieldSpec, ...] = ()
    few_shot_directives: tuple[FewShotDirective, ...] = ()


@dataclass(frozen=True)
class Schema:
    scenarios: tuple[ScenarioSpec, ...] = ()
    general_fields: tuple[FieldSpec, ...] = ()
    version: int = 1

    def scenario(self, scenario_id: str) -> ScenarioSpec | None:
        for sc in self.scenarios:
            if sc.id == scenario_id:
                return sc
        return None

    @property
    def scenario_ids(self) -> list[str]:
        return [sc.id for sc in self.scenarios]

    def field_count(self) -> int:
        return sum(len(sc.fields) for sc in self.scenarios)


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.message}"


# --- validation -------------------------------------------------------------


def _field_violations(spec: FieldSpec, path: str) -> list[Violation]:
    out = []
    if not spec.key.strip():
        out.append(Violation(f"{path}.key", "empty_key", "field key must be non-empty"))
    if spec.value_type not in VALUE_TYPES:
        out.append(Violation(f"{path}.value_type", "bad_value_type", f"unknown value type {spec.value_type!r}"))
    if spec.value_type == "dictionary" and not spec.options:
        out.append(Violation(f"{path}.options", "options_required", "dictionary fields need an options map"))
    if spec.value_type != "dictionary" and spec.options is not None:
        out.append(Violation(f"{path}.options", "options_forbidden", "options are only allowed on dictionary fields"))
    for unit, factor in spec.unit_conversions.items():
        upath = f"{path}.unit_conversions[{unit!r}]"
        if not isinstance(factor, (int, float)) or isinstance(factor, bool) or not math.isfinite(factor) or factor <= 0:
            out.append(Violation(upath, "bad_factor", f"conversion factor must be finite and > 0, got {factor!r}"))
        elif unit == spec.canonical_unit and factor != 1:
            out.append(Violation(upath, "canonical_factor", "the canonical unit must map to factor 1"))
    if spec.unit_conversions and spec.canonical_unit is None:
        out.append(Violation(f"{path}.canonical_unit", "missing_canonical_unit", "unit conversions need a canonical unit"))
    return out


def _names_violations(fields: Iterable[FieldSpec], path: str) -> list[Violation]:
    out = []
    keys: dict[str, int] = {}
    owners: dict[str, int] = {}
    for i, spec in enumerate(fields):
        folded_key = fold_name(spec.key)
        if folded_key in keys:
            out.append(Violation(f"{path}[{i}].key", "duplicate_key", f"duplicate field key {spec.key!r} (first at index {keys[folded_key]})"))
            continue
        keys[folded_key] = i
        for name in spec.names():
            folded = fold_name(name)
            if owners.get(folded, i) != i:
                out.append(Violation(f"{path}[{i}].aliases", "alias_collision", f"name {name!r} already used by field index {owners[folded]}"))
            else:
                owners[folded] = i
    return out


def validate_schema(schema: Schema) -> list[Violation]:
    """Return every invariant violation; an empty list means the schema is valid."""
    out: list[Violation] = []
    general_names = {}
    for i, spec in enumerate(schema.general_fields):
        out.extend(_field_violations(spec, f"general_fields[{i}]"))
        for name in spec.names():
            general_names.setdefault(fold_name(name), spec.key)
    out.extend(_names_violations(schema.general_fields, "general_fields"))

    seen_ids: dict[str, int] = {}
    for s, sc in enumerate(schema.scenarios):
        spath = f"scenarios[{s}]"
        if not sc.id.strip():
            out.append(Violation(f"{spath}.id", "empty_id", "scenario id must be non-empty"))
        elif sc.id == GENERAL_SCOPE:
            out.append(Violation(f"{spath}.id", "reserved_id", f"{GENERAL_SCOPE!r} is reserved for general fields"))
        elif sc.id in seen_ids:
            out.append(Violation(f"{spath}.id", "duplicate_scenario_id", f"scenario id {sc.id!r} already used at index {seen_ids[sc.id]}"))
        else:
            seen_ids[sc.id] = s
        if not sc.cues:
            out.append(Violation(f"{spath}.cues", "empty_cues", "a scenario needs at least one cue"))
        for f, spec in enumerate(sc.fields):
            fpath = f"{spath}.fields[{f}]"
            out.extend(_field_violations(spec, fpath))
            # Scenario keys may not collide with general names; aliases may (explicit shadowing).
            if fold_name(spec.key) in general_names:
                out.append(Violation(f"{fpath}.key", "general_collision",
                                     f"key {spec.key!r} collides with general field {general_names[fold_name(spec.key)]!r}; declare it as an alias instead"))
        out.extend(_names_violations(sc.fields, f"{spath}.fields"))
    return out


# --- lookup -----------------------------------------------------------------


def _matches(spec: FieldSpec, folded: str) -> bool:
    return any(fold_name(n) == folded for n in spec.names())


def locate_field(schema: Schema, scenario_id: str | None, surface_name: str) -> tuple[str, FieldSpec] | None:
    """Like :func:`resolve_field` but also returns the scope (scenario id or ``"general"``)."""
    folded = fold_name(surface_name)
    if scenario_id is not None:
        sc = schema.scenario(scenario_id)
        if sc is not None:
            for spec in sc.fields:
                if _matches(spec, folded):
                    return sc.id, spec
        for spec in schema.general_fields:
            if _matches(spec, folded):
                return GENERAL_SCOPE, spec
        return None

    candidates = [(sc.id, spec) for sc in schema.scenarios for spec in sc.fields if _matches(spec, folded)]
    candidates += [(GENERAL_SCOPE, spec) for spec in schema.general_fields if _matches(spec, folded)]
    if len(candidates) > 1:
        raise AmbiguousFieldError(surface_name, [(scope, spec.key) for scope, spec in candidates])
    return candidates[0] if candidates else None


def resolve_field(schema: Schema, scenario_id: str | None, surface_name: str) -> FieldSpec | None:
    """Find the field named ``surface_name`` (key or alias).

    With a scenario id, that scenario's fields are searched before the general
    fields, so scenario aliases shadow general names. Without one, every scope
    is searched and more than one hit raises :class:`AmbiguousFieldError`.
    Returns None when nothing matches.
    """
    hit = locate_field(schema, scenario_id, surface_name)
    return hit[1] if hit else None


def add_scenario(schema: Schema, spec: ScenarioSpec) -> Schema:
    if schema.scenario(spec.id) is not None:
        raise ConflictError(f"scenario id {spec.id!r} already exists")
    updated = replace(schema, scenarios=(*schema.scenarios, spec), version=schema.version + 1)
    violations = validate_schema(updated)
    if violations:
        raise SchemaError(f"scenario {spec.id!r} is invalid", violations)
    return updated


# --- (de)serialization ------------------------------------------------------


def _req(obj: dict, key: str, path: str, kinds) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object", path=path)
    if key not in obj:
        raise SchemaError(f"{path}.{key}: missing", path=f"{path}.{key}")
    value = obj[key]
    if not isinstance(value, kinds):
        raise SchemaError(f"{path}.{key}: wrong type {type(value).__name__}", path=f"{path}.{key}")
    return value


def _str_list(obj: dict, key: str, path: str) -> tuple[str, ...]:
    items = obj.get(key, [])
    if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
        raise SchemaError(f"{path}.{key}: expected a list of strings", path=f"{path}.{key}")
    return tuple(items)


def field_from_dict(obj: dict, path: str = "field") -> FieldSpec:
    key = _req(obj, "key", path, str)
    value_type = _req(obj, "value_type", path, str)
    conversions = obj.get("unit_conversions") or {}
    if not isinstance(conversions, dict):
        raise SchemaError(f"{path}.unit_conversions: expected an object", path=f"{path}.unit_conversions")
    options = obj.get("options")
    if options is not None and not (isinstance(options, dict) and all(isinstance(v, str) for v in options.values())):
        raise SchemaError(f"{path}.options: expected an object of strings", path=f"{path}.options")
    unit = obj.get("canonical_unit")
    if unit is not None and not isinstance(unit, str):
        raise SchemaError(f"{path}.canonical_unit: expected a string or null", path=f"{path}.canonical_unit")
    return FieldSpec(
        key=key,
        value_type=value_type,
        aliases=_str_list(obj, "aliases", path),
        canonical_unit=unit,
        unit_conversions=dict(conversions),
        options=dict(options) if options is not None else None,
        description=obj.get("description") or "",
    )


def field_to_dict(spec: FieldSpec) -> dict:
    return {
        "key": spec.key,
        "aliases": list(spec.aliases),
        "value_type": spec.value_type,
        "canonical_unit": spec.canonical_unit,
        "unit_conversions": dict(spec.unit_conversions),
        "options": dict(spec.options) if spec.options is not None else None,
        "description": spec.description,
    }


def scenario_from_dict(obj: dict, path: str = "scenario") -> ScenarioSpec:
    fields = _req(obj, "fields", path, list) if "fields" in obj else []
    directives = obj.get("few_shot_directives", [])
    if not isinstance(directives, list):
        raise SchemaError(f"{path}.few_shot_directives: expected a list", path=f"{path}.few_shot_directives")
    return ScenarioSpec(
        id=_req(obj, "id", path, str),
        name=_req(obj, "name", path, str),
        cues=_str_list(obj, "cues", path),
        fields=tuple(field_from_dict(f, f"{path}.fields[{i}]") for i, f in enumerate(fields)),
        few_shot_directives=tuple(
            FewShotDirective(_req(d, "condition", f"{path}.few_shot_directives[{i}]", str),
                             _req(d, "conclusion", f"{path}.few_shot_directives[{i}]", str))
            for i, d in enumerate(directives)
        ),
    )


def scenario_to_dict(sc: ScenarioSpec) -> dict:
    return {
        "id": sc.id,
        "name": sc.name,
        "cues": list(sc.cues),
        "few_shot_directives": [{"condition": d.condition, "conclusion": d.conclusion} for d in sc.few_shot_directives],
        "fields": [field_to_dict(f) for f in sc.fields],
    }


def schema_from_dict(obj: Any) -> Schema:
    if not isinstance(obj, dict):
        raise SchemaError("top level: expected an object", path="$")
    scenarios = obj.get("scenarios", [])
    general = obj.get("general_fields", [])
    if not isinstance(scenarios, list):
        raise SchemaError("scenarios: expected a list", path="scenarios")
    if not isinstance(general, list):
        raise SchemaError("general_fields: expected a list", path="general_fields")
    version = obj.get("version", 1)
    if not isinstance(version, int) or isinstance(version, bool):
        raise SchemaError("version: expected an integer", path="version")
    return Schema(
        scenarios=tuple(scenario_from_dict(s, f"scenarios[{i}]") for i, s in enumerate(scenarios)),
        general_fields=tuple(field_from_dict(f, f"general_fields[{i}]") for i, f in enumerate(general)),
        version=version,
    )


def schema_to_dict(schema: Schema) -> dict:
    return {
        "version": schema.version,
        "scenarios": [scenario_to_dict(sc) for sc in schema.scenarios],
        "general_fields": [field_to_dict(f) for f in schema.general_fields],
    }


def dump_schema(schema: Schema) -> bytes:
    return (json.dumps(schema_to_dict(schema), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def load_schema(source: bytes | str | IO[bytes] | IO[str]) -> Schema:
    """Parse and validate a schema document.

    Raises :class:`SchemaError` carrying either the JSON line number / field
    path of a structural problem, or the full list of violations.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        obj = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    schema = schema_from_dict(obj)
    violations = validate_schema(schema)
    if violations:
        raise SchemaError(f"{len(violations)} schema violation(s)", violations)
    return schema


def load_schema_file(path: str | Path) -> Schema:
    with open(path, "rb") as fh:
        return load_schema(fh)


def default_schema_path() -> Path:
    """Path of the bundled 13-scenario lab report schema."""
    return Path(str(resources.files("reportkv") / "data" / "lab_schema.json"))


def load_default_schema() -> Schema:
    return load_schema_file(default_schema_path())
