"""Reversible masking of sensitive entities.

Everything sent to a model provider passes through :func:`mask` first. The
:class:`MappingTable` it returns is the only place originals live; it stays
with the report's task and is applied in reverse by :func:`restore_result`.
A persisted mapping sidecar holds plaintext identifiers and must be stored
under access control.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol

logger = logging.getLogger(__name__)

CATEGORIES = ("person_name", "id_number", "phone", "custom")
CATEGORY_TAGS = {"person_name": "NAME", "id_number": "ID", "phone": "PHONE", "custom": "CUSTOM"}
_TAG_CATEGORIES = {v: k for k, v in CATEGORY_TAGS.items()}

OPEN, CLOSE = "⟦", "⟧"
PLACEHOLDER_RE = re.compile(re.escape(OPEN) + r"([A-Z]+)_(\d+)" + re.escape(CLOSE))


@dataclass(frozen=True)
class SensitiveSpan:
    start: int
    end: int
    category: str
    surface: str

    @classmethod
    def at(cls, text: str, start: int, end: int, category: str) -> "SensitiveSpan":
        return cls(start, end, category, text[start:end])

    def check(self, text: str) -> None:
        if not 0 <= self.start < self.end <= len(text):
            raise ValueError(f"span [{self.start}, {self.end}) out of range for text of length {len(text)}")
        if text[self.start:self.end] != self.surface:
            raise ValueError(f"span surface {self.surface!r} does not match text[{self.start}:{self.end}]")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")


@dataclass
class MappingTable:
    report_id: str = ""
    entries: dict[str, tuple[str, str]] = field(default_factory=dict)  # placeholder -> (category, original)

    def placeholder_for(self, category: str, surface: str) -> str | None:
        for ph, entry in self.entries.items():
            if entry == (category, surface):
                return ph
        return None

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "entries": [{"placeholder": ph, "category": cat, "original": orig} for ph, (cat, orig) in self.entries.items()],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MappingTable":
        entries = {}
        for e in obj.get("entries", []):
            entries[e["placeholder"]] = (e["category"], e["original"])
        return cls(report_id=obj.get("report_id", ""), entries=entries)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MappingTable":
        return cls.from_dict(json.loads(text))


# --- detection --------------------------------------------------------------


class Detector(Protocol):
    def __call__(self, text: str) -> Iterable[SensitiveSpan]: ...


@dataclass(frozen=True)
class Pattern:
    category: str
    regex: str
    group: str | int = 0


# Labels followed by a two-word romanized name or 2-4 CJK characters.
_NAME_AFTER_LABEL = (
    r"(?:Patient Name|Name|姓名)\s*[:：]\s*"
    r"(?P<surface>[A-Z][a-z]+(?: [A-Z][a-z]+)?|[一-鿿]{2,4})"
)

DEFAULT_PATTERNS = (
    Pattern("id_number", r"(?<![0-9])[1-9]\d{16}[0-9Xx](?![0-9])"),   # 18-character resident ID
    Pattern("phone", r"(?<![0-9])1[3-9]\d{9}(?![0-9])"),                # mainland mobile
    Pattern("phone", r"(?<![0-9])0\d{2,3}-\d{7,8}(?![0-9])"),          # landline with area code
    Pattern("id_number", r"(?<![0-9])\d{8}(?![0-9])"),                 # 8-digit record numbers
    Pattern("person_name", _NAME_AFTER_LABEL, "surface"),
)


@dataclass(frozen=True)
class RuleDetector:
    """Regex patterns plus an exact-match name lexicon."""

    patterns: tuple[Pattern, ...] = DEFAULT_PATTERNS
    lexicon: tuple[str, ...] = ()

    def __call__(self, text: str) -> list[SensitiveSpan]:
        spans = []
        for pat in self.patterns:
            for m in re.finditer(pat.regex, text):
                start, end = m.span(pat.group)
                if start < end:
                    spans.append(SensitiveSpan(start, end, pat.category, text[start:end]))
        for name in self.lexicon:
            if not name:
                continue
            for m in re.finditer(re.escape(name), text):
                spans.append(SensitiveSpan(m.start(), m.end(), "person_name", name))
        return spans


def normalize_spans(spans: Iterable[SensitiveSpan], warnings: list[str] | None = None) -> list[SensitiveSpan]:
    """Sort spans and resolve overlaps by keeping the longer one (earlier on ties)."""
    ordered = sorted(set(spans), key=lambda s: (-(s.end - s.start), s.start, s.category))
    kept: list[SensitiveSpan] = []
    for span in ordered:
        clash = next((k for k in kept if span.start < k.end and k.start < span.end), None)
        if clash is None:
            kept.append(span)
        elif (span.start, span.end) != (clash.start, clash.end) or span.category != clash.category:
            msg = f"overlapping spans {span.surface!r}@{span.start} and {clash.surface!r}@{clash.start}; kept the longer"
            if warnings is None:
                logger.warning(msg)
            else:
                warnings.append(msg)
    return sorted(kept, key=lambda s: s.start)


def detect_entities(text: str, detector: Detector | None = None, warnings: list[str] | None = None) -> list[SensitiveSpan]:
    detector = detector or RuleDetector()
    spans = list(detector(text))
    for span in spans:
        span.check(text)
    return normalize_spans(spans, warnings)


# --- masking ----------------------------------------------------------------


def mask(text: str, spans: Iterable[SensitiveSpan], report_id: str = "") -> tuple[str, MappingTable]:
    """Replace every span with a ``⟦CAT_n⟧`` placeholder.

    Counters are per category, assigned in reading order; repeated surfaces
    share one placeholder. Further occurrences of a masked surface elsewhere
    in the text are masked as well so no original survives.
    """
    if OPEN in text or CLOSE in text:
        raise ValueError(f"text already contains placeholder brackets {OPEN}{CLOSE}")
    spans = normalize_spans(spans, warnings=[])
    for span in spans:
        span.check(text)

    taken = [(s.start, s.end, s.category, s.surface) for s in spans]
    # Sweep remaining occurrences, longest surfaces first, skipping anything already covered.
    for category, surface in sorted({(s.category, s.surface) for s in spans}, key=lambda cs: (-len(cs[1]), cs)):
        pos = text.find(surface)
        while pos != -1:
            end = pos + len(surface)
            if all(end <= a or pos >= b for a, b, _, _ in taken):
                taken.append((pos, end, category, surface))
                pos = text.find(surface, end)
            else:
                pos = text.find(surface, pos + 1)
    taken.sort()

    table = MappingTable(report_id=report_id)
    counters: dict[str, int] = {}
    pieces, cursor = [], 0
    for start, end, category, surface in taken:
        ph = table.placeholder_for(category, surface)
        if ph is None:
            tag = CATEGORY_TAGS[category]
            counters[tag] = counters.get(tag, 0) + 1
            ph = f"{OPEN}{tag}_{counters[tag]}{CLOSE}"
            table.entries[ph] = (category, surface)
        pieces.append(text[cursor:start])
        pieces.append(ph)
        cursor = end
    pieces.append(text[cursor:])
    return "".join(pieces), table


def restore(text: str, table: MappingTable, warnings: list[str] | None = None) -> str:
    """Put originals back; placeholders missing from ``table`` stay as they are."""

    def sub(m: re.Match) -> str:
        entry = table.entries.get(m.group(0))
        if entry is None:
            msg = f"unknown placeholder {m.group(0)} left in place"
            if warnings is None:
                logger.warning(msg)
            else:
                warnings.append(msg)
            return m.group(0)
        return entry[1]

    return PLACEHOLDER_RE.sub(sub, text)


def restore_result(result, table: MappingTable):
    """Restore placeholders in every string-typed value of an ExtractionResult."""
    from .normalize import Issue

    notes: list[str] = []
    pairs = []
    for pair in result.pairs:
        if isinstance(pair.value, str):
            pair = replace(pair, value=restore(pair.value, table, notes))
        pairs.append(pair)
    issues = [Issue("unknown_placeholder", msg) for msg in notes]
    return replace(result, pairs=pairs, warnings=[*result.warnings, *issues])


def lexicon_detector(names: Iterable[str]) -> Callable[[str], list[SensitiveSpan]]:
    return RuleDetector(lexicon=tuple(names))
