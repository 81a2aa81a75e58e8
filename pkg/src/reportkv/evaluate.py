"""Scoring predictions against gold annotations.

Pairs are matched on (scenario id, canonical key). A matched pair is a
*correct* when values agree and a *value mismatch* otherwise; both count as
key true positives. Unmatched predictions are key false positives, unmatched
gold pairs key false negatives. Overall accuracy is corrects / key-TP, and the
overall precision and recall are the key-level ones scaled by that accuracy.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .normalize import ExtractionResult, KeyValuePair

CSV_HEADER = "key_p,key_r,key_f1,acc,p,r,f1"
METRIC_NAMES = ("key_precision", "key_recall", "key_f1", "accuracy", "precision", "recall", "f1")
REL_TOL = 1e-9
INVALID = "invalid"

# Rejections that keep their resolved key take part in matching (as values
# that never equal gold); unresolved keys become key false positives.
_RESOLVED_REJECTIONS = {"unit_error", "option_error", "type_error"}
_UNRESOLVED_REJECTIONS = {"unknown_key", "ambiguous_key"}


@dataclass
class ConfusionBreakdown:
    corrects: list[tuple[KeyValuePair, KeyValuePair]] = field(default_factory=list)
    value_mismatches: list[tuple[KeyValuePair, KeyValuePair]] = field(default_factory=list)
    key_fp: list[KeyValuePair] = field(default_factory=list)
    key_fn: list[KeyValuePair] = field(default_factory=list)
    report_id: str = ""

    @property
    def tp_key(self) -> int:
        return len(self.corrects) + len(self.value_mismatches)

    def counts(self) -> "Counts":
        return Counts(len(self.corrects), len(self.value_mismatches), len(self.key_fp), len(self.key_fn))


@dataclass(frozen=True)
class Counts:
    corrects: int = 0
    value_mismatches: int = 0
    key_fp: int = 0
    key_fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.corrects + other.corrects, self.value_mismatches + other.value_mismatches,
                      self.key_fp + other.key_fp, self.key_fn + other.key_fn)

    @property
    def tp_key(self) -> int:
        return self.corrects + self.value_mismatches


@dataclass(frozen=True)
class MetricsReport:
    n_corrects: int
    tp_key: int
    fp_key: int
    fn_key: int
    key_precision: float
    key_recall: float
    key_f1: float
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)

    def percent_row(self) -> list[str]:
        return [f"{100 * getattr(self, name):.1f}" for name in METRIC_NAMES]

    def csv_row(self) -> str:
        return ",".join(self.percent_row())


# --- value equality ---------------------------------------------------------


def _text(value) -> str:
    return " ".join(unicodedata.normalize("NFC", str(value)).split())


def _number(value) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value))
    except ValueError:
        return None


def values_equal(gold: KeyValuePair, pred: KeyValuePair) -> bool:
    """Type-aware equality; punctuation is significant (";" differs from "；")."""
    if INVALID in (gold.value_type, pred.value_type):
        return False
    if (gold.unit and _text(gold.unit)) != (pred.unit and _text(pred.unit)):
        return False
    numeric = {"integer", "float"}
    if gold.value_type in numeric and pred.value_type in numeric:
        a, b = _number(gold.value), _number(pred.value)
        return a is not None and b is not None and math.isclose(a, b, rel_tol=REL_TOL, abs_tol=0.0)
    if gold.value_type != pred.value_type:
        return False
    return _text(gold.value) == _text(pred.value)


# --- matching ---------------------------------------------------------------


def predicted_entries(result: ExtractionResult) -> list[KeyValuePair]:
    """Valid pairs plus rejected records, which still count against the prediction."""
    if result.failed:
        return []
    entries = list(result.pairs)
    seen = {e.match_key for e in entries}
    for issue in result.warnings:
        rec = issue.record or {}
        if issue.code in _RESOLVED_REJECTIONS and issue.field_key:
            entry = KeyValuePair(issue.scenario_id, issue.field_key, INVALID, rec.get("value", ""), rec.get("unit"), rec)
        elif issue.code in _UNRESOLVED_REJECTIONS and rec:
            entry = KeyValuePair(rec.get("scenario_id", ""), rec.get("key", ""), INVALID, rec.get("value", ""),
                                 rec.get("unit"), rec)
        else:
            continue
        if entry.match_key not in seen:
            seen.add(entry.match_key)
            entries.append(entry)
    return entries


def _index(entries: Iterable[KeyValuePair], what: str) -> dict:
    out = {}
    for e in entries:
        if e.match_key in out:
            raise ValueError(f"duplicate {what} key {e.match_key}")
        out[e.match_key] = e
    return out


def match_entries(gold: list[KeyValuePair], predicted: list[KeyValuePair], report_id: str = "") -> ConfusionBreakdown:
    gold_by_key = _index(gold, "gold")
    pred_by_key = _index(predicted, "predicted")
    b = ConfusionBreakdown(report_id=report_id)
    for key, g in gold_by_key.items():
        p = pred_by_key.get(key)
        if p is None:
            b.key_fn.append(g)
        elif values_equal(g, p):
            b.corrects.append((g, p))
        else:
            b.value_mismatches.append((g, p))
    b.key_fp = [p for key, p in pred_by_key.items() if key not in gold_by_key]
    return b


def match_pairs(gold: ExtractionResult, predicted: ExtractionResult) -> ConfusionBreakdown:
    if gold.report_id != predicted.report_id:
        raise ValueError(f"report ids differ: gold {gold.report_id!r}, predicted {predicted.report_id!r}")
    return match_entries(list(gold.pairs), predicted_entries(predicted), gold.report_id)


# --- metrics ----------------------------------------------------------------


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def harmonic(a: float, b: float) -> float:
    return 2 * a * b / (a + b) if a + b else 0.0


def metrics_from_counts(counts: Counts) -> MetricsReport:
    tp, fp, fn, n = counts.tp_key, counts.key_fp, counts.key_fn, counts.corrects
    if tp == fp == fn == 0:
        return MetricsReport(0, 0, 0, 0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    key_p, key_r, acc = _ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(n, tp)
    p, r = key_p * acc, key_r * acc
    return MetricsReport(n, tp, fp, fn, key_p, key_r, harmonic(key_p, key_r), acc, p, r, harmonic(p, r))


def compute_metrics(b: ConfusionBreakdown | Counts) -> MetricsReport:
    return metrics_from_counts(b if isinstance(b, Counts) else b.counts())


def aggregate(breakdowns: Iterable[ConfusionBreakdown | Counts]) -> MetricsReport:
    """Micro-average: sum raw counts over reports, then compute once."""
    items = list(breakdowns)
    if not items:
        raise ValueError("aggregate needs at least one breakdown")
    total = Counts()
    for b in items:
        total = total + (b if isinstance(b, Counts) else b.counts())
    return metrics_from_counts(total)


def derive_overall(key_precision: float, key_recall: float, accuracy: float) -> tuple[float, float, float]:
    """(precision, recall, f1) implied by key-level rates and overall accuracy."""
    p, r = key_precision * accuracy, key_recall * accuracy
    return p, r, harmonic(p, r)


# --- error analysis ---------------------------------------------------------

_DATE_TOKEN = re.compile(r"(?<!\d)\d{4}(?:[-/][\d/-]*|年[\d月日]*)")
_FULL_DATE = re.compile(r"\d{4}([-/])\d{1,2}\1\d{1,2}|\d{4}年\d{1,2}月\d{1,2}日")


def truncated_dates(text: str) -> list[str]:
    return [m.group(0) for m in _DATE_TOKEN.finditer(text or "") if not _FULL_DATE.fullmatch(m.group(0))]


def _strip_punct(text: str) -> str:
    return "".join(ch for ch in unicodedata.normalize("NFKC", text)
                   if not unicodedata.category(ch).startswith("P") and not ch.isspace())


def mismatch_tag(gold: KeyValuePair, pred: KeyValuePair, source_text: str | None = None) -> str:
    g, p = str(gold.value), str(pred.value)
    raw = str((pred.provenance or {}).get("value", ""))
    if truncated_dates(g) or truncated_dates(p) or truncated_dates(raw):
        return "incomplete-date"
    for t in truncated_dates(source_text or ""):
        stem = t.replace("/", "-")
        if g.startswith(stem) or p.startswith(stem):
            return "incomplete-date"
    if g != p and _strip_punct(g) == _strip_punct(p):
        return "punctuation-only"
    return "other"


def _case(pair: KeyValuePair) -> dict:
    return {"scenario_id": pair.scenario_id, "key": pair.field_key, "value": pair.value, "unit": pair.unit}


def error_report(b: ConfusionBreakdown, source_text: str | None = None) -> dict:
    """Categorized listing of everything that is not a correct pair."""
    return {
        "report_id": b.report_id,
        "value_mismatch": [
            {"scenario_id": g.scenario_id, "key": g.field_key, "gold": g.value, "predicted": p.value,
             "provenance": p.provenance, "tag": mismatch_tag(g, p, source_text)}
            for g, p in b.value_mismatches
        ],
        "key_fp": [{**_case(p), "provenance": p.provenance, "tag": "key match problem"} for p in b.key_fp],
        "key_fn": [{**_case(g), "tag": "key match problem"} for g in b.key_fn],
    }


def format_table(rows: list[tuple[str, MetricsReport]]) -> str:
    """Plain-text table, one row per labelled report, metrics in percent."""
    head = ["", "Key-P", "Key-R", "Key-F1", "Acc", "P", "R", "F1"]
    width = max([len(label) for label, _ in rows] + [4])
    lines = [f"{head[0]:<{width}}  " + "  ".join(f"{h:>6}" for h in head[1:])]
    for label, m in rows:
        lines.append(f"{label:<{width}}  " + "  ".join(f"{v:>6}" for v in m.percent_row()))
    return "\n".join(lines)
