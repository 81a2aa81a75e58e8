"""Per-report pipeline, corpus runner and the method x modality ablation grid.

Stage order for the two-stage method::

    reconstruct -> pre-correct -> mask -> classify -> extract -> normalize -> restore

The baseline skips classification and sends the whole schema in one prompt.
Image-only runs skip the text stages (pre-correction and masking) and send
the page image with a schema-only prompt.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import GatewayError, ReportKVError
from .evaluate import Counts, MetricsReport, aggregate, error_report, match_pairs
from .gateway import Cassette, Gateway, ModalityConfig, ProviderConfig
from .normalize import ExtractionResult, Issue, load_result, normalize_extraction
from .ocr import OcrDocument, load_ocr_file, reconstruct_text
from .privacy import Detector, MappingTable, detect_entities, mask, restore_result
from .prompts import (TemplateSet, build_baseline_prompt, build_classification_prompt, build_extraction_prompt,
                      build_precorrection_prompt, default_templates, parse_classification_response,
                      parse_extraction_response, parse_text_response)
from .schema import Schema

logger = logging.getLogger(__name__)

METHODS = ("baseline", "chatschema")
MODALITY_ORDER = ("image", "text", "both")


@dataclass(frozen=True)
class RunConfig:
    method: str = "chatschema"
    modality: ModalityConfig = ModalityConfig(True, False)
    provider: ProviderConfig = ProviderConfig()
    mode: str = "replay"
    schema_path: str | None = None
    corpus_path: str | None = None
    output_dir: str | None = None
    cassette_path: str | None = None
    workers: int = 4
    seed: int = 0
    line_overlap_ratio: float = 0.5
    templates_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def cell(self) -> str:
        return f"{self.method}-{self.modality.name}"


def cell_configs(base: RunConfig, methods=METHODS, modalities=MODALITY_ORDER) -> list[RunConfig]:
    return [replace(base, method=m, modality=ModalityConfig.parse(mod)) for m in methods for mod in modalities]


def _failed(doc: OcrDocument, schema: Schema, code: str, message: str, issues) -> ExtractionResult:
    return ExtractionResult(doc.report_id, [], [*issues, Issue(code, message)], schema.version, failed=True)


def run_report(doc: OcrDocument, image: bytes | None, config: RunConfig, schema: Schema, gateway: Gateway,
               detector: Detector | None = None, templates: TemplateSet | None = None) -> ExtractionResult:
    """Run one report; any failure yields an empty result flagged ``failed`` instead of raising."""
    templates = templates or default_templates()
    modality = config.modality
    issues: list[Issue] = []

    if modality.send_text and not doc.segments:
        issues.append(Issue("empty_document", "OCR document has no segments; nothing to extract"))
        return ExtractionResult(doc.report_id, [], issues, schema.version)

    try:
        table = MappingTable(report_id=doc.report_id)
        masked: str | None = None
        if modality.send_text:
            raw_text = reconstruct_text(doc, config.line_overlap_ratio)
            corrected = parse_text_response(
                gateway.complete(build_precorrection_prompt(raw_text, templates), image, modality))
            notes: list[str] = []
            spans = detect_entities(corrected, detector, notes)
            masked, table = mask(corrected, spans, doc.report_id)
            issues.extend(Issue("privacy", n) for n in notes)

        if config.method == "chatschema":
            notes = []
            response = gateway.complete(build_classification_prompt(schema, masked, templates), image, modality)
            scenario_ids = parse_classification_response(response, schema, notes)
            issues.extend(Issue("classification", n) for n in notes)
            if not scenario_ids:
                return ExtractionResult(doc.report_id, [], issues, schema.version)
            prompt = build_extraction_prompt(schema, scenario_ids, masked, templates)
        else:
            prompt = build_baseline_prompt(schema, masked, templates)

        raw = parse_extraction_response(gateway.complete(prompt, image, modality))
        result = normalize_extraction(raw, schema, doc.report_id)
        result = restore_result(result, table)
        return replace(result, warnings=[*issues, *result.warnings])
    except GatewayError as exc:
        return _failed(doc, schema, "gateway_error", str(exc), issues)
    except (ReportKVError, ValueError, KeyError) as exc:
        return _failed(doc, schema, "report_error", f"{type(exc).__name__}: {exc}", issues)


# --- corpus -----------------------------------------------------------------


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1) + "\n"


@dataclass
class Corpus:
    root: Path
    documents: list[OcrDocument]

    @classmethod
    def load(cls, root: str | Path) -> "Corpus":
        root = Path(root)
        paths = sorted((root / "reports").glob("*.ocr.json"))
        return cls(root, [load_ocr_file(p) for p in paths])

    def image(self, doc: OcrDocument) -> bytes | None:
        if not doc.source_image_ref:
            return None
        path = self.root / doc.source_image_ref
        return path.read_bytes() if path.exists() else None

    def gold(self, report_id: str) -> ExtractionResult | None:
        path = self.root / "gold" / f"{report_id}.json"
        return load_result(path) if path.exists() else None

    @property
    def has_gold(self) -> bool:
        return (self.root / "gold").is_dir()

    @property
    def cassette_dir(self) -> Path:
        return self.root / "cassettes"


@dataclass
class CellOutcome:
    config: RunConfig
    results: list[ExtractionResult]
    metrics: MetricsReport | None = None
    counts: Counts | None = None
    errors: list[dict] = field(default_factory=list)

    @property
    def gateway_failures(self) -> list[ExtractionResult]:
        return [r for r in self.results if r.failed and any(w.code == "gateway_error" for w in r.warnings)]


def make_gateway(config: RunConfig, corpus: Corpus | None = None, client=None) -> Gateway:
    if config.mode == "replay":
        source = config.cassette_path or (corpus.cassette_dir if corpus else None)
        if source is None or not Path(source).exists():
            cassette = Cassette()
        else:
            cassette = Cassette.load(source)
        return Gateway.from_config(config.provider, "replay", cassette)
    cassette = Cassette() if config.mode == "record" else None
    return Gateway.from_config(config.provider, config.mode, cassette, client)


def score(corpus: Corpus, results: list[ExtractionResult]) -> tuple[Counts, list[dict]]:
    """Sum confusion counts over a corpus; reports missing from ``results`` count as all key-FN."""
    by_id = {r.report_id: r for r in results}
    total, reports = Counts(), []
    for doc in corpus.documents:
        gold = corpus.gold(doc.report_id)
        if gold is None:
            continue
        pred = by_id.get(doc.report_id) or ExtractionResult(doc.report_id, failed=True)
        b = match_pairs(gold, pred)
        total = total + b.counts()
        reports.append(error_report(b, reconstruct_text(doc)))
    return total, reports


def run_corpus(corpus: Corpus, config: RunConfig, schema: Schema, gateway: Gateway | None = None,
               detector: Detector | None = None) -> CellOutcome:
    gateway = gateway or make_gateway(config, corpus)
    templates = TemplateSet.load(config.templates_dir) if config.templates_dir else default_templates()

    def work(doc: OcrDocument) -> ExtractionResult:
        image = corpus.image(doc) if config.modality.send_image else None
        result = run_report(doc, image, config, schema, gateway, detector, templates)
        logger.info("%s %s: %d pairs%s", config.cell, doc.report_id, len(result.pairs), " (failed)" if result.failed else "")
        return result

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(work, corpus.documents))
    outcome = CellOutcome(config, sorted(results, key=lambda r: r.report_id))
    if corpus.has_gold:
        outcome.counts, outcome.errors = score(corpus, outcome.results)
        outcome.metrics = aggregate([outcome.counts])
    if config.mode == "record" and gateway.cassette is not None and config.output_dir:
        gateway.cassette.save(Path(config.output_dir) / "cassettes" / f"{config.cell}.jsonl")
    return outcome


def write_outcome(outcome: CellOutcome, out_dir: str | Path) -> Path:
    """Write predictions, metrics and error report under ``out_dir/<cell>/``."""
    cell_dir = Path(out_dir) / outcome.config.cell
    for r in outcome.results:
        write_atomic(cell_dir / "pred" / f"{r.report_id}.json", r.dumps())
    if outcome.metrics is not None:
        write_atomic(cell_dir / "metrics.json", dumps_json({
            "cell": outcome.config.cell,
            "method": outcome.config.method,
            "modality": outcome.config.modality.name,
            "counts": outcome.counts.__dict__,
            "metrics": outcome.metrics.to_dict(),
            "csv": outcome.metrics.csv_row(),
        }))
        write_atomic(cell_dir / "error_report.json", dumps_json(outcome.errors))
    return cell_dir


# --- ablation ---------------------------------------------------------------

TABLE_HEADER = "Method,Text,Image,Key-P,Key-R,Key-F1,Acc,P,R,F1"
YES, NO = "✓", "✗"


def table_row(method: str, modality: ModalityConfig, metrics: MetricsReport) -> str:
    marks = [YES if modality.send_text else NO, YES if modality.send_image else NO]
    return ",".join([method, *marks, *metrics.percent_row()])


def render_table(outcomes: list[CellOutcome]) -> str:
    order = {m: i for i, m in enumerate(MODALITY_ORDER)}
    rows = sorted((o for o in outcomes if o.metrics is not None),
                  key=lambda o: (METHODS.index(o.config.method), order[o.config.modality.name]))
    return "\n".join([TABLE_HEADER, *(table_row(o.config.method, o.config.modality, o.metrics) for o in rows)]) + "\n"


def run_ablation(corpus: Corpus, schema: Schema, grid: list[RunConfig], out_dir: str | Path) -> tuple[str, list[CellOutcome]]:
    """Run every grid cell over the corpus; a failing cell is recorded and the rest still run."""
    outcomes, failures = [], {}
    for config in grid:
        try:
            outcome = run_corpus(corpus, config, schema)
        except (ReportKVError, OSError, ValueError) as exc:
            failures[config.cell] = f"{type(exc).__name__}: {exc}"
            logger.error("cell %s failed: %s", config.cell, exc)
            continue
        write_outcome(outcome, out_dir)
        outcomes.append(outcome)
    table = render_table(outcomes)
    write_atomic(Path(out_dir) / "table.csv", table)
    write_atomic(Path(out_dir) / "table.json", dumps_json({
        "cells": [{"cell": o.config.cell, "method": o.config.method, "modality": o.config.modality.name,
                   "counts": o.counts.__dict__ if o.counts else None,
                   "metrics": o.metrics.to_dict() if o.metrics else None,
                   "failed_reports": sum(r.failed for r in o.results)} for o in outcomes],
        "failed_cells": failures,
    }))
    return table, outcomes
