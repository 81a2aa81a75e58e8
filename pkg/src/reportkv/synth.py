"""Seeded synthetic report corpora with recorded error injection.

A generated corpus holds OCR files laid out as a tabular bbox grid, rendered
page images, gold annotations, and cassettes for every method x modality
cell. The cassettes are recorded by running the real pipeline against a
simulated model that knows the ground truth and misbehaves exactly as the
manifest says: a fixed number of perturbed values, dropped keys and extra
keys per method. Expected confusion counts are therefore known in advance.
"""

from __future__ import annotations

import io
import json
import random
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path

from .gateway import Cassette, Gateway, ModalityConfig, Request
from .normalize import ExtractionResult, KeyValuePair
from .ocr import OcrDocument, OcrSegment, dump_ocr_document, reconstruct_text
from .pipeline import METHODS, MODALITY_ORDER, Corpus, RunConfig, dumps_json, run_corpus, write_atomic
from .privacy import detect_entities, mask
from .prompts import RawRecord, render_records, render_scenario_ids, render_text_block
from .schema import GENERAL_SCOPE, FieldSpec, Schema, dump_schema, validate_schema

PROVIDER_ID = "mock:synthetic"

NAMES = ("Zhang Wei", "Li Na", "Wang Fang", "Liu Yang", "Chen Jing", "Zhao Lei", "Huang Min", "Zhou Jie",
         "Wu Xia", "Xu Tao", "Sun Li", "Ma Chao", "Hu Bin", "Guo Ying", "Lin Feng")
STRING_POOLS = {
    "Department": ("Hematology", "Endocrinology", "Nephrology", "Cardiology", "General Practice", "内科"),
    "Ward": ("Ward 3A", "Ward 5B", "Ward 7", "Outpatient"),
    "Specimen Type": ("Serum", "Whole blood", "Urine", "Plasma"),
    "Referring Physician": ("Dr. Qian", "Dr. Deng", "Dr. Fan", "Dr. Yao"),
    "Clinical Diagnosis": ("高血压；糖尿病", "慢性肾病", "Anemia", "Hypothyroidism；Obesity", "Routine checkup"),
    "Hospital": ("First Teaching Hospital", "City Central Hospital", "University Hospital"),
    "Urine Color": ("yellow", "pale yellow", "amber"),
    "Visual Acuity Left": ("1.0", "0.8", "1.2", "0.6"),
    "Visual Acuity Right": ("1.0", "0.8", "1.2", "0.5"),
}
CONFUSABLE = {"l": "1", "1": "l", "O": "0", "0": "O"}


@dataclass(frozen=True)
class ErrorRates:
    value_error_rate: float = 0.0
    key_drop_rate: float = 0.0
    key_extra_rate: float = 0.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    n_reports: int = 20
    scenarios_per_report: tuple[int, int] = (1, 3)
    fields_per_scenario: tuple[int, int] = (3, 7)
    general_fields_per_report: tuple[int, int] = (4, 8)
    total_gold_pairs: int | None = None
    error_rates: dict[str, ErrorRates] = field(default_factory=dict)   # method -> rates
    ocr_char_confusion_rate: float = 0.0
    methods: tuple[str, ...] = METHODS
    modalities: tuple[str, ...] = MODALITY_ORDER
    seed: int = 0
    page_width: int = 1200

    def __post_init__(self):
        lo, hi = self.scenarios_per_report
        if not 1 <= lo <= hi <= 3:
            raise ValueError("scenarios_per_report must lie within 1..3")
        if self.n_reports < 1 or self.fields_per_scenario[0] < 1 or self.general_fields_per_report[0] < 0:
            raise ValueError("counts must be positive")
        if not 0.0 <= self.ocr_char_confusion_rate <= 1.0:
            raise ValueError("ocr_char_confusion_rate must be in [0, 1]")
        for m in self.error_rates:
            if m not in METHODS:
                raise ValueError(f"error_rates names unknown method {m!r}")

    def rates(self, method: str) -> ErrorRates:
        return self.error_rates.get(method, ErrorRates())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["error_rates"] = {m: asdict(r) for m, r in self.error_rates.items()}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticCorpusConfig":
        obj = dict(obj)
        for key in ("scenarios_per_report", "fields_per_scenario", "general_fields_per_report", "methods", "modalities"):
            if key in obj:
                obj[key] = tuple(obj[key])
        obj["error_rates"] = {m: ErrorRates(**r) for m, r in obj.get("error_rates", {}).items()}
        return cls(**obj)


# --- value realization ------------------------------------------------------


@dataclass
class Item:
    """One gold pair plus how it is printed on the page."""

    scope: str
    spec: FieldSpec
    label: str
    printed_value: str
    printed_unit: str | None
    gold: object


def _fmt_float(x: float) -> str:
    return f"{x:.2f}"


def _random_datetime(rng: random.Random, date_only: bool) -> datetime:
    base = datetime(2023, 1, 1) + timedelta(days=rng.randrange(700))
    if date_only:
        return datetime(rng.randint(1940, 2005), rng.randint(1, 12), rng.randint(1, 28))
    return base.replace(hour=rng.randint(7, 18), minute=rng.randrange(0, 60, 5))


def _print_datetime(rng: random.Random, dt: datetime, date_only: bool) -> str:
    style = rng.randrange(3)
    if style == 0:
        day = dt.strftime("%Y-%m-%d")
    elif style == 1:
        day = dt.strftime("%Y/%m/%d")
    else:
        day = f"{dt.year}年{dt.month:02d}月{dt.day:02d}日"
    return day if date_only else f"{day} {dt:%H:%M}"


def _digits(rng: random.Random, n: int) -> str:
    return "".join(str(rng.randrange(10)) for _ in range(n))


def realize(rng: random.Random, scope: str, spec: FieldSpec, name: str) -> Item:
    label = rng.choice(spec.names())
    kind = spec.value_type
    unit = spec.canonical_unit
    if kind == "float":
        conversions = [(u, f) for u, f in spec.unit_conversions.items() if u != unit]
        canonical = rng.uniform(0.5, 150.0)
        if conversions and rng.random() < 0.35:
            src, factor = rng.choice(conversions)
            printed = _fmt_float(canonical / factor)
            return Item(scope, spec, label, printed, src, float(printed) * factor)
        printed = _fmt_float(canonical)
        return Item(scope, spec, label, printed, unit, float(printed))
    if kind == "integer":
        value = rng.randint(18, 90) if spec.key == "Age" else rng.randint(12, 180)
        units = [unit] + [u for u, f in spec.unit_conversions.items() if f == 1.0 and u != unit]
        return Item(scope, spec, label, str(value), rng.choice(units) if unit else None, value)
    if kind == "datetime":
        date_only = spec.key == "Date of Birth"
        dt = _random_datetime(rng, date_only)
        gold = dt.date().isoformat() if date_only else dt.isoformat()
        return Item(scope, spec, label, _print_datetime(rng, dt, date_only), None, gold)
    if kind == "dictionary":
        raw = rng.choice(list(spec.options))
        return Item(scope, spec, label, raw, None, spec.options[raw])
    # strings
    if spec.key == "Patient Name":
        value = name
    elif spec.key == "Medical Record Number":
        value = _digits(rng, 8)
    elif spec.key == "ID Number":
        value = str(rng.randint(1, 9)) + _digits(rng, 16) + rng.choice("0123456789X")
    elif spec.key == "Phone Number":
        value = "1" + rng.choice("3456789") + _digits(rng, 9)
    elif spec.key == "Bed Number":
        value = str(rng.randint(1, 60))
    elif spec.key == "Sample Number":
        value = "S" + _digits(rng, 6)
    else:
        value = rng.choice(STRING_POOLS.get(spec.key, ("see comment",)))
    return Item(scope, spec, label, value, None, value)


def perturb(rng: random.Random, spec: FieldSpec, gold) -> str:
    """A canonical-form value that differs from ``gold`` but still type-checks."""
    kind = spec.value_type
    if kind == "float":
        return repr(round(gold * 1.1 + 0.1, 4))
    if kind == "integer":
        return str(gold + rng.randint(1, 9))
    if kind == "dictionary":
        others = [label for label in spec.option_labels if label != gold]
        return rng.choice(others)
    if kind == "datetime":
        if "T" in gold:
            dt = datetime.fromisoformat(gold) + timedelta(hours=1)
            return dt.strftime("%Y-%m-%d %H:%M:%S")
        dt = datetime.fromisoformat(gold)
        # Mimics auto-completion of a partly printed date.
        return dt.replace(day=1 if dt.day != 1 else 2).date().isoformat()
    if "；" in gold:
        return gold.replace("；", ";")
    return gold + "?"


# --- report plan ------------------------------------------------------------


@dataclass
class ReportPlan:
    report_id: str
    name: str
    scenario_ids: list[str]
    items: list[Item] = field(default_factory=list)


def _plan_reports(cfg: SyntheticCorpusConfig, schema: Schema, rng: random.Random) -> list[ReportPlan]:
    if not schema.scenarios:
        raise ValueError("synthetic corpora need a schema with at least one scenario")
    general = {f.key: f for f in schema.general_fields}
    always = [k for k in ("Patient Name", "Gender", "Medical Record Number") if k in general]
    plans = []
    for i in range(cfg.n_reports):
        k = rng.randint(*cfg.scenarios_per_report)
        scenarios = rng.sample(list(schema.scenarios), min(k, len(schema.scenarios)))
        plan = ReportPlan(f"r{i + 1:03d}", rng.choice(NAMES), [sc.id for sc in scenarios])
        n_general = min(len(general), max(len(always), rng.randint(*cfg.general_fields_per_report)))
        others = [key for key in general if key not in always]
        for key in always + rng.sample(others, max(0, n_general - len(always))):
            plan.items.append(realize(rng, GENERAL_SCOPE, general[key], plan.name))
        for sc in scenarios:
            n = min(len(sc.fields), rng.randint(*cfg.fields_per_scenario))
            for spec in sorted(rng.sample(list(sc.fields), n), key=sc.fields.index):
                plan.items.append(realize(rng, sc.id, spec, plan.name))
        plans.append(plan)
    if cfg.total_gold_pairs is not None:
        _fit_total(plans, schema, cfg.total_gold_pairs, rng)
    return plans


def _fit_total(plans: list[ReportPlan], schema: Schema, target: int, rng: random.Random) -> None:
    """Add or remove scenario items until the corpus holds exactly ``target`` gold pairs."""
    def total():
        return sum(len(p.items) for p in plans)

    while total() > target:
        removable = [(p, it) for p in plans for it in p.items
                     if it.scope != GENERAL_SCOPE and sum(x.scope == it.scope for x in p.items) > 1]
        if not removable:
            raise ValueError(f"cannot shrink corpus to {target} gold pairs")
        p, it = rng.choice(removable)
        p.items.remove(it)
    while total() < target:
        addable = []
        for p in plans:
            used = {(it.scope, it.spec.key) for it in p.items}
            for sid in p.scenario_ids:
                addable.extend((p, sid, spec) for spec in schema.scenario(sid).fields if (sid, spec.key) not in used)
        if not addable:
            raise ValueError(f"cannot grow corpus to {target} gold pairs")
        p, sid, spec = rng.choice(addable)
        p.items.append(realize(rng, sid, spec, p.name))
        sc = schema.scenario(sid)
        order = {s: i for i, s in enumerate(p.scenario_ids)}
        p.items.sort(key=lambda it: (-1, 0) if it.scope == GENERAL_SCOPE else (order[it.scope], sc_index(schema, it)))


def sc_index(schema: Schema, item: Item) -> int:
    return schema.scenario(item.scope).fields.index(item.spec)


# --- layout -----------------------------------------------------------------

ROW, SEG_H, MARGIN = 30, 22, 40


def _seg(text: str, x: float, y: float, width: int, conf: float) -> OcrSegment:
    x1 = min(width - 1, x + 9 * len(text) + 10)
    return OcrSegment(text=text, bbox=(float(x), float(y), float(x1), float(y + SEG_H)), confidence=conf)


def layout(plan: ReportPlan, schema: Schema, width: int, rng: random.Random) -> tuple[list[list[OcrSegment]], float]:
    """Rows of segments (a tabular grid) and the page height."""
    rows: list[list[tuple[str, float]]] = []
    general = [it for it in plan.items if it.scope == GENERAL_SCOPE]
    names = [it for it in general if it.spec.key == "Patient Name"]
    rest = [it for it in general if it.spec.key != "Patient Name"]
    for it in names:
        rows.append([(f"{it.label}: {it.printed_value}", MARGIN)])
    for i in range(0, len(rest), 2):
        pair = rest[i:i + 2]
        rows.append([(f"{it.label}: {it.printed_value}" + (f" {it.printed_unit}" if it.printed_unit else ""),
                      MARGIN + j * (width // 2)) for j, it in enumerate(pair)])
    for sid in plan.scenario_ids:
        items = [it for it in plan.items if it.scope == sid]
        if not items:
            continue
        rows.append([(schema.scenario(sid).name, MARGIN)])
        for it in items:
            cells = [(it.label, MARGIN), (it.printed_value, width * 0.53)]
            if it.printed_unit:
                cells.append((it.printed_unit, width * 0.68))
            rows.append(cells)

    out = []
    for r, cells in enumerate(rows):
        y0 = MARGIN + r * ROW
        out.append([_seg(text, x, y0 + rng.randint(-3, 3), width, round(rng.uniform(0.85, 1.0), 3)) for text, x in cells])
    return out, float(MARGIN + len(rows) * ROW + MARGIN)


def confuse(rows: list[list[OcrSegment]], rate: float, rng: random.Random) -> tuple[list[list[OcrSegment]], int]:
    """Swap look-alike characters in item labels (first cell of table rows)."""
    slots = [(r, i) for r, cells in enumerate(rows) if len(cells) > 1 and ":" not in cells[0].text
             for i, ch in enumerate(cells[0].text) if ch in CONFUSABLE]
    chosen = set(rng.sample(slots, round(rate * len(slots)))) if slots else set()
    out = []
    for r, cells in enumerate(rows):
        if any(rr == r for rr, _ in chosen):
            text = "".join(CONFUSABLE[ch] if (r, i) in chosen else ch for i, ch in enumerate(cells[0].text))
            cells = [replace(cells[0], text=text), *cells[1:]]
        out.append(cells)
    return out, len(chosen)


def render_page(rows: list[list[OcrSegment]], size: tuple[float, float]) -> bytes:
    from PIL import Image, ImageDraw, ImageFont

    im = Image.new("L", (int(size[0]), int(size[1])), 255)
    draw = ImageDraw.Draw(im)
    font = ImageFont.load_default()
    for cells in rows:
        for seg in cells:
            draw.text((seg.bbox[0], seg.bbox[1] + 4), seg.text, fill=0, font=font)
    buf = io.BytesIO()
    im.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


# --- simulated model --------------------------------------------------------


@dataclass
class MethodTruth:
    records: list[RawRecord]
    value_errors: list[tuple[str, str]] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)
    extras: list[tuple[str, str]] = field(default_factory=list)


class SimulatedModel:
    """Answers pipeline prompts for one report from its ground truth."""

    provider_id = PROVIDER_ID

    def __init__(self, clean_text: str, scenario_ids: list[str], truths: dict[str, MethodTruth], placeholders: dict[str, str]):
        self.clean_text = clean_text
        self.scenario_ids = scenario_ids
        self.truths = truths
        self.placeholders = placeholders   # original surface -> placeholder

    def send(self, request: Request) -> str:
        kind = request.prompt.kind
        if kind == "precorrection":
            return render_text_block(self.clean_text)
        if kind == "classification":
            return render_scenario_ids(self.scenario_ids)
        truth = self.truths["chatschema" if kind == "extraction" else "baseline"]
        records = truth.records
        if request.modality.send_text:  # the model only ever saw the masked text
            records = [replace(r, value=self.placeholders.get(r.value, r.value)) for r in records]
        return render_records(records)


def _response_value(rng: random.Random, it: Item) -> tuple[str, str | None]:
    """How the simulated model writes a correct value: canonical or as printed."""
    if rng.random() < 0.5:
        return it.printed_value, it.printed_unit
    gold = it.gold
    return (repr(gold) if isinstance(gold, float) else str(gold)), it.spec.canonical_unit


def _extra_record(rng: random.Random, plan: ReportPlan, schema: Schema, used: set) -> tuple[RawRecord, tuple[str, str]]:
    candidates = [(sid, spec) for sid in plan.scenario_ids for spec in schema.scenario(sid).fields if (sid, spec.key) not in used]
    if not candidates:
        candidates = [(sc.id, spec) for sc in schema.scenarios for spec in sc.fields if (sc.id, spec.key) not in used]
    sid, spec = rng.choice(candidates)
    it = realize(rng, sid, spec, plan.name)
    value, unit = _response_value(rng, it)
    return RawRecord(sid, spec.key, value, unit), (sid, spec.key)


def _method_truths(cfg: SyntheticCorpusConfig, plans: list[ReportPlan], schema: Schema) -> dict[str, dict[str, MethodTruth]]:
    slots = [(p.report_id, i) for p in plans for i in range(len(p.items))]
    by_id = {p.report_id: p for p in plans}
    out: dict[str, dict[str, MethodTruth]] = {}
    for method in cfg.methods:
        rng = random.Random(f"{cfg.seed}:{method}")
        rates = cfg.rates(method)
        n = len(slots)
        n_value, n_drop, n_extra = (round(rates.value_error_rate * n), round(rates.key_drop_rate * n),
                                    round(rates.key_extra_rate * n))
        if n_value + n_drop > n:
            raise ValueError(f"{method}: value errors plus dropped keys exceed the {n} gold pairs")
        picked = rng.sample(slots, n_value + n_drop)
        value_set, drop_set = set(picked[:n_value]), set(picked[n_value:])
        extras_per_report: dict[str, int] = {}
        for _ in range(n_extra):
            rid = rng.choice(plans).report_id
            extras_per_report[rid] = extras_per_report.get(rid, 0) + 1

        truths = {}
        for plan in plans:
            truth = MethodTruth(records=[])
            for i, it in enumerate(plan.items):
                key = (it.scope, it.spec.key)
                label = rng.choice([it.spec.key, it.spec.key, it.label])
                if (plan.report_id, i) in drop_set:
                    truth.dropped.append(key)
                    continue
                if (plan.report_id, i) in value_set:
                    truth.value_errors.append(key)
                    truth.records.append(RawRecord(it.scope, label, perturb(rng, it.spec, it.gold), it.spec.canonical_unit))
                    continue
                value, unit = _response_value(rng, it)
                truth.records.append(RawRecord(it.scope, label, value, unit))
            used = {(it.scope, it.spec.key) for it in by_id[plan.report_id].items}
            for _ in range(extras_per_report.get(plan.report_id, 0)):
                record, key = _extra_record(rng, plan, schema, used)
                used.add(key)
                truth.extras.append(key)
                truth.records.insert(rng.randint(0, len(truth.records)), record)
            truths[plan.report_id] = truth
        out[method] = truths
    return out


# --- entry point ------------------------------------------------------------


def gold_result(plan: ReportPlan, schema: Schema) -> ExtractionResult:
    pairs = [KeyValuePair(it.scope, it.spec.key, it.spec.value_type, it.gold, it.spec.canonical_unit) for it in plan.items]
    return ExtractionResult(plan.report_id, pairs, [], schema.version)


def generate_corpus(cfg: SyntheticCorpusConfig, schema: Schema, out_dir: str | Path) -> dict:
    """Write a complete corpus under ``out_dir`` and return its manifest.

    The manifest's ``expected`` counts are checked against a full replay of
    every cell before returning, so a corpus that disagrees with its own
    manifest is never produced.
    """
    problems = validate_schema(schema)
    if problems:
        raise ValueError(f"schema is invalid: {problems[0]}")
    root = Path(out_dir)
    rng = random.Random(cfg.seed)
    plans = _plan_reports(cfg, schema, rng)

    models: dict[str, SimulatedModel] = {}
    confusions_total = 0
    truths = _method_truths(cfg, plans, schema)
    for plan in plans:
        rows, height = layout(plan, schema, cfg.page_width, rng)
        clean = OcrDocument(plan.report_id, (float(cfg.page_width), height), tuple(s for r in rows for s in r))
        noisy_rows, n_conf = confuse(rows, cfg.ocr_char_confusion_rate, rng)
        confusions_total += n_conf
        image_ref = f"images/{plan.report_id}.png"
        doc = OcrDocument(plan.report_id, clean.page_size, tuple(s for r in noisy_rows for s in r), image_ref)
        write_atomic(root / "reports" / f"{plan.report_id}.ocr.json", dump_ocr_document(doc).decode("utf-8"))
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / image_ref).write_bytes(render_page(rows, clean.page_size))
        write_atomic(root / "gold" / f"{plan.report_id}.json", gold_result(plan, schema).dumps())

        clean_text = reconstruct_text(clean)
        _, table = mask(clean_text, detect_entities(clean_text, warnings=[]))
        placeholders = {orig: ph for ph, (_, orig) in table.entries.items()}
        models[plan.report_id] = SimulatedModel(clean_text, plan.scenario_ids,
                                                {m: truths[m][plan.report_id] for m in cfg.methods}, placeholders)

    write_atomic(root / "schema.json", dump_schema(schema).decode("utf-8"))
    corpus = Corpus.load(root)
    expected = {}
    for method in cfg.methods:
        t = truths[method].values()
        n_val, n_drop, n_extra = (sum(len(x.value_errors) for x in t), sum(len(x.dropped) for x in t),
                                  sum(len(x.extras) for x in t))
        gold_total = sum(len(p.items) for p in plans)
        expected[method] = {"corrects": gold_total - n_val - n_drop, "value_mismatches": n_val,
                            "key_fp": n_extra, "key_fn": n_drop}

    for method in cfg.methods:
        for modality in cfg.modalities:
            config = RunConfig(method=method, modality=ModalityConfig.parse(modality), workers=1)
            cassette = Cassette()
            for doc in corpus.documents:
                gw = Gateway(PROVIDER_ID, models[doc.report_id], cassette, mode="record")
                single = Corpus(root, [doc])
                run_corpus(single, config, schema, gateway=gw)
            cassette.save(root / "cassettes" / f"{config.cell}.jsonl")
            outcome = run_corpus(corpus, config, schema)
            got = outcome.counts.__dict__
            if got != expected[method] or any(r.failed for r in outcome.results):
                raise RuntimeError(f"{config.cell}: replay scored {got}, manifest expects {expected[method]}")

    manifest = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "provider": PROVIDER_ID,
        "n_reports": len(plans),
        "gold_pairs": sum(len(p.items) for p in plans),
        "ocr_char_confusions": confusions_total,
        "injected": {
            method: {
                "value_errors": expected[method]["value_mismatches"],
                "dropped_keys": expected[method]["key_fn"],
                "extra_keys": expected[method]["key_fp"],
            }
            for method in cfg.methods
        },
        "expected": expected,
        "reports": {
            p.report_id: {
                "scenarios": p.scenario_ids,
                "gold_pairs": len(p.items),
                **{m: {"value_errors": [list(k) for k in truths[m][p.report_id].value_errors],
                       "dropped_keys": [list(k) for k in truths[m][p.report_id].dropped],
                       "extra_keys": [list(k) for k in truths[m][p.report_id].extras]} for m in cfg.methods},
            }
            for p in plans
        },
    }
    write_atomic(root / "manifest.json", dumps_json(manifest))
    write_atomic(root / "corpus_spec.json", dumps_json(cfg.to_dict()))
    return manifest


def load_corpus_spec(path: str | Path) -> SyntheticCorpusConfig:
    return SyntheticCorpusConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
