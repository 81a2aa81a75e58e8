"""Command-line entry point: ``reportkv <command> ...``.

Exit codes: 0 success, 1 domain error (validation, parsing), 2 usage error,
3 transport or provider error. Progress and warnings go to stderr; results
go to files under ``--output`` or to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import GatewayError, ReportKVError, SchemaError
from .evaluate import aggregate, error_report, format_table, match_pairs
from .gateway import ModalityConfig, ProviderConfig
from .normalize import ExtractionResult, load_result
from .ocr import hocr_to_document, load_ocr_file, reconstruct_text, dump_ocr_document
from .pipeline import METHODS, MODALITY_ORDER, Corpus, RunConfig, cell_configs, dumps_json, run_ablation, run_corpus, write_atomic, write_outcome
from .privacy import MappingTable, detect_entities, mask, restore
from .schema import (VALUE_TYPES, FewShotDirective, FieldSpec, ScenarioSpec, add_scenario, dump_schema,
                     load_default_schema, load_schema_file)

logger = logging.getLogger("reportkv")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_TRANSPORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--schema", default=d(None), help="schema file (default: bundled lab schema)")
    parser.add_argument("--config", default=d(None), help="provider config JSON (default: offline mock)")
    parser.add_argument("--output", default=d("results"), help="directory for every file written (default: results)")
    parser.add_argument("--workers", type=int, default=d(4), help="report worker pool size (default: 4)")
    parser.add_argument("--seed", type=int, default=d(None), help="seed for generation and provider decoding")
    parser.add_argument("--quiet", action="store_true", default=d(False), help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reportkv", description="Schema-guided key-value extraction from OCR'd medical reports.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, help_text, parent=sub):
        p = parent.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        return p

    p = command("schema", "validate or extend a schema")
    ssub = p.add_subparsers(dest="action", required=True, metavar="action")
    v = command("validate", "check a schema file and print violations", ssub)
    v.add_argument("file", nargs="?", help="schema file (default: --schema or the bundled schema)")
    command("add-scenario", "interactively add a scenario; writes <output>/schema.v<N>.json", ssub)

    p = command("ocr", "OCR file utilities")
    osub = p.add_subparsers(dest="action", required=True, metavar="action")
    r = command("reconstruct", "print reading-order text of an OCR JSON file", osub)
    r.add_argument("file")
    r.add_argument("--line-overlap", type=float, default=0.5, help="line grouping overlap ratio (default 0.5)")
    h = command("from-hocr", "convert hOCR markup to OCR JSON (best effort)", osub)
    h.add_argument("file")
    h.add_argument("--report-id", help="report id (default: file stem)")

    p = command("mask", "mask sensitive entities in a text file; the mapping sidecar holds plaintext")
    p.add_argument("file")
    p.add_argument("--report-id", help="report id recorded in the sidecar (default: file stem)")
    p = command("unmask", "restore placeholders in a text file from a mapping sidecar")
    p.add_argument("file")
    p.add_argument("--mapping", required=True, help="mapping sidecar written by `mask`")

    p = command("run", "run one method x modality cell over a corpus")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--modality", choices=MODALITY_ORDER, required=True)
    p.add_argument("--corpus", required=True, help="corpus directory (reports/, images/, gold/, cassettes/)")
    p.add_argument("--mode", choices=("replay", "record", "live"), default="replay")
    p.add_argument("--cassette", help="cassette file or directory (default: <corpus>/cassettes)")

    p = command("eval", "score a prediction directory against gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--reports", help="OCR report directory used to tag incomplete dates in the error report")

    p = command("ablate", "run the method x modality grid and write table.csv / table.json")
    p.add_argument("--grid", required=True,
                   help="JSON grid file, or inline 'METHODS:MODALITIES' such as 'chatschema,baseline:image,text,both'")
    p.add_argument("--corpus", help="corpus directory (overrides the grid file)")

    p = command("gen-corpus", "generate a synthetic corpus with recorded cassettes")
    p.add_argument("--spec", required=True, help="JSON corpus spec (SyntheticCorpusConfig fields)")
    return parser


# --- helpers ----------------------------------------------------------------


def _schema(args):
    return load_schema_file(args.schema) if args.schema else load_default_schema()


def _provider(args) -> ProviderConfig:
    config = ProviderConfig.load(args.config) if args.config else ProviderConfig()
    return replace(config, seed=args.seed) if args.seed is not None else config


def _out(args) -> Path:
    return Path(args.output)


# --- commands ---------------------------------------------------------------


def cmd_schema(args, stdin, stdout) -> int:
    if args.action == "validate":
        path = args.file or args.schema
        try:
            schema = load_schema_file(path) if path else load_default_schema()
        except SchemaError as exc:
            for v in exc.violations:
                print(f"{v.path}: {v.rule}: {v.message}", file=stdout)
            if not exc.violations:
                print(f"{path}: {exc}", file=stdout)
            return EXIT_DOMAIN
        print(f"ok: {len(schema.scenarios)} scenarios, {schema.field_count()} fields, "
              f"{len(schema.general_fields)} general fields (version {schema.version})", file=stdout)
        return EXIT_OK
    schema = _schema(args)
    spec = scenario_dialog(schema, stdin, stdout)
    updated = add_scenario(schema, spec)
    target = _out(args) / f"schema.v{updated.version}.json"
    write_atomic(target, dump_schema(updated).decode("utf-8"))
    print(f"wrote {target}", file=stdout)
    return EXIT_OK


def _ask(stdin, stdout, prompt: str) -> str:
    stdout.write(prompt)
    stdout.flush()
    line = stdin.readline()
    if not line:
        raise UsageError("input ended before the dialog finished")
    return line.strip()


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def scenario_dialog(schema, stdin, stdout) -> ScenarioSpec:
    """Ask for a scenario's id, name, cues, directives and fields; re-asks on invalid answers."""
    while True:
        sid = _ask(stdin, stdout, "scenario id: ")
        if sid and schema.scenario(sid) is None:
            break
        print(f"  id must be non-empty and not already used", file=stdout)
    name = _ask(stdin, stdout, "display name: ") or sid
    cues = []
    while not cues:
        cues = _split(_ask(stdin, stdout, "cues (comma separated): "))
    directives = []
    while True:
        condition = _ask(stdin, stdout, "few-shot condition (blank to finish): ")
        if not condition:
            break
        directives.append(FewShotDirective(condition, _ask(stdin, stdout, "  conclusion: ")))
    fields: list[FieldSpec] = []
    while True:
        key = _ask(stdin, stdout, "field key (blank to finish): ")
        if not key:
            break
        value_type = _ask(stdin, stdout, f"  value type {'/'.join(VALUE_TYPES)} [float]: ") or "float"
        if value_type not in VALUE_TYPES:
            print(f"  unknown type {value_type!r}; field skipped", file=stdout)
            continue
        unit = _ask(stdin, stdout, "  canonical unit (blank for none): ") or None
        conversions = {}
        if unit:
            for item in _split(_ask(stdin, stdout, "  conversions unit=factor, comma separated (blank for none): ")):
                u, _, f = item.partition("=")
                try:
                    conversions[u.strip()] = float(f)
                except ValueError:
                    print(f"  ignored conversion {item!r}", file=stdout)
        options = None
        if value_type == "dictionary":
            options = {}
            for item in _split(_ask(stdin, stdout, "  options raw=label, comma separated: ")):
                raw, _, label = item.partition("=")
                options[raw.strip()] = (label or raw).strip()
        aliases = tuple(_split(_ask(stdin, stdout, "  aliases (comma separated): ")))
        fields.append(FieldSpec(key, value_type, aliases, unit, conversions, options))
    return ScenarioSpec(sid, name, tuple(cues), tuple(fields), tuple(directives))


def cmd_ocr(args, stdin, stdout) -> int:
    if args.action == "reconstruct":
        if not 0 < args.line_overlap <= 1:
            raise UsageError("--line-overlap must be in (0, 1]")
        print(reconstruct_text(load_ocr_file(args.file), args.line_overlap), file=stdout)
        return EXIT_OK
    path = Path(args.file)
    doc = hocr_to_document(path.read_text(encoding="utf-8"), args.report_id or path.name.split(".")[0])
    stdout.write(dump_ocr_document(doc).decode("utf-8"))
    return EXIT_OK


def cmd_mask(args, stdin, stdout) -> int:
    path = Path(args.file)
    text = path.read_text(encoding="utf-8")
    notes: list[str] = []
    masked, table = mask(text, detect_entities(text, warnings=notes), args.report_id or path.stem)
    for n in notes:
        logger.warning("%s", n)
    sidecar = _out(args) / f"{path.stem}.mapping.json"
    write_atomic(sidecar, table.dumps())
    logger.warning("mapping sidecar %s holds plaintext identifiers; restrict access to it", sidecar)
    stdout.write(masked)
    return EXIT_OK


def cmd_unmask(args, stdin, stdout) -> int:
    table = MappingTable.loads(Path(args.mapping).read_text(encoding="utf-8"))
    notes: list[str] = []
    stdout.write(restore(Path(args.file).read_text(encoding="utf-8"), table, notes))
    for n in notes:
        logger.warning("%s", n)
    return EXIT_OK


def _report_gateway_failures(outcomes) -> int:
    failed = [(o.config.cell, r) for o in outcomes for r in o.gateway_failures]
    for cell, r in failed:
        message = next(w.message for w in r.warnings if w.code == "gateway_error")
        print(f"error: {cell} {r.report_id}: {message}", file=sys.stderr)
    return EXIT_TRANSPORT if failed else EXIT_OK


def cmd_run(args, stdin, stdout) -> int:
    corpus = Corpus.load(args.corpus)
    config = RunConfig(method=args.method, modality=ModalityConfig.parse(args.modality), provider=_provider(args),
                       mode=args.mode, schema_path=args.schema, corpus_path=args.corpus, output_dir=args.output,
                       cassette_path=args.cassette, workers=args.workers, seed=args.seed or 0)
    outcome = run_corpus(corpus, config, _schema(args))
    cell_dir = write_outcome(outcome, _out(args))
    logger.info("wrote %s", cell_dir)
    if outcome.metrics is not None:
        print(f"{config.cell},{outcome.metrics.csv_row()}", file=stdout)
    return _report_gateway_failures([outcome])


def cmd_eval(args, stdin, stdout) -> int:
    gold_dir, pred_dir = Path(args.gold), Path(args.pred)
    golds = [load_result(p) for p in sorted(gold_dir.glob("*.json"))]
    if not golds:
        raise UsageError(f"no gold annotations in {gold_dir}")
    breakdowns, reports = [], []
    for gold in golds:
        path = pred_dir / f"{gold.report_id}.json"
        pred = load_result(path) if path.exists() else ExtractionResult(gold.report_id, failed=True)
        b = match_pairs(gold, pred)
        source = None
        if args.reports:
            ocr = Path(args.reports) / f"{gold.report_id}.ocr.json"
            source = reconstruct_text(load_ocr_file(ocr)) if ocr.exists() else None
        breakdowns.append(b)
        reports.append(error_report(b, source))
    metrics = aggregate(breakdowns)
    out = _out(args)
    total = sum((b.counts() for b in breakdowns[1:]), breakdowns[0].counts())
    write_atomic(out / "metrics.json", dumps_json({"counts": total.__dict__, "metrics": metrics.to_dict(),
                                                   "csv": metrics.csv_row()}))
    write_atomic(out / "error_report.json", dumps_json(reports))
    print(format_table([("overall", metrics)]), file=stdout)
    return EXIT_OK


def parse_grid(text: str) -> dict:
    """A grid file, or inline ``methods:modalities`` (either side may be ``all``)."""
    path = Path(text)
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    methods, sep, modalities = text.partition(":")
    if not sep:
        raise UsageError(f"--grid {text!r} is neither a file nor 'METHODS:MODALITIES'")

    def items(part, allowed):
        values = list(allowed) if part.strip() in ("", "all") else _split(part)
        bad = [v for v in values if v not in allowed]
        if bad:
            raise UsageError(f"unknown grid entries {bad}")
        return values

    return {"methods": items(methods, METHODS), "modalities": items(modalities, MODALITY_ORDER)}


def cmd_ablate(args, stdin, stdout) -> int:
    grid = parse_grid(args.grid)
    corpus_path = args.corpus or grid.get("corpus")
    if not corpus_path:
        raise UsageError("ablate needs --corpus or a grid file naming a corpus")
    provider = _provider(args)
    if "provider" in grid and not args.config:
        provider = ProviderConfig.from_dict(grid["provider"])
    base = RunConfig(provider=provider, mode=grid.get("mode", "replay"), corpus_path=corpus_path,
                     output_dir=args.output, workers=args.workers)
    configs = cell_configs(base, grid.get("methods", METHODS), grid.get("modalities", MODALITY_ORDER))
    table, outcomes = run_ablation(Corpus.load(corpus_path), _schema(args), configs, _out(args))
    stdout.write(table)
    return _report_gateway_failures(outcomes)


def cmd_gen_corpus(args, stdin, stdout) -> int:
    from .synth import generate_corpus, load_corpus_spec

    spec = load_corpus_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    manifest = generate_corpus(spec, _schema(args), _out(args))
    print(f"wrote {manifest['n_reports']} reports, {manifest['gold_pairs']} gold pairs to {args.output}", file=stdout)
    return EXIT_OK


COMMANDS = {"schema": cmd_schema, "ocr": cmd_ocr, "mask": cmd_mask, "unmask": cmd_unmask, "run": cmd_run,
            "eval": cmd_eval, "ablate": cmd_ablate, "gen-corpus": cmd_gen_corpus}


def main(argv=None, stdin=None, stdout=None) -> int:
    stdin, stdout = stdin or sys.stdin, stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.workers < 1:
        parser.print_usage(sys.stderr)
        print("reportkv: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.WARNING if args.quiet else logging.INFO)
    logger.propagate = False

    try:
        return COMMANDS[args.command](args, stdin, stdout)
    except UsageError as exc:
        print(f"reportkv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ReportKVError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
