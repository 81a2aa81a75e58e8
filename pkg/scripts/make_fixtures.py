"""Regenerate the committed test fixtures under tests/fixtures/.

    python3 scripts/make_fixtures.py [--check]

With --check nothing is written; the fixtures are regenerated into a
temporary directory and compared byte for byte with the committed ones.
"""

import argparse
import filecmp
import shutil
import sys
import tempfile
from pathlib import Path

from reportkv.schema import load_default_schema
from reportkv.synth import ErrorRates, SyntheticCorpusConfig, generate_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SPECS = {
    "synthetic20": SyntheticCorpusConfig(n_reports=20, seed=7),
    "method_gap": SyntheticCorpusConfig(
        n_reports=20,
        seed=11,
        ocr_char_confusion_rate=0.2,
        error_rates={
            "chatschema": ErrorRates(value_error_rate=0.03, key_drop_rate=0.01, key_extra_rate=0.01),
            "baseline": ErrorRates(value_error_rate=0.25, key_drop_rate=0.06, key_extra_rate=0.08),
        },
    ),
}


def build(root: Path) -> None:
    schema = load_default_schema()
    for name, spec in SPECS.items():
        target = root / name
        if target.exists():
            shutil.rmtree(target)
        manifest = generate_corpus(spec, schema, target)
        print(f"{name}: {manifest['n_reports']} reports, {manifest['gold_pairs']} gold pairs, "
              f"expected {manifest['expected']}")


def same_tree(a: Path, b: Path) -> bool:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return files_a == files_b and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="verify committed fixtures instead of writing")
    args = ap.parse_args()
    if not args.check:
        build(FIXTURES)
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        build(Path(tmp))
        stale = [n for n in SPECS if not same_tree(Path(tmp) / n, FIXTURES / n)]
    if stale:
        print(f"stale fixtures: {', '.join(stale)}", file=sys.stderr)
        return 1
    print("fixtures up to date")
    return 0


if __name__ == "__main__":
    sys.exit(main())
