import json
import random
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from reportkv.evaluate import Counts
from reportkv.normalize import coerce_type, load_result
from reportkv.pipeline import Corpus, RunConfig, run_corpus
from reportkv.gateway import ModalityConfig
from reportkv.schema import GENERAL_SCOPE
from reportkv.synth import ErrorRates, SyntheticCorpusConfig, generate_corpus, load_corpus_spec, perturb, realize

ROOT = Path(__file__).resolve().parent.parent


def tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_config_validation():
    with pytest.raises(ValueError):
        ErrorRates(value_error_rate=1.5)
    with pytest.raises(ValueError):
        SyntheticCorpusConfig(scenarios_per_report=(1, 4))
    with pytest.raises(ValueError):
        SyntheticCorpusConfig(n_reports=0)
    with pytest.raises(ValueError):
        SyntheticCorpusConfig(error_rates={"nope": ErrorRates()})
    with pytest.raises(ValueError):
        SyntheticCorpusConfig(ocr_char_confusion_rate=-0.1)


def test_spec_round_trip(tmp_path):
    cfg = SyntheticCorpusConfig(n_reports=3, error_rates={"baseline": ErrorRates(0.1, 0.2, 0.3)}, seed=4)
    (tmp_path / "s.json").write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    assert load_corpus_spec(tmp_path / "s.json") == cfg


def test_same_seed_byte_identical(tmp_path, lab_schema):
    cfg = SyntheticCorpusConfig(n_reports=4, seed=9, ocr_char_confusion_rate=0.3,
                                error_rates={"baseline": ErrorRates(0.1, 0.05, 0.05)}, modalities=("text", "image"))
    generate_corpus(cfg, lab_schema, tmp_path / "a")
    generate_corpus(cfg, lab_schema, tmp_path / "b")
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert a == b
    generate_corpus(SyntheticCorpusConfig(n_reports=4, seed=10, modalities=("text",)), lab_schema, tmp_path / "c")
    assert tree(tmp_path / "c")["gold/r001.json"] != a["gold/r001.json"]


def test_exact_total_and_manifest(tmp_path, lab_schema):
    cfg = load_corpus_spec(Path(__file__).parent / "fixtures" / "spec_100.json")
    manifest = generate_corpus(cfg, lab_schema, tmp_path)
    assert manifest["gold_pairs"] == 100
    assert manifest["injected"]["chatschema"] == {"value_errors": 5, "dropped_keys": 3, "extra_keys": 2}
    golds = [load_result(p) for p in (tmp_path / "gold").glob("*.json")]
    assert sum(len(g.pairs) for g in golds) == 100
    for g in golds:
        scopes = {p.scenario_id for p in g.pairs} - {GENERAL_SCOPE}
        assert 1 <= len(scopes) <= 3


def test_layout_is_a_grid(tmp_path, lab_schema):
    generate_corpus(SyntheticCorpusConfig(n_reports=2, seed=1, modalities=("text",)), lab_schema, tmp_path)
    doc = json.loads((tmp_path / "reports" / "r001.ocr.json").read_text(encoding="utf-8"))
    xs = {seg["bbox"][0] for seg in doc["segments"]}
    assert {40, 636} <= xs
    assert (tmp_path / "images" / "r001.png").read_bytes().startswith(b"\x89PNG")


def test_char_confusion_reaches_ocr_text(tmp_path, lab_schema):
    generate_corpus(SyntheticCorpusConfig(n_reports=3, seed=2, ocr_char_confusion_rate=1.0, modalities=("text",)),
                    lab_schema, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["ocr_char_confusions"] > 0
    # pre-correction repairs it, so scores stay perfect
    outcome = run_corpus(Corpus.load(tmp_path), RunConfig(modality=ModalityConfig.parse("text")), lab_schema)
    assert outcome.counts.value_mismatches == outcome.counts.key_fp == outcome.counts.key_fn == 0


def test_fixture_manifests_match_replays(fixtures_dir, lab_schema):
    for name in ("synthetic20", "method_gap"):
        corpus = Corpus.load(fixtures_dir / name)
        expected = json.loads((fixtures_dir / name / "manifest.json").read_text(encoding="utf-8"))["expected"]
        for method in ("baseline", "chatschema"):
            outcome = run_corpus(corpus, RunConfig(method=method, modality=ModalityConfig.parse("text")), lab_schema)
            assert outcome.counts == Counts(**expected[method])


def test_committed_fixtures_are_current():
    proc = subprocess.run([sys.executable, str(ROOT / "scripts" / "make_fixtures.py"), "--check"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.data())
def test_perturbation_always_changes_value(lab_schema, seed, data):
    rng = random.Random(seed)
    specs = [(sc.id, f) for sc in lab_schema.scenarios for f in sc.fields] + [(GENERAL_SCOPE, f) for f in lab_schema.general_fields]
    scope, spec = data.draw(st.sampled_from(specs))
    item = realize(rng, scope, spec, "Li Na")
    bad = perturb(rng, spec, item.gold)
    assert coerce_type(bad, spec) != item.gold
