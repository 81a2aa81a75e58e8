import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from reportkv.errors import OcrFormatError, OcrValidationError
from reportkv.ocr import (OcrDocument, OcrSegment, dump_ocr_document, group_lines, hocr_to_document,
                          parse_ocr_document, reconstruct_text)
from strategies import documents


def doc(*segs):
    return OcrDocument("r", (1000.0, 1000.0), tuple(OcrSegment(t, tuple(map(float, b))) for t, b in segs))


def test_single_segment():
    assert reconstruct_text(doc(("Hemoglobin 135 g/L", (0, 0, 200, 20)))) == "Hemoglobin 135 g/L"


def test_same_line():
    assert reconstruct_text(doc(("WBC", (10, 10, 60, 30)), ("6.2", (70, 12, 110, 32)))) == "WBC 6.2"


def test_two_lines():
    assert reconstruct_text(doc(("A-text", (10, 10, 60, 30)), ("B-text", (10, 100, 60, 120)))) == "A-text\nB-text"


def test_empty_document():
    assert reconstruct_text(doc()) == ""


def test_overlap_ratio_threshold():
    # 10 px of a 20 px shorter height overlap: exactly 0.5
    d = doc(("left", (0, 0, 50, 20)), ("right", (60, 10, 100, 30)))
    assert reconstruct_text(d, 0.5) == "left right"
    assert reconstruct_text(d, 0.6) == "left\nright"


def test_transitive_closure():
    d = doc(("a", (0, 0, 10, 20)), ("b", (20, 8, 30, 28)), ("c", (40, 16, 50, 36)))
    assert reconstruct_text(d) == "a b c"


def test_tie_break_on_x_then_text():
    d = doc(("z", (50, 0, 60, 10)), ("y", (0, 100, 10, 110)), ("x", (0, 100, 10, 110)))
    assert reconstruct_text(d) == "z\nx y"


def test_bad_ratio():
    with pytest.raises(ValueError):
        group_lines([], 0)


def file_obj(segs, **kw):
    return {"report_id": "r1", "page": {"width": 100, "height": 100}, "image": None,
            "segments": [{"text": t, "bbox": b, "confidence": 0.9} for t, b in segs], **kw}


def test_parse_counts():
    segs = [(f"s{i}", [1, i * 2, 50, i * 2 + 2]) for i in range(40)]
    d = parse_ocr_document(json.dumps(file_obj(segs)))
    assert len(d.segments) == 40
    assert parse_ocr_document(dump_ocr_document(d)) == d


def test_parse_zero_segments():
    assert parse_ocr_document(json.dumps(file_obj([]))).segments == ()


def test_inverted_bbox_names_segment():
    with pytest.raises(OcrValidationError) as exc:
        parse_ocr_document(json.dumps(file_obj([("ok", [1, 1, 5, 5]), ("bad", [9, 1, 5, 5])])))
    assert exc.value.index == 1


def test_out_of_page():
    with pytest.raises(OcrValidationError):
        parse_ocr_document(json.dumps(file_obj([("x", [1, 1, 500, 5])])))


def test_malformed_segment():
    obj = file_obj([])
    obj["segments"] = [{"text": "x", "bbox": [1, 2]}]
    with pytest.raises(OcrFormatError) as exc:
        parse_ocr_document(json.dumps(obj))
    assert exc.value.index == 0


def test_not_json():
    with pytest.raises(OcrFormatError):
        parse_ocr_document(b"{nope")


HOCR = """<html><body>
<div class="ocr_page" title='image "scan.png"; bbox 0 0 600 400'>
 <span class="ocr_line" title="bbox 10 10 300 30">
  <span class="ocrx_word" title="bbox 10 10 60 30; x_wconf 91">WBC</span>
  <span class="ocrx_word" title="bbox 200 12 240 30; x_wconf 88">6.2</span>
 </span>
 <span class="ocr_line" title="bbox 10 50 300 70">
  <span class="ocrx_word" title="bbox 10 50 60 70; x_wconf 95">HGB</span>
 </span>
</div></body></html>"""


def test_hocr_adapter():
    d = hocr_to_document(HOCR, "h1")
    assert d.page_size == (600.0, 400.0) and d.source_image_ref == "scan.png"
    assert [s.text for s in d.segments] == ["WBC", "6.2", "HGB"]
    assert d.segments[0].confidence == pytest.approx(0.91)
    assert reconstruct_text(d) == "WBC 6.2\nHGB"


@settings(max_examples=200)
@given(documents(), st.randoms(use_true_random=False))
def test_permutation_invariance(d, rnd):
    segs = list(d.segments)
    rnd.shuffle(segs)
    assert reconstruct_text(OcrDocument(d.report_id, d.page_size, tuple(segs))) == reconstruct_text(d)


@settings(max_examples=200)
@given(documents())
def test_text_conservation(d):
    out = reconstruct_text(d)
    assert Counter(out.split()) == Counter(tok for s in d.segments for tok in s.text.split())
    assert out.count("\n") == len(group_lines(d.segments)) - 1 if d.segments else out == ""


@settings(max_examples=100)
@given(documents(max_segments=8))
def test_lowest_segment_goes_last(d):
    bottom = max((s.bbox[3] for s in d.segments), default=0.0)
    last = OcrSegment("LAST", (0.0, bottom + 5, 40.0, bottom + 25))
    out = reconstruct_text(OcrDocument("d", (1200.0, 2000.0), (*d.segments, last)))
    assert out.split("\n")[-1] == "LAST"
