"""Hypothesis strategies shared by module tests and the acceptance suite."""

import string

from hypothesis import strategies as st

from reportkv.normalize import KeyValuePair
from reportkv.ocr import OcrDocument, OcrSegment
from reportkv.privacy import CATEGORIES, SensitiveSpan

WORD = st.text(string.ascii_letters + string.digits + "./%-", min_size=1, max_size=8)


@st.composite
def segments(draw, max_segments=14):
    n = draw(st.integers(0, max_segments))
    out = []
    for _ in range(n):
        x0 = draw(st.integers(0, 900))
        y0 = draw(st.integers(0, 700))
        w = draw(st.integers(5, 250))
        h = draw(st.integers(4, 40))
        text = " ".join(draw(st.lists(WORD, min_size=1, max_size=3)))
        out.append(OcrSegment(text, (float(x0), float(y0), float(x0 + w), float(y0 + h)), draw(st.floats(0, 1))))
    return out


@st.composite
def documents(draw, max_segments=14):
    return OcrDocument("doc", (1200.0, 800.0), tuple(draw(segments(max_segments))))


# Letters and digits that never occur inside a placeholder, so "surface not in
# masked text" is a meaningful substring test.
SAFE = "abcdefghijklmnopqrstuvwxyz ,.:;-" + "甲乙丙丁戊"


@st.composite
def texts_with_spans(draw, alphabet=SAFE):
    text = draw(st.text(alphabet, min_size=0, max_size=80))
    cuts = sorted(set(draw(st.lists(st.integers(0, len(text)), max_size=8))))
    spans = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        if a < b:
            spans.append(SensitiveSpan.at(text, a, b, draw(st.sampled_from(CATEGORIES))))
    return text, spans


KEYS = [(s, k) for s in ("cbc", "general", "lipid") for k in ("A", "B", "C", "D")]


@st.composite
def pair_sets(draw, max_pairs=12):
    keys = draw(st.lists(st.sampled_from(KEYS), unique=True, max_size=max_pairs))
    return [KeyValuePair(s, k, "integer", draw(st.integers(0, 3))) for s, k in keys]
