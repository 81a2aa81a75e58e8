"""OCR engine output: parsing, validation and reading-order reconstruction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import IO

from .errors import OcrFormatError, OcrValidationError


@dataclass(frozen=True)
class OcrSegment:
    text: str
    bbox: tuple[float, float, float, float]
    confidence: float = 1.0

    @property
    def top(self) -> float:
        return self.bbox[1]

    @property
    def bottom(self) -> float:
        return self.bbox[3]

    @property
    def height(self) -> float:
        return self.bbox[3] - self.bbox[1]


@dataclass(frozen=True)
class OcrDocument:
    report_id: str
    page_size: tuple[float, float]
    segments: tuple[OcrSegment, ...] = ()
    source_image_ref: str | None = None


def validate_document(doc: OcrDocument) -> None:
    if not doc.report_id.strip():
        raise OcrValidationError("report_id must be non-empty")
    width, height = doc.page_size
    if width <= 0 or height <= 0:
        raise OcrValidationError(f"page size must be positive, got {doc.page_size}")
    for i, seg in enumerate(doc.segments):
        x0, y0, x1, y1 = seg.bbox
        if not seg.text.strip():
            raise OcrValidationError("text is empty", index=i)
        if not (x0 < x1 and y0 < y1):
            raise OcrValidationError(f"degenerate bbox {list(seg.bbox)}", index=i)
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise OcrValidationError(f"bbox {list(seg.bbox)} outside page {width}x{height}", index=i)
        if not 0.0 <= seg.confidence <= 1.0:
            raise OcrValidationError(f"confidence {seg.confidence} outside [0, 1]", index=i)


def _number(value, what: str, index: int | None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise OcrFormatError(f"{what} must be a number, got {value!r}", index=index)
    return float(value)


def document_from_dict(obj) -> OcrDocument:
    if not isinstance(obj, dict):
        raise OcrFormatError("top level must be an object")
    report_id = obj.get("report_id")
    if not isinstance(report_id, str):
        raise OcrFormatError("report_id must be a string")
    page = obj.get("page")
    if not isinstance(page, dict):
        raise OcrFormatError("page must be an object with width and height")
    size = (_number(page.get("width"), "page.width", None), _number(page.get("height"), "page.height", None))
    raw_segments = obj.get("segments", [])
    if not isinstance(raw_segments, list):
        raise OcrFormatError("segments must be a list")
    segments = []
    for i, raw in enumerate(raw_segments):
        if not isinstance(raw, dict):
            raise OcrFormatError("segment must be an object", index=i)
        text = raw.get("text")
        if not isinstance(text, str):
            raise OcrFormatError("text must be a string", index=i)
        bbox = raw.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise OcrFormatError("bbox must be [x0, y0, x1, y1]", index=i)
        coords = tuple(_number(v, "bbox coordinate", i) for v in bbox)
        conf = _number(raw.get("confidence", 1.0), "confidence", i)
        segments.append(OcrSegment(text=text, bbox=coords, confidence=conf))
    image = obj.get("image")
    if image is not None and not isinstance(image, str):
        raise OcrFormatError("image must be a string path or null")
    doc = OcrDocument(report_id=report_id, page_size=size, segments=tuple(segments), source_image_ref=image)
    validate_document(doc)
    return doc


def parse_ocr_document(source: bytes | str | IO) -> OcrDocument:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        obj = json.loads(source)
    except json.JSONDecodeError as exc:
        raise OcrFormatError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return document_from_dict(obj)


def load_ocr_file(path: str | Path) -> OcrDocument:
    with open(path, "rb") as fh:
        return parse_ocr_document(fh)


def _num_out(v: float):
    return int(v) if float(v).is_integer() else v


def document_to_dict(doc: OcrDocument) -> dict:
    return {
        "report_id": doc.report_id,
        "page": {"width": _num_out(doc.page_size[0]), "height": _num_out(doc.page_size[1])},
        "image": doc.source_image_ref,
        "segments": [
            {"text": s.text, "bbox": [_num_out(v) for v in s.bbox], "confidence": s.confidence}
            for s in doc.segments
        ],
    }


def dump_ocr_document(doc: OcrDocument) -> bytes:
    return (json.dumps(document_to_dict(doc), ensure_ascii=False, indent=1) + "\n").encode("utf-8")


# --- reading order ----------------------------------------------------------


def _same_line(a: OcrSegment, b: OcrSegment, ratio: float) -> bool:
    overlap = min(a.bottom, b.bottom) - max(a.top, b.top)
    return overlap > 0 and overlap >= ratio * min(a.height, b.height)


def _segment_key(seg: OcrSegment):
    return (seg.bbox[0], seg.text, seg.bbox[1], seg.bbox[2], seg.bbox[3])


def group_lines(segments, line_overlap_ratio: float = 0.5) -> list[list[OcrSegment]]:
    """Group segments into lines (transitive closure of vertical overlap) in reading order."""
    if not 0 < line_overlap_ratio <= 1:
        raise ValueError(f"line_overlap_ratio must be in (0, 1], got {line_overlap_ratio}")
    segs = sorted(segments, key=_segment_key)
    parent = list(range(len(segs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            if _same_line(segs[i], segs[j], line_overlap_ratio):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[OcrSegment]] = {}
    for i, seg in enumerate(segs):
        groups.setdefault(find(i), []).append(seg)
    lines = [sorted(g, key=_segment_key) for g in groups.values()]
    lines.sort(key=lambda g: (min(s.top for s in g), min(s.bbox[0] for s in g), tuple(s.text for s in g)))
    return lines


def _clean(text: str) -> str:
    return " ".join(text.split())


def reconstruct_text(doc: OcrDocument, line_overlap_ratio: float = 0.5) -> str:
    """Stitch segments into text lines by bbox position.

    Two segments share a line when their vertical intervals overlap by at
    least ``line_overlap_ratio`` of the shorter height; lines run top to
    bottom, segments within a line left to right. Multi-column layouts are
    not detected and will interleave.
    """
    return "\n".join(" ".join(_clean(s.text) for s in line) for line in group_lines(doc.segments, line_overlap_ratio))


# --- hOCR adapter -----------------------------------------------------------

_BBOX = re.compile(r"bbox\s+(-?\d+(?:\.\d+)?)\s+(-?\d+(?:\.\d+)?)\s+(-?\d+(?:\.\d+)?)\s+(-?\d+(?:\.\d+)?)")
_WCONF = re.compile(r"x_wconf\s+(\d+(?:\.\d+)?)")
_IMAGE = re.compile(r'image\s+"([^"]*)"')


class _HocrParser(HTMLParser):
    """Collects ocrx_word spans (falling back to ocr_line) with their titles."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.page_title: str | None = None
        self.words: list[tuple[str, list[str]]] = []
        self.lines: list[tuple[str, list[str]]] = []
        self._stack: list[tuple[str, str | None, list[str] | None]] = []

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        classes = (attrs.get("class") or "").split()
        title = attrs.get("title") or ""
        buf = None
        if "ocr_page" in classes and self.page_title is None:
            self.page_title = title
        if "ocrx_word" in classes:
            buf = []
            self.words.append((title, buf))
        elif "ocr_line" in classes or "ocrx_line" in classes:
            buf = []
            self.lines.append((title, buf))
        self._stack.append((tag, title, buf))

    def handle_endtag(self, tag):
        while self._stack:
            t, _, _ = self._stack.pop()
            if t == tag:
                break

    def handle_data(self, data):
        for _, _, buf in self._stack:
            if buf is not None:
                buf.append(data)


def hocr_to_document(markup: str, report_id: str) -> OcrDocument:
    """Best-effort conversion of hOCR markup into an :class:`OcrDocument`.

    Word boxes are preferred; documents without ``ocrx_word`` spans fall back
    to line boxes. Word confidences (``x_wconf``, 0-100) are rescaled to [0, 1].
    Boxes without text are skipped.
    """
    parser = _HocrParser()
    parser.feed(markup)
    items = parser.words or parser.lines
    segments = []
    max_x = max_y = 0.0
    for title, buf in items:
        text = _clean("".join(buf))
        m = _BBOX.search(title)
        if not text or not m:
            continue
        bbox = tuple(float(v) for v in m.groups())
        if not (bbox[0] < bbox[2] and bbox[1] < bbox[3]):
            continue
        conf_m = _WCONF.search(title)
        conf = min(1.0, float(conf_m.group(1)) / 100.0) if conf_m else 1.0
        segments.append(OcrSegment(text=text, bbox=bbox, confidence=conf))
        max_x, max_y = max(max_x, bbox[2]), max(max_y, bbox[3])

    page_title = parser.page_title or ""
    pm = _BBOX.search(page_title)
    if pm:
        size = (float(pm.group(3)), float(pm.group(4)))
    else:
        size = (max(max_x, 1.0), max(max_y, 1.0))
    im = _IMAGE.search(page_title)
    doc = OcrDocument(report_id=report_id, page_size=size, segments=tuple(segments),
                      source_image_ref=im.group(1) if im else None)
    validate_document(doc)
    return doc
