"""Layout & structure analysis: source document -> validated DocumentIR.

Two ingestion routes. ``LayoutJson`` input already carries elements and boxes;
only reading order, hierarchy and caption links are filled in when absent.
``PdfFile`` input goes through native text extraction (PyMuPDF), which is
best-effort by nature.
"""

from __future__ import annotations

import json
import logging
import os
import re
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .backend import Backend, BackendRequest, ImagePart, Stage
from .errors import IngestError, IRFormatError, ValidationError
from .ir import (
    ROLE_FOR_TARGET,
    Association,
    BBox,
    DocumentIR,
    Element,
    Kind,
    ir_from_dict,
    validate_ir,
)

log = logging.getLogger(__name__)

DEFAULT_GAP = 8.0
DEFAULT_CAPTION_GAP = 20.0


@dataclass(frozen=True)
class IngestSource:
    kind: str  # "pdf" | "layout_json"
    path: Path

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.kind not in ("pdf", "layout_json"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.path.is_file() or not os.access(self.path, os.R_OK):
            raise IngestError(f"cannot read {self.path}")

    @classmethod
    def pdf(cls, path) -> IngestSource:
        return cls("pdf", path)

    @classmethod
    def layout_json(cls, path) -> IngestSource:
        return cls("layout_json", path)

    @classmethod
    def from_path(cls, path) -> IngestSource:
        path = Path(path)
        return cls("pdf" if path.suffix.lower() == ".pdf" else "layout_json", path)


@dataclass(frozen=True)
class LayoutWarning:
    element_id: str
    message: str

    def to_dict(self) -> dict:
        return {"element_id": self.element_id, "kind": "layout", "message": self.message}


# --- reading order ---------------------------------------------------------------


def _widest_gap(els: Sequence[Element], axis: str, threshold: float) -> float | None:
    """Split coordinate of the widest projection gap >= threshold, or None."""
    if axis == "x":
        spans = sorted((e.bbox.x0, e.bbox.x1) for e in els)
    else:
        spans = sorted((e.bbox.y0, e.bbox.y1) for e in els)
    best_width, split = 0.0, None
    cur_end = spans[0][1]
    for start, end in spans[1:]:
        gap = start - cur_end
        if gap >= threshold and gap > best_width:
            best_width, split = gap, cur_end
        cur_end = max(cur_end, end)
    return split


def _reading_key(e: Element):
    return (e.bbox.y0, e.bbox.x0, e.id)


def _xy_cut(els: list[Element], threshold: float, prefer: str) -> list[str]:
    if len(els) <= 1:
        return [e.id for e in els]
    other = "y" if prefer == "x" else "x"
    for axis in (prefer, other):
        split = _widest_gap(els, axis, threshold)
        if split is None:
            continue
        if axis == "x":
            first = [e for e in els if e.bbox.x1 <= split]
            second = [e for e in els if e.bbox.x1 > split]
        else:
            first = [e for e in els if e.bbox.y1 <= split]
            second = [e for e in els if e.bbox.y1 > split]
        nxt = "y" if axis == "x" else "x"
        return _xy_cut(first, threshold, nxt) + _xy_cut(second, threshold, nxt)
    # no admissible cut: top-left lexicographic order
    return [e.id for e in sorted(els, key=_reading_key)]


def xy_cut_order(elements: Iterable[Element], gap_threshold: float = DEFAULT_GAP) -> list[str]:
    """Recursive XY-cut reading order, pages concatenated by index.

    At the top level of each page a vertical cut (a gap in the x projection,
    i.e. between columns) is tried first; nested levels alternate the
    preferred axis. Left/top parts come before right/bottom parts.
    """
    pages: dict[int, list[Element]] = {}
    for e in elements:
        pages.setdefault(e.bbox.page_index, []).append(e)
    order: list[str] = []
    for p in sorted(pages):
        order.extend(_xy_cut(pages[p], gap_threshold, "x"))
    return order


# --- hierarchy & captions -----------------------------------------------------------


def build_hierarchy(elements: Iterable[Element], reading_order: Sequence[str]) -> list[tuple[str, str]]:
    """Parent edges: headings nest under the nearest preceding shallower heading;
    everything else hangs off the nearest preceding heading."""
    lookup = {e.id: e for e in elements}
    edges: list[tuple[str, str]] = []
    stack: list[Element] = []
    for eid in reading_order:
        el = lookup[eid]
        if el.kind is Kind.HEADING:
            level = el.heading_level or 1
            while stack and (stack[-1].heading_level or 1) >= level:
                stack.pop()
            if stack:
                edges.append((stack[-1].id, eid))
            stack.append(el)
        elif stack:
            edges.append((stack[-1].id, eid))
    return edges


def _vertical_distance(caption: BBox, target: BBox) -> tuple[float, bool]:
    """(distance, target_is_above). Vertically overlapping boxes are at distance 0."""
    if target.y1 <= caption.y0:
        return caption.y0 - target.y1, True
    if target.y0 >= caption.y1:
        return target.y0 - caption.y1, False
    return 0.0, target.y0 <= caption.y0


def link_captions(
    elements: Iterable[Element], max_gap: float = DEFAULT_CAPTION_GAP
) -> tuple[list[Association], list[LayoutWarning]]:
    """Attach each caption to the vertically nearest Figure/Table on its page.

    Ties go to the element above the caption.
    """
    elements = list(elements)
    targets = [e for e in elements if e.kind in ROLE_FOR_TARGET]
    links: list[Association] = []
    warnings: list[LayoutWarning] = []
    for cap in elements:
        if cap.kind is not Kind.CAPTION:
            continue
        best = None
        for t in targets:
            if t.bbox.page_index != cap.bbox.page_index:
                continue
            dist, above = _vertical_distance(cap.bbox, t.bbox)
            if dist > max_gap:
                continue
            cx = abs((t.bbox.x0 + t.bbox.x1) - (cap.bbox.x0 + cap.bbox.x1)) / 2
            key = (dist, 0 if above else 1, cx, t.id)
            if best is None or key < best[0]:
                best = (key, t)
        if best is None:
            warnings.append(LayoutWarning(cap.id, f"caption has no figure or table within {max_gap}pt"))
            continue
        t = best[1]
        links.append(Association(cap.id, t.id, ROLE_FOR_TARGET[t.kind]))
    return links, warnings


# --- ingestion ---------------------------------------------------------------------


def _load_layout_json(path: Path) -> tuple[DocumentIR, set[str]]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: {exc}") from None
    try:
        ir = ir_from_dict(data, partial=True)
    except IRFormatError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    given = {k for k in ("reading_order", "hierarchy", "associations") if k in data}
    if "reading_order" in given and not ir.reading_order and ir.elements:
        given.discard("reading_order")
    return ir, given


_CAPTION_RE = re.compile(r"^\s*(figure|fig\.|table|tab\.)\s*[0-9ivx]+", re.IGNORECASE)
_LIST_RE = re.compile(r"^\s*([•▪–\-\*]|\(?\d{1,2}[.)]|\(?[a-z][.)])\s+")


def _classify(text: str, size: float, body: float, y0: float, page_h: float) -> Kind:
    if _CAPTION_RE.match(text):
        return Kind.CAPTION
    if size >= body * 1.15 and len(text) < 200:
        return Kind.HEADING
    if size < body * 0.9 and y0 > page_h * 0.8:
        return Kind.FOOTNOTE
    if _LIST_RE.match(text):
        return Kind.LIST_ITEM
    return Kind.PARAGRAPH


def _clip(rect, w: float, h: float) -> tuple[float, float, float, float] | None:
    x0, y0, x1, y1 = max(0.0, rect[0]), max(0.0, rect[1]), min(w, rect[2]), min(h, rect[3])
    if x0 < x1 and y0 < y1:
        return x0, y0, x1, y1
    return None


def _inside(inner, outer) -> bool:
    cx, cy = (inner[0] + inner[2]) / 2, (inner[1] + inner[3]) / 2
    return outer[0] <= cx <= outer[2] and outer[1] <= cy <= outer[3]


def _extract_pdf(path: Path, raster_dir: Path | None) -> DocumentIR:
    try:
        import pymupdf
    except ImportError:
        raise IngestError("PDF input needs PyMuPDF: pip install 'artifact[pdf]'") from None
    try:
        doc = pymupdf.open(path)
    except Exception as exc:  # pymupdf raises its own FileDataError family
        raise IngestError(f"{path}: cannot open PDF ({exc})") from None

    pages: list[tuple[float, float]] = []
    raw: list[dict] = []
    with doc:
        for pno, page in enumerate(doc):
            w, h = float(page.rect.width), float(page.rect.height)
            pages.append((w, h))
            table_boxes = []
            try:
                found = page.find_tables().tables
            except Exception:  # table finder is optional best-effort
                found = []
            for tab in found:
                box = _clip(tab.bbox, w, h)
                if box is None:
                    continue
                rows = tab.extract() or []
                text = "\n".join("\t".join("" if c is None else str(c) for c in row) for row in rows)
                table_boxes.append(box)
                raw.append({"page": pno, "box": box, "kind": Kind.TABLE, "text": text, "size": 0.0})
            for block in page.get_text("dict")["blocks"]:
                box = _clip(block["bbox"], w, h)
                if box is None or any(_inside(box, tb) for tb in table_boxes):
                    continue
                if block.get("type") == 1:
                    raw.append({"page": pno, "box": box, "kind": Kind.FIGURE, "text": "", "size": 0.0})
                    continue
                lines, sizes = [], []
                for line in block.get("lines", []):
                    spans = line.get("spans", [])
                    lines.append("".join(s.get("text", "") for s in spans))
                    sizes += [s.get("size", 0.0) for s in spans if s.get("text", "").strip()]
                text = " ".join(t.strip() for t in lines if t.strip())
                if text:
                    raw.append({"page": pno, "box": box, "kind": None, "text": text, "size": max(sizes or [0.0])})

        sized = [r["size"] for r in raw if r["kind"] is None for _ in range(max(1, len(r["text"]) // 40))]
        body = statistics.median(sized) if sized else 10.0
        for r in raw:
            if r["kind"] is None:
                r["kind"] = _classify(r["text"], r["size"], body, r["box"][1], pages[r["page"]][1])
        heading_sizes = sorted({round(r["size"], 1) for r in raw if r["kind"] is Kind.HEADING}, reverse=True)

        elements = []
        for n, r in enumerate(raw, start=1):
            eid = f"e{n}"
            level = heading_sizes.index(round(r["size"], 1)) + 1 if r["kind"] is Kind.HEADING else None
            raster = None
            if raster_dir is not None and r["kind"] in (Kind.FIGURE, Kind.TABLE):
                raster_dir.mkdir(parents=True, exist_ok=True)
                out = raster_dir / f"{eid}.png"
                doc[r["page"]].get_pixmap(clip=pymupdf.Rect(*r["box"]), dpi=144).save(out)
                raster = str(out)
            elements.append(Element(eid, r["kind"], BBox(r["page"], *r["box"]), r["text"], level, raster))
    return DocumentIR(pages=tuple(pages), elements=tuple(elements))


def _vision_relabel(ir: DocumentIR, backend: Backend) -> DocumentIR:
    new = []
    for el in ir.elements:
        if el.raster_ref and el.kind in (Kind.FIGURE, Kind.TABLE):
            req = BackendRequest(
                Stage.LSA,
                "You label document regions. Think step by step about the visual structure, "
                'then answer with JSON {"kind": "Figure"|"Table"}.',
                (f"region_id: {el.id}", ImagePart(el.raster_ref)),
                "lsa.region",
            )
            kind = Kind(backend.complete(req).parsed["kind"])
            if kind is not el.kind:
                log.info("vision pass relabelled %s as %s", el.id, kind.value)
                el = Element(el.id, kind, el.bbox, el.text, None, el.raster_ref)
        new.append(el)
    return DocumentIR(ir.pages, tuple(new))


_COMPUTED_RULES = {
    "reading_order": ("reading_order not a permutation",),
    "hierarchy": ("hierarchy-unknown-node", "hierarchy-multiple-parents", "hierarchy contains cycle"),
    "associations": (
        "association-unknown-node",
        "association-caption-kind",
        "association-target-kind",
        "association-role",
        "caption-linked-twice",
    ),
}


def analyze(
    src: IngestSource,
    backend: Backend | None = None,
    *,
    gap_threshold: float = DEFAULT_GAP,
    caption_gap: float = DEFAULT_CAPTION_GAP,
    vision: bool = False,
    raster_dir: str | Path | None = None,
) -> DocumentIR:
    """Produce a validated IR from ``src``.

    Raises IngestError for bad input and ValidationError when the computed
    structure is itself invalid.
    """
    if src.kind == "pdf":
        ir = _extract_pdf(src.path, Path(raster_dir) if raster_dir else None)
        given: set[str] = set()
        if vision and backend is not None:
            ir = _vision_relabel(ir, backend)
    else:
        ir, given = _load_layout_json(src.path)

    order = ir.reading_order if "reading_order" in given else tuple(xy_cut_order(ir.elements, gap_threshold))
    hierarchy = ir.hierarchy if "hierarchy" in given else tuple(build_hierarchy(ir.elements, order))
    if "associations" in given:
        assocs = ir.associations
    else:
        assocs, warnings = link_captions(ir.elements, caption_gap)
        for w in warnings:
            log.warning("%s: %s", w.element_id, w.message)
    out = DocumentIR(ir.pages, ir.elements, order, hierarchy, tuple(assocs))

    violations = validate_ir(out)
    if violations:
        computed = {r for part, rules in _COMPUTED_RULES.items() if part not in given for r in rules}
        if all(v.rule in computed for v in violations):
            raise ValidationError(violations)
        raise IngestError(f"{src.path}: invalid layout: " + "; ".join(str(v) for v in violations))
    return out
