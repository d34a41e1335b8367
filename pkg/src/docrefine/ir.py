"""Document intermediate representation: layout-annotated element graph.

An IR value is immutable. Stages never mutate one in place; they build a new
``DocumentIR`` (usually via :func:`dataclasses.replace`).

Coordinates are PDF points with the origin at the top-left of the page.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import IRFormatError

COORD_DECIMALS = 3


class Kind(str, Enum):
    HEADING = "Heading"
    PARAGRAPH = "Paragraph"
    LIST_ITEM = "ListItem"
    TABLE = "Table"
    FIGURE = "Figure"
    FORMULA = "Formula"
    FOOTNOTE = "Footnote"
    CAPTION = "Caption"


RASTER_KINDS = frozenset({Kind.FIGURE, Kind.TABLE})
TEXT_KINDS = frozenset(
    {Kind.HEADING, Kind.PARAGRAPH, Kind.LIST_ITEM, Kind.FORMULA, Kind.FOOTNOTE, Kind.CAPTION}
)
ROLE_FOR_TARGET = {Kind.FIGURE: "figure-caption", Kind.TABLE: "table-caption"}
ROLES = frozenset(ROLE_FOR_TARGET.values())


@dataclass(frozen=True)
class BBox:
    page_index: int
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        # ints and floats must serialize identically
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    def iou(self, other: BBox) -> float:
        """Intersection over union; 0 for boxes on different pages."""
        if self.page_index != other.page_index:
            return 0.0
        ix = min(self.x1, other.x1) - max(self.x0, other.x0)
        iy = min(self.y1, other.y1) - max(self.y0, other.y0)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Element:
    id: str
    kind: Kind
    bbox: BBox
    text: str = ""
    heading_level: int | None = None
    raster_ref: str | None = None

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            object.__setattr__(self, "kind", Kind(self.kind))

    @property
    def is_textual(self) -> bool:
        return self.kind in TEXT_KINDS or (self.kind is Kind.TABLE and bool(self.text))


@dataclass(frozen=True)
class Association:
    caption_id: str
    target_id: str
    role: str


@dataclass(frozen=True)
class DocumentIR:
    pages: tuple[tuple[float, float], ...] = ()
    elements: tuple[Element, ...] = ()
    reading_order: tuple[str, ...] = ()
    hierarchy: tuple[tuple[str, str], ...] = ()
    associations: tuple[Association, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pages", tuple((float(w), float(h)) for w, h in self.pages))
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "reading_order", tuple(self.reading_order))
        object.__setattr__(self, "hierarchy", tuple((p, c) for p, c in self.hierarchy))
        object.__setattr__(
            self,
            "associations",
            tuple(a if isinstance(a, Association) else Association(*a) for a in self.associations),
        )

    # lookups are rebuilt on demand; IRs are small and immutable
    def by_id(self) -> dict[str, Element]:
        return {e.id: e for e in self.elements}

    def get(self, element_id: str) -> Element | None:
        for e in self.elements:
            if e.id == element_id:
                return e
        return None

    def ids(self) -> set[str]:
        return {e.id for e in self.elements}

    def ordered_elements(self) -> list[Element]:
        lookup = self.by_id()
        return [lookup[i] for i in self.reading_order if i in lookup]

    def parent_map(self) -> dict[str, str]:
        return {c: p for p, c in self.hierarchy}

    def children(self, parent_id: str) -> list[str]:
        kids = {c for p, c in self.hierarchy if p == parent_id}
        return [i for i in self.reading_order if i in kids]

    def descendants(self, parent_id: str) -> list[str]:
        """All transitive children of ``parent_id`` in reading order."""
        kids: dict[str, list[str]] = {}
        for p, c in self.hierarchy:
            kids.setdefault(p, []).append(c)
        seen: set[str] = set()
        stack = [parent_id]
        while stack:
            for c in kids.get(stack.pop(), ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return [i for i in self.reading_order if i in seen]

    def canonical(self) -> DocumentIR:
        """Same document with order-insensitive collections sorted."""
        return replace(
            self,
            elements=tuple(sorted(self.elements, key=lambda e: e.id)),
            hierarchy=tuple(sorted(set(self.hierarchy))),
            associations=tuple(
                sorted(set(self.associations), key=lambda a: (a.caption_id, a.target_id, a.role))
            ),
        )


def structurally_equal(a: DocumentIR, b: DocumentIR) -> bool:
    return serialize_ir(a) == serialize_ir(b)


# --- validation ------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    subjects: tuple[str, ...]
    detail: str = ""

    def __str__(self) -> str:
        who = ",".join(self.subjects)
        return f"{self.rule} [{who}]" + (f": {self.detail}" if self.detail else "")


def _bbox_problems(el: Element, pages) -> list[Violation]:
    b = el.bbox
    out = []
    if not all(math.isfinite(v) for v in (b.x0, b.y0, b.x1, b.y1)):
        return [Violation("bbox-not-finite", (el.id,))]
    if not (b.x0 < b.x1 and b.y0 < b.y1):
        out.append(Violation("bbox-degenerate", (el.id,), f"({b.x0},{b.y0})-({b.x1},{b.y1})"))
    if not (0 <= b.page_index < len(pages)):
        out.append(Violation("page-index-out-of-range", (el.id,), f"page {b.page_index}"))
        return out
    w, h = pages[b.page_index]
    if b.x0 < 0 or b.y0 < 0 or b.x1 > w or b.y1 > h:
        out.append(Violation("bbox-outside-page", (el.id,), f"page {b.page_index} is {w}x{h}"))
    return out


def _hierarchy_cycles(edges: Iterable[tuple[str, str]]) -> list[tuple[str, ...]]:
    # parent-pointer walk; nodes with several parents are reported separately,
    # here only the first recorded parent is followed
    parent: dict[str, str] = {}
    for p, c in edges:
        parent.setdefault(c, p)
    cycles: set[tuple[str, ...]] = set()
    done: set[str] = set()
    for start in parent:
        path: list[str] = []
        pos: dict[str, int] = {}
        node = start
        while node in parent and node not in done and node not in pos:
            pos[node] = len(path)
            path.append(node)
            node = parent[node]
        if node in pos:
            cycles.add(tuple(sorted(path[pos[node]:])))
        done.update(path)
    return sorted(cycles)


def validate_ir(ir: DocumentIR) -> list[Violation]:
    """Check every IR invariant; an empty list means the IR is valid."""
    out: list[Violation] = []
    for i, (w, h) in enumerate(ir.pages):
        if not (w > 0 and h > 0):
            out.append(Violation("page-size", (f"page{i}",), f"{w}x{h}"))

    seen: dict[str, Element] = {}
    for el in ir.elements:
        if el.id in seen:
            out.append(Violation("duplicate-id", (el.id,)))
        seen[el.id] = el
        out.extend(_bbox_problems(el, ir.pages))
        if el.kind is Kind.HEADING:
            if el.heading_level is None or el.heading_level < 1:
                out.append(Violation("heading-level", (el.id,), "Heading needs a positive level"))
        elif el.heading_level is not None:
            out.append(Violation("heading-level", (el.id,), f"{el.kind.value} must not carry a level"))
        if el.raster_ref is not None and el.kind not in RASTER_KINDS:
            out.append(Violation("raster-ref-kind", (el.id,), f"{el.kind.value} cannot carry a raster"))

    order = list(ir.reading_order)
    if len(order) != len(set(order)) or set(order) != set(seen):
        missing = sorted(set(seen) - set(order))
        extra = sorted(set(order) - set(seen))
        dups = sorted({i for i in order if order.count(i) > 1})
        out.append(
            Violation(
                "reading_order not a permutation",
                tuple(missing + extra + dups),
                f"missing={missing} unknown={extra} repeated={dups}",
            )
        )

    parents: dict[str, list[str]] = {}
    for p, c in ir.hierarchy:
        for node in (p, c):
            if node not in seen:
                out.append(Violation("hierarchy-unknown-node", (node,)))
        if p == c:
            continue  # reported as a cycle below
        parents.setdefault(c, []).append(p)
    for c, ps in sorted(parents.items()):
        if len(set(ps)) > 1:
            out.append(Violation("hierarchy-multiple-parents", (c, *sorted(set(ps)))))
    for cyc in _hierarchy_cycles(ir.hierarchy):
        out.append(Violation("hierarchy contains cycle", cyc))

    linked: dict[str, int] = {}
    for a in ir.associations:
        cap, tgt = seen.get(a.caption_id), seen.get(a.target_id)
        if cap is None or tgt is None:
            out.append(Violation("association-unknown-node", (a.caption_id, a.target_id)))
            continue
        if cap.kind is not Kind.CAPTION:
            out.append(Violation("association-caption-kind", (a.caption_id,), cap.kind.value))
        if tgt.kind not in RASTER_KINDS:
            out.append(Violation("association-target-kind", (a.target_id,), tgt.kind.value))
        elif a.role != ROLE_FOR_TARGET[tgt.kind]:
            out.append(Violation("association-role", (a.caption_id, a.target_id), a.role))
        linked[a.caption_id] = linked.get(a.caption_id, 0) + 1
    for cid, n in sorted(linked.items()):
        if n > 1:
            out.append(Violation("caption-linked-twice", (cid,)))
    return out


# --- canonical serialization ---------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite number {x!r} cannot be serialized")
    s = f"{x:.{COORD_DECIMALS}f}"
    return "0.000" if s == "-0.000" else s


def _canon(obj: Any, out: list[str]) -> None:
    if isinstance(obj, Mapping):
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(json.dumps(str(k), ensure_ascii=False))
            out.append(":")
            _canon(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _canon(v, out)
        out.append("]")
    elif isinstance(obj, Enum):
        _canon(obj.value, out)
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    else:
        raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj: Any) -> bytes:
    """Key-sorted compact JSON, floats at fixed precision, trailing newline."""
    out: list[str] = []
    _canon(obj, out)
    out.append("\n")
    return "".join(out).encode("utf-8")


def element_to_dict(el: Element) -> dict:
    d: dict[str, Any] = {
        "id": el.id,
        "kind": el.kind.value,
        "bbox": {
            "page": el.bbox.page_index,
            "x0": el.bbox.x0,
            "y0": el.bbox.y0,
            "x1": el.bbox.x1,
            "y1": el.bbox.y1,
        },
        "text": el.text,
    }
    if el.heading_level is not None:
        d["heading_level"] = el.heading_level
    if el.raster_ref is not None:
        d["raster_ref"] = el.raster_ref
    return d


def ir_to_dict(ir: DocumentIR) -> dict:
    ir = ir.canonical()
    return {
        "pages": [{"width": w, "height": h} for w, h in ir.pages],
        "elements": [element_to_dict(e) for e in ir.elements],
        "reading_order": list(ir.reading_order),
        "hierarchy": [{"parent": p, "child": c} for p, c in ir.hierarchy],
        "associations": [
            {"caption": a.caption_id, "target": a.target_id, "role": a.role} for a in ir.associations
        ],
    }


def serialize_ir(ir: DocumentIR) -> bytes:
    return canonical_json(ir_to_dict(ir))


def element_bytes(el: Element) -> bytes:
    return canonical_json(element_to_dict(el))


# --- deserialization -------------------------------------------------------

TOP_LEVEL_KEYS = ("pages", "elements", "reading_order", "hierarchy", "associations")
OPTIONAL_WHEN_PARTIAL = ("reading_order", "hierarchy", "associations")


def _need(d: Mapping, key: str, path: str, typ, *, optional: bool = False):
    if key not in d:
        if optional:
            return None
        raise IRFormatError(f"{path}.{key}", "missing")
    v = d[key]
    if typ is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise IRFormatError(f"{path}.{key}", f"expected a finite number, got {v!r}")
        return float(v)
    if typ is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise IRFormatError(f"{path}.{key}", f"expected an integer, got {v!r}")
        return v
    if not isinstance(v, typ):
        raise IRFormatError(f"{path}.{key}", f"expected {typ.__name__}, got {type(v).__name__}")
    return v


def _parse_element(d: Any, path: str) -> Element:
    if not isinstance(d, Mapping):
        raise IRFormatError(path, "expected an object")
    eid = _need(d, "id", path, str)
    if not eid:
        raise IRFormatError(f"{path}.id", "empty id")
    kind_raw = _need(d, "kind", path, str)
    try:
        kind = Kind(kind_raw)
    except ValueError:
        raise IRFormatError(f"{path}.kind", f"unknown element kind {kind_raw!r}") from None
    bpath = f"{path}.bbox"
    b = _need(d, "bbox", path, dict)
    page = _need(b, "page", bpath, int)
    if page < 0:
        raise IRFormatError(f"{bpath}.page", "negative page index")
    x0, y0, x1, y1 = (_need(b, k, bpath, float) for k in ("x0", "y0", "x1", "y1"))
    if not (x0 < x1 and y0 < y1):
        raise IRFormatError(bpath, f"degenerate box ({x0},{y0})-({x1},{y1})")
    text = _need(d, "text", path, str, optional=True) or ""
    level = _need(d, "heading_level", path, int, optional=True)
    raster = _need(d, "raster_ref", path, str, optional=True)
    return Element(eid, kind, BBox(page, x0, y0, x1, y1), text, level, raster)


def _str_list(v: Any, path: str) -> list[str]:
    if not isinstance(v, list):
        raise IRFormatError(path, "expected a list")
    for i, s in enumerate(v):
        if not isinstance(s, str):
            raise IRFormatError(f"{path}[{i}]", "expected an element id string")
    return v


def ir_from_dict(data: Any, *, partial: bool = False) -> DocumentIR:
    """Build an IR from decoded JSON.

    ``partial`` accepts layout input where ``reading_order``, ``hierarchy`` and
    ``associations`` may be absent (``reading_order`` then comes back empty).
    """
    if not isinstance(data, Mapping):
        raise IRFormatError("$", "expected a JSON object")
    for k in data:
        if k not in TOP_LEVEL_KEYS:
            raise IRFormatError(f"$.{k}", "unknown top-level key")
    for k in TOP_LEVEL_KEYS:
        if k not in data and not (partial and k in OPTIONAL_WHEN_PARTIAL):
            raise IRFormatError(f"$.{k}", "missing")

    raw_pages = data["pages"]
    if not isinstance(raw_pages, list):
        raise IRFormatError("$.pages", "expected a list")
    pages = []
    for i, p in enumerate(raw_pages):
        path = f"$.pages[{i}]"
        if not isinstance(p, Mapping):
            raise IRFormatError(path, "expected an object")
        w, h = _need(p, "width", path, float), _need(p, "height", path, float)
        if not (w > 0 and h > 0):
            raise IRFormatError(path, f"page size must be positive, got {w}x{h}")
        pages.append((w, h))

    raw_elements = data["elements"]
    if not isinstance(raw_elements, list):
        raise IRFormatError("$.elements", "expected a list")
    elements = []
    seen: set[str] = set()
    for i, d in enumerate(raw_elements):
        el = _parse_element(d, f"$.elements[{i}]")
        if el.id in seen:
            raise IRFormatError(f"$.elements[{i}].id", f"duplicate element id {el.id!r}")
        seen.add(el.id)
        elements.append(el)

    order = _str_list(data.get("reading_order", []), "$.reading_order")

    hierarchy = []
    for i, edge in enumerate(data.get("hierarchy", [])):
        path = f"$.hierarchy[{i}]"
        if not isinstance(edge, Mapping):
            raise IRFormatError(path, "expected an object")
        hierarchy.append((_need(edge, "parent", path, str), _need(edge, "child", path, str)))

    assocs = []
    for i, a in enumerate(data.get("associations", [])):
        path = f"$.associations[{i}]"
        if not isinstance(a, Mapping):
            raise IRFormatError(path, "expected an object")
        role = _need(a, "role", path, str)
        if role not in ROLES:
            raise IRFormatError(f"{path}.role", f"unknown role {role!r}")
        assocs.append(Association(_need(a, "caption", path, str), _need(a, "target", path, str), role))

    return DocumentIR(tuple(pages), tuple(elements), tuple(order), tuple(hierarchy), tuple(assocs))


def deserialize_ir(payload: bytes | str, *, partial: bool = False) -> DocumentIR:
    try:
        data = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IRFormatError("$", f"invalid JSON: {exc}") from None
    return ir_from_dict(data, partial=partial)


# --- diffing ----------------------------------------------------------------


@dataclass(frozen=True)
class ElementDiff:
    changed_text: frozenset[str] = field(default_factory=frozenset)
    changed_bbox: frozenset[str] = field(default_factory=frozenset)
    added: frozenset[str] = field(default_factory=frozenset)
    removed: frozenset[str] = field(default_factory=frozenset)

    @property
    def all_changed(self) -> frozenset[str]:
        return self.changed_text | self.changed_bbox | self.added | self.removed

    @property
    def empty(self) -> bool:
        return not self.all_changed


def diff_ir(before: DocumentIR, after: DocumentIR) -> ElementDiff:
    a, b = before.by_id(), after.by_id()
    common = a.keys() & b.keys()
    return ElementDiff(
        changed_text=frozenset(i for i in common if a[i].text.encode() != b[i].text.encode()),
        changed_bbox=frozenset(i for i in common if a[i].bbox != b[i].bbox),
        added=frozenset(b.keys() - a.keys()),
        removed=frozenset(a.keys() - b.keys()),
    )
