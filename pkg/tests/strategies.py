"""Hypothesis strategies and small builders shared by the test modules."""

from __future__ import annotations

from hypothesis import strategies as st

from docrefine.ir import BBox, DocumentIR, Element, Kind
from docrefine.lsa import build_hierarchy, link_captions

PAGE_W, PAGE_H = 612.0, 792.0

texts = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=40
)


@st.composite
def bboxes(draw, n_pages: int = 1) -> BBox:
    page = draw(st.integers(0, n_pages - 1))
    # integer thousandths, divided once, so every coordinate is the float nearest a 3-decimal value
    x0 = draw(st.integers(0, 500_000))
    y0 = draw(st.integers(0, 700_000))
    x1 = min(x0 + draw(st.integers(1, 100_000)), int(PAGE_W * 1000))
    y1 = min(y0 + draw(st.integers(1, 80_000)), int(PAGE_H * 1000))
    return BBox(page, x0 / 1000, y0 / 1000, x1 / 1000, y1 / 1000)


@st.composite
def elements(draw, eid: str, n_pages: int = 1) -> Element:
    kind = draw(st.sampled_from(list(Kind)))
    level = draw(st.integers(1, 3)) if kind is Kind.HEADING else None
    raster = None
    if kind in (Kind.FIGURE, Kind.TABLE) and draw(st.booleans()):
        raster = f"img/{eid}.png"
    return Element(eid, kind, draw(bboxes(n_pages)), draw(texts), level, raster)


@st.composite
def valid_irs(draw, max_elements: int = 12) -> DocumentIR:
    n_pages = draw(st.integers(1, 2))
    n = draw(st.integers(0, max_elements))
    els = [draw(elements(f"e{i}", n_pages)) for i in range(n)]
    order = draw(st.permutations([e.id for e in els]))
    hierarchy = build_hierarchy(els, order)
    assocs, _ = link_captions(els)
    return DocumentIR(tuple((PAGE_W, PAGE_H) for _ in range(n_pages)), tuple(els), tuple(order),
                      tuple(hierarchy), tuple(assocs))


def el(eid, kind, x0, y0, x1, y1, text="", level=None, page=0, raster=None) -> Element:
    return Element(eid, Kind(kind), BBox(page, x0, y0, x1, y1), text, level, raster)


def doc(*els: Element, order=None, hierarchy=(), associations=(), pages=1) -> DocumentIR:
    order = order if order is not None else [e.id for e in els]
    return DocumentIR(tuple((PAGE_W, PAGE_H) for _ in range(pages)), els, tuple(order), tuple(hierarchy),
                      tuple(associations))
