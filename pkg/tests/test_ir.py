from __future__ import annotations

import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docrefine.errors import IRFormatError
from docrefine.ir import (
    Association,
    BBox,
    DocumentIR,
    Kind,
    canonical_json,
    deserialize_ir,
    diff_ir,
    ir_from_dict,
    ir_to_dict,
    serialize_ir,
    validate_ir,
)
from strategies import doc, el, valid_irs


def _rules(ir):
    return {v.rule for v in validate_ir(ir)}


def _has_cycle_dfs(nodes, edges) -> bool:
    """Independent oracle: white/grey/black DFS over parent -> child edges."""
    kids = {n: [] for n in nodes}
    for p, c in edges:
        kids[p].append(c)
    color = dict.fromkeys(nodes, 0)

    def visit(n):
        color[n] = 1
        for c in kids[n]:
            if color[c] == 1 or (color[c] == 0 and visit(c)):
                return True
        color[n] = 2
        return False

    return any(color[n] == 0 and visit(n) for n in nodes)


class TestValidation:
    def test_minimal_document_is_valid(self):
        ir = doc(el("a", "Heading", 10, 10, 100, 30, "Intro", 1), el("b", "Paragraph", 10, 40, 100, 80, "x"))
        assert validate_ir(ir) == []

    def test_reading_order_must_be_permutation(self):
        a, b = el("a", "Paragraph", 0, 0, 10, 10), el("b", "Paragraph", 0, 20, 10, 30)
        assert "reading_order not a permutation" in _rules(doc(a, b, order=["a"]))
        assert "reading_order not a permutation" in _rules(doc(a, b, order=["a", "a", "b"]))
        assert "reading_order not a permutation" in _rules(doc(a, b, order=["a", "b", "zz"]))

    def test_two_node_cycle_reported_with_both_ids(self):
        a = el("a", "Heading", 0, 0, 10, 10, "A", 1)
        b = el("b", "Heading", 0, 20, 10, 30, "B", 2)
        vs = [v for v in validate_ir(doc(a, b, hierarchy=[("a", "b"), ("b", "a")])) if "cycle" in v.rule]
        assert len(vs) == 1
        assert vs[0].rule == "hierarchy contains cycle"
        assert set(vs[0].subjects) == {"a", "b"}

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_cycle_detection_matches_dfs(self, data):
        n = data.draw(st.integers(1, 7))
        nodes = [f"n{i}" for i in range(n)]
        # at most one parent per node so only the cycle rule is under test
        edges = []
        for c in nodes:
            p = data.draw(st.sampled_from([None, *nodes]))
            if p is not None:
                edges.append((p, c))
        els = [el(x, "Paragraph", 0, 10 * i, 10, 10 * i + 5) for i, x in enumerate(nodes)]
        ir = doc(*els, hierarchy=edges)
        assert ("hierarchy contains cycle" in _rules(ir)) == _has_cycle_dfs(nodes, edges)

    def test_multiple_parents(self):
        a, b, c = (el(x, "Heading", 0, 10 * i, 10, 10 * i + 5, x, 1) for i, x in enumerate("abc"))
        assert "hierarchy-multiple-parents" in _rules(doc(a, b, c, hierarchy=[("a", "c"), ("b", "c")]))

    @pytest.mark.parametrize(
        "box, rule",
        [
            ((0, 10, 5, 20, 5), "bbox-degenerate"),
            ((0, 10, 10, 5, 20), "bbox-degenerate"),
            ((0, 600, 10, 700, 20), "bbox-outside-page"),
            ((3, 0, 0, 10, 10), "page-index-out-of-range"),
            ((0, float("nan"), 0, 10, 10), "bbox-not-finite"),
        ],
    )
    def test_bbox_rules(self, box, rule):
        page, x0, y0, x1, y1 = box
        assert rule in _rules(doc(el("a", "Paragraph", x0, y0, x1, y1, page=page)))

    def test_caption_association_rules(self):
        fig = el("f", "Figure", 0, 0, 100, 100)
        cap = el("c", "Caption", 0, 105, 100, 115, "Figure 1")
        para = el("p", "Paragraph", 0, 120, 100, 130)
        assert validate_ir(doc(fig, cap, para, associations=[Association("c", "f", "figure-caption")])) == []
        assert "association-role" in _rules(doc(fig, cap, associations=[Association("c", "f", "table-caption")]))
        assert "association-caption-kind" in _rules(
            doc(fig, para, associations=[Association("p", "f", "figure-caption")])
        )
        assert "association-target-kind" in _rules(
            doc(cap, para, associations=[Association("c", "p", "figure-caption")])
        )
        fig2 = el("g", "Figure", 200, 0, 300, 100)
        twice = [Association("c", "f", "figure-caption"), Association("c", "g", "figure-caption")]
        assert "caption-linked-twice" in _rules(doc(fig, fig2, cap, associations=twice))

    def test_heading_level_only_on_headings(self):
        assert "heading-level" in _rules(doc(el("h", "Heading", 0, 0, 10, 10, "H")))
        assert "heading-level" in _rules(doc(el("p", "Paragraph", 0, 0, 10, 10, "x", 2)))

    def test_raster_ref_only_on_figures_and_tables(self):
        assert "raster-ref-kind" in _rules(doc(el("p", "Paragraph", 0, 0, 10, 10, raster="x.png")))
        assert validate_ir(doc(el("f", "Figure", 0, 0, 10, 10, raster="x.png"))) == []


class TestSerialization:
    def test_unknown_kind_is_path_addressed(self):
        good = ir_to_dict(doc(el("a", "Paragraph", 0, 0, 10, 10), el("b", "Paragraph", 0, 20, 10, 30)))
        good["elements"][1]["kind"] = "Chart"
        with pytest.raises(IRFormatError) as info:
            ir_from_dict(good)
        assert info.value.path == "$.elements[1].kind"
        assert "Chart" in str(info.value)

    @pytest.mark.parametrize(
        "mutate, path",
        [
            (lambda d: d.update(extra=1), "$.extra"),
            (lambda d: d.pop("pages"), "$.pages"),
            (lambda d: d["elements"][0]["bbox"].update(x0="left"), "$.elements[0].bbox.x0"),
            (lambda d: d["elements"][0]["bbox"].update(x1=0), "$.elements[0].bbox"),
            (lambda d: d["elements"].append(dict(d["elements"][0])), "$.elements[1].id"),
            (lambda d: d["pages"][0].update(width=0), "$.pages[0]"),
        ],
    )
    def test_malformed_input(self, mutate, path):
        d = ir_to_dict(doc(el("a", "Paragraph", 5, 5, 10, 10)))
        mutate(d)
        with pytest.raises(IRFormatError) as info:
            ir_from_dict(d)
        assert info.value.path == path

    def test_invalid_json(self):
        with pytest.raises(IRFormatError):
            deserialize_ir(b"{not json")

    def test_canonical_bytes_ignore_collection_order(self):
        a = el("a", "Heading", 0, 0, 10, 10, "A", 1)
        b = el("b", "Paragraph", 0, 20, 10, 30, "b")
        c = el("c", "Paragraph", 0, 40, 10, 50, "c")
        one = doc(a, b, c, hierarchy=[("a", "b"), ("a", "c")])
        two = DocumentIR(one.pages, (c, a, b), one.reading_order, (("a", "c"), ("a", "b")), ())
        assert serialize_ir(one) == serialize_ir(two)

    def test_reading_order_is_significant(self):
        a, b = el("a", "Paragraph", 0, 0, 10, 10), el("b", "Paragraph", 0, 20, 10, 30)
        assert serialize_ir(doc(a, b)) != serialize_ir(doc(a, b, order=["b", "a"]))

    def test_fixed_precision_floats(self):
        assert canonical_json({"b": 1.0, "a": [0.1 + 0.2, -0.0]}) == b'{"a":[0.300,0.000],"b":1.000}\n'

    def test_ints_and_floats_serialize_alike(self):
        assert serialize_ir(doc(el("a", "Paragraph", 1, 2, 3, 4))) == serialize_ir(
            doc(el("a", "Paragraph", 1.0, 2.0, 3.0, 4.0))
        )

    def test_unicode_text_survives(self):
        ir = doc(el("a", "Paragraph", 0, 0, 10, 10, "naïve 数据 ∑ \"quoted\"\n"))
        out = deserialize_ir(serialize_ir(ir))
        assert out.get("a").text == "naïve 数据 ∑ \"quoted\"\n"

    @settings(max_examples=150, deadline=None)
    @given(valid_irs())
    def test_round_trip(self, ir):
        assert validate_ir(ir) == []
        blob = serialize_ir(ir)
        back = deserialize_ir(blob)
        assert back == ir.canonical()
        assert serialize_ir(back) == blob
        json.loads(blob)

    @settings(max_examples=100, deadline=None)
    @given(valid_irs(), st.randoms(use_true_random=False))
    def test_permuting_collections_keeps_bytes(self, ir, rnd):
        els, hier, assoc = list(ir.elements), list(ir.hierarchy), list(ir.associations)
        rnd.shuffle(els)
        rnd.shuffle(hier)
        rnd.shuffle(assoc)
        shuffled = DocumentIR(ir.pages, tuple(els), ir.reading_order, tuple(hier), tuple(assoc))
        assert serialize_ir(shuffled) == serialize_ir(ir)


class TestDiff:
    def test_brute_force_agreement(self):
        rng = random.Random(7)
        base = [el(f"e{i}", "Paragraph", 0, 20 * i, 50, 20 * i + 10, f"text {i}") for i in range(8)]
        for _ in range(200):
            before = doc(*base)
            after_els = []
            expect = {"text": set(), "bbox": set(), "added": set(), "removed": set()}
            for e in base:
                r = rng.random()
                if r < 0.15:
                    expect["removed"].add(e.id)
                    continue
                if r < 0.3:
                    e = el(e.id, "Paragraph", 0, e.bbox.y0, 50, e.bbox.y1, e.text + "!")
                    expect["text"].add(e.id)
                elif r < 0.45:
                    e = el(e.id, "Paragraph", 1, e.bbox.y0, 51, e.bbox.y1, e.text)
                    expect["bbox"].add(e.id)
                after_els.append(e)
            if rng.random() < 0.5:
                after_els.append(el("new", "Paragraph", 0, 500, 50, 510, "fresh"))
                expect["added"].add("new")
            d = diff_ir(before, doc(*after_els))
            assert set(d.changed_text) == expect["text"]
            assert set(d.changed_bbox) == expect["bbox"]
            assert set(d.added) == expect["added"]
            assert set(d.removed) == expect["removed"]

    def test_identity_is_empty(self):
        ir = doc(el("a", "Paragraph", 0, 0, 10, 10, "x"))
        assert diff_ir(ir, ir).empty


def test_iou_on_hand_computed_boxes():
    a = BBox(0, 0, 0, 10, 10)
    assert a.iou(BBox(0, 5, 0, 15, 10)) == pytest.approx(50 / 150)
    assert a.iou(a) == 1.0
    assert a.iou(BBox(1, 0, 0, 10, 10)) == 0.0
    assert a.iou(BBox(0, 10, 0, 20, 10)) == 0.0


def test_kind_names_are_closed():
    assert {k.value for k in Kind} == {
        "Heading", "Paragraph", "ListItem", "Table", "Figure", "Formula", "Footnote", "Caption"
    }
    assert list(itertools.islice(Kind, 1))[0] is Kind.HEADING
