"""Small synthetic benchmark whose expected outputs are known by construction.

Every case pairs an input document with a hand-edited gold document and a
scripted backend that "answers" with the gold content: rewrite calls return
the gold text of the element named in the prompt, the summary call returns the
gold summary and the judge always agrees. Running the pipeline on a case must
therefore reproduce the gold document, which makes the set a sanity check for
the benchmark harness rather than a measure of model quality.

    python -m docrefine.synthetic datasets/synthetic
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ir import BBox, DocumentIR, Element, Kind, serialize_ir
from .lsa import build_hierarchy, link_captions, xy_cut_order

PAGE = (612.0, 792.0)


def _el(eid, kind, y0, y1, text="", level=None, x0=72.0, x1=540.0) -> Element:
    return Element(eid, Kind(kind), BBox(0, x0, y0, x1, y1), text, level)


def base_document() -> DocumentIR:
    els = [
        _el("h1", "Heading", 72, 90, "Introduction", 1),
        _el("p1", "Paragraph", 100, 160,
            "We study how small changes in training data change model accuracy. "
            "The results we got show that it matters a lot."),
        _el("h2", "Heading", 180, 198, "Results", 1),
        _el("p2", "Paragraph", 208, 260,
            "Our model reaches an accuracy of 0.80 on the held-out split, "
            "compared with 0.71 for the baseline."),
        _el("t1", "Table", 270, 330, "Model\tAccuracy\nBaseline\t0.71\nOurs\t0.84"),
        _el("c1", "Caption", 336, 350, "Table 1: Results."),
        _el("f1", "Figure", 370, 540),
        _el("c2", "Caption", 546, 560, "Figure 1: Training loss rises over time."),
        _el("l1", "ListItem", 575, 590, "1. The baseline uses default settings."),
        _el("l2", "ListItem", 600, 615, "2. Both models use the same data."),
        _el("h3", "Heading", 635, 653, "Summary", 1),
        _el("s1", "Paragraph", 663, 740, "Summary to be written."),
        _el("n1", "Footnote", 760, 775, "* Numbers are averaged over three runs."),
    ]
    order = xy_cut_order(els)
    assocs, _ = link_captions(els)
    return DocumentIR((PAGE,), tuple(els), tuple(order), tuple(build_hierarchy(els, order)), tuple(assocs)).canonical()


def _with_text(ir: DocumentIR, **texts: str) -> DocumentIR:
    els = tuple(replace(e, text=texts[e.id]) if e.id in texts else e for e in ir.elements)
    return replace(ir, elements=els)


def _without(ir: DocumentIR, eid: str) -> DocumentIR:
    return DocumentIR(
        ir.pages,
        tuple(e for e in ir.elements if e.id != eid),
        tuple(i for i in ir.reading_order if i != eid),
        tuple((p, c) for p, c in ir.hierarchy if eid not in (p, c)),
        tuple(a for a in ir.associations if eid not in (a.caption_id, a.target_id)),
    )


def _swap(ir: DocumentIR, a: str, b: str) -> DocumentIR:
    ro = list(ir.reading_order)
    i, j = ro.index(a), ro.index(b)
    ro[i], ro[j] = ro[j], ro[i]
    return replace(ir, reading_order=tuple(ro))


FIGURE_DESC = {
    "description": "Line plot of training loss that drops quickly and then levels off.",
    "axis_labels": ["epoch", "loss"],
    "legend_entries": ["train"],
}


@dataclass
class SyntheticCase:
    name: str
    category: str
    instruction: str
    ops: list[dict]
    gold: DocumentIR
    summary: str | None = None
    meta: dict = field(default_factory=dict)

    def mock_script(self, source: DocumentIR) -> dict:
        before = source.by_id()
        rules = [
            {"stage": "CRA", "contains": f"target_id: {e.id}\n", "response": {"text": e.text}}
            for e in self.gold.elements
            if e.id in before and e.text != before[e.id].text
        ]
        rules.append({"stage": "MCU", "contains": "figure_id:", "response": FIGURE_DESC})
        defaults = {
            "IDA": {"ops": self.ops},
            "MCU": {"facts": [], "entities": [], "digest": ""},
            "FCV": {"satisfied": True, "reason": "matches the goal"},
        }
        if self.summary is not None:
            defaults["SGA"] = {"text": self.summary}
        return {"rules": rules, "defaults": defaults}


def build_cases() -> list[SyntheticCase]:
    doc = base_document()
    summary = "Training data changes shift accuracy; our model scores 0.84 against 0.71 for the baseline."
    return [
        SyntheticCase(
            "text_polish",
            "Text Refinement",
            "Polish the wording of the introduction paragraph.",
            [{"kind": "RewriteText", "target": "p1", "payload": {"goal": "polish wording"}}],
            _with_text(doc, p1="We study how small changes in training data affect model accuracy. "
                               "Our results show that the effect is substantial."),
        ),
        SyntheticCase(
            "fact_fix",
            "Text Refinement",
            "The results paragraph should report the accuracy from the table, 0.84.",
            [{"kind": "RewriteText", "target": "p2", "payload": {"goal": "report accuracy 0.84"}}],
            _with_text(doc, p2="Our model reaches an accuracy of 0.84 on the held-out split, "
                               "compared with 0.71 for the baseline."),
        ),
        SyntheticCase(
            "table_and_footnote",
            "Structural Editing",
            "Set the accuracy of our model in the table to 0.86 and remove the footnote.",
            [
                {"kind": "CorrectTableCell", "target": {"table": "t1", "row": 2, "col": 1}, "payload": {"value": "0.86"}},
                {"kind": "DeleteText", "target": "n1"},
            ],
            _without(_with_text(doc, t1="Model\tAccuracy\nBaseline\t0.71\nOurs\t0.86"), "n1"),
        ),
        SyntheticCase(
            "list_swap",
            "Structural Editing",
            "State the shared data before describing the baseline.",
            [{"kind": "ReorderElements", "target": "h2", "payload": {"order": ["l2", "l1"]}}],
            _swap(doc, "l1", "l2"),
        ),
        SyntheticCase(
            "summary",
            "Summarization",
            "Write the summary section in at most 30 words.",
            [{"kind": "GenerateSummary", "target": "@document", "payload": {"into": "s1", "max_length": 30}}],
            _with_text(doc, s1=summary),
            summary=summary,
            meta={"max_length": 30},
        ),
        SyntheticCase(
            "caption_fix",
            "Multimodal Correction",
            "Make the figure caption match the plot and make the table caption say what is measured.",
            [
                {"kind": "CrossModalFix", "target": "c2"},
                {"kind": "UpdateCaption", "target": "c1", "payload": {"keys": ["accuracy"]}},
            ],
            _with_text(
                doc,
                c2="Figure 1: Training loss drops quickly and then levels off.",
                c1="Table 1: Held-out accuracy of each model.",
            ),
        ),
    ]


def write_dataset(out_dir: str | Path) -> list[Path]:
    root = Path(out_dir)
    source = base_document()
    written = []
    for case in build_cases():
        d = root / case.name
        d.mkdir(parents=True, exist_ok=True)
        (d / "input.ir.json").write_bytes(serialize_ir(source))
        (d / "gold.ir.json").write_bytes(serialize_ir(case.gold))
        (d / "instruction.txt").write_text(case.instruction + "\n", encoding="utf-8")
        meta = {"category": case.category, **case.meta}
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        mock = json.dumps(case.mock_script(source), indent=2, sort_keys=True, ensure_ascii=False)
        (d / "mock.json").write_text(mock + "\n", encoding="utf-8")
        written.append(d)
    return written


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description="write the synthetic benchmark cases")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    for d in write_dataset(args.out_dir):
        print(d)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
