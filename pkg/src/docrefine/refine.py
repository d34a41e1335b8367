"""Content refinement and summary generation: apply atomic ops to IR + semantics.

Layout policy: boxes never move. Text that no longer fits its box produces an
``OverflowWarning`` for the verifier to act on; neighbours are left alone.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .backend import Backend, BackendRequest, Stage
from .errors import BackendError, EmptyGeneration, GuardViolation, OpValidationError
from .ida import DOCUMENT_SCOPE, REWRITE_KINDS, AtomicOp, Instruction, OpKind, figure_for, validate_ops
from .ir import DocumentIR, Element, Kind, diff_ir, element_bytes, serialize_ir
from .mcu import SemanticRep, serialize_sem

log = logging.getLogger(__name__)

NOMINAL_FONT_SIZE = 10.0
GLYPH_WIDTH = 0.5  # fraction of font size
LINE_SPACING = 1.2


@dataclass(frozen=True)
class OverflowWarning:
    element_id: str
    needed_lines: int
    capacity_lines: int

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "kind": "overflow",
            "needed_lines": self.needed_lines,
            "capacity_lines": self.capacity_lines,
        }


@dataclass
class RefinementResult:
    new_sem: SemanticRep
    new_ir: DocumentIR
    changed_ids: frozenset[str]
    summaries: dict[int, str] = field(default_factory=dict)
    warnings: list[OverflowWarning] = field(default_factory=list)


# --- reflow ------------------------------------------------------------------------


def line_capacity(el: Element, font_size: float = NOMINAL_FONT_SIZE) -> tuple[int, int]:
    """(chars per line, lines) the element's box holds at the nominal glyph size."""
    per_line = max(1, math.floor(el.bbox.width / (GLYPH_WIDTH * font_size)))
    lines = max(1, math.floor(el.bbox.height / (LINE_SPACING * font_size)))
    return per_line, lines


def reflow(
    ir: DocumentIR, element_id: str, new_text: str, font_size: float = NOMINAL_FONT_SIZE
) -> tuple[DocumentIR, OverflowWarning | None]:
    el = ir.get(element_id)
    if el is None:
        raise KeyError(element_id)
    if el.kind in (Kind.FIGURE,):
        raise ValueError(f"{element_id} is not textual")
    if new_text == el.text:
        return ir, None
    per_line, lines = line_capacity(el, font_size)
    needed = math.ceil(len(new_text) / per_line)
    warning = OverflowWarning(element_id, needed, lines) if needed > lines else None
    new_el = replace(el, text=new_text)
    return replace(ir, elements=tuple(new_el if e.id == element_id else e for e in ir.elements)), warning


# --- summaries ------------------------------------------------------------------------

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def trim_to_words(text: str, max_words: int | None) -> str:
    """Keep whole sentences up to ``max_words``; fall back to a word cut if even the first is too long."""
    words = text.split()
    if max_words is None or len(words) <= max_words:
        return text
    kept, count = [], 0
    for sentence in _SENTENCE_END.split(text.strip()):
        n = len(sentence.split())
        if count + n > max_words:
            break
        kept.append(sentence)
        count += n
    return " ".join(kept) if kept else " ".join(words[:max_words])


def scope_ids(ir: DocumentIR, scope: str) -> list[str]:
    if scope == DOCUMENT_SCOPE:
        return list(ir.reading_order)
    return [scope, *ir.descendants(scope)]


def generate_summary(
    sem: SemanticRep,
    ir: DocumentIR,
    scope: str,
    backend: Backend,
    *,
    goal: str = "",
    max_length: int | None = None,
    style: str | None = None,
) -> str:
    ids = scope_ids(ir, scope)
    if scope != DOCUMENT_SCOPE and ir.get(scope) is None:
        raise KeyError(scope)
    inside = set(ids)
    facts = [f"- {f.subject} | {f.predicate} | {f.object}" for f in sem.facts if f.element_id in inside]
    digests = [f"- {sem.section_digests[i]}" for i in ids if i in sem.section_digests]
    parts = [f"scope: {scope}", f"goal: {goal or 'summarize'}"]
    if max_length:
        parts.append(f"length limit: {max_length} words")
    if style:
        parts.append(f"style: {style}")
    if facts:
        parts.append("facts:\n" + "\n".join(facts))
    if digests:
        parts.append("section digests:\n" + "\n".join(digests))
    if not facts and not digests:
        lookup = ir.by_id()
        parts.append("source text:\n" + "\n".join(lookup[i].text for i in ids if lookup[i].text))
    system = (
        "You write abstractive summaries of scientific documents. Plan the key points first, "
        'then return JSON {"text": ...}. Use only information given; respect the length limit.'
    )
    prompt = "\n".join(parts)
    for attempt in range(2):
        if attempt:
            prompt += "\nThe previous attempt returned empty text; produce a non-empty summary."
        text = backend.complete(BackendRequest(Stage.SGA, system, (prompt,), "sga.summary")).parsed["text"].strip()
        if text:
            return trim_to_words(text, max_length)
    raise EmptyGeneration(f"summary for {scope} came back empty twice")


# --- op application -----------------------------------------------------------------------

REWRITE_SYSTEM = (
    "You refine one element of a scientific document. Think about what the goal requires, keep "
    "the surrounding style and every fact not covered by the goal, and return JSON "
    '{"text": <the complete new element text>}.'
)


def _section_heading(ir: DocumentIR, element_id: str) -> str:
    parent = ir.parent_map().get(element_id)
    el = ir.get(parent) if parent else None
    return el.text if el else ""


def _rewrite(op: AtomicOp, ir: DocumentIR, sem: SemanticRep, backend: Backend, instr: Instruction | None) -> str:
    el = ir.get(op.target)
    lines = [f"op: {op.kind.value}", f"target_id: {el.id}", f"element_kind: {el.kind.value}", f"goal: {op.goal}"]
    if instr is not None and instr.style:
        lines.append(f"style: {instr.style}")
    heading = _section_heading(ir, el.id)
    if heading:
        lines.append(f"section: {heading}")
    if op.kind is OpKind.INSERT_TEXT and op.payload.get("text"):
        lines.append(f"content to insert: {op.payload['text']}")
    if op.kind is OpKind.UPDATE_CAPTION and op.payload.get("keys"):
        lines.append("must mention: " + ", ".join(op.payload["keys"]))
    if op.kind is OpKind.CROSS_MODAL_FIX:
        fig = figure_for(op, ir)
        desc = sem.figure_descs.get(fig) if fig else None
        if desc is not None:
            lines.append(f"figure {fig} shows: {desc.description}")
            if desc.axis_labels:
                lines.append("axis labels: " + ", ".join(desc.axis_labels))
            if desc.legend_entries:
                lines.append("legend: " + ", ".join(desc.legend_entries))
        lines.append("make the text consistent with the figure")
    lines.append("current text:")
    lines.append(el.text)
    return backend.complete(BackendRequest(Stage.CRA, REWRITE_SYSTEM, ("\n".join(lines),), "cra.rewrite")).parsed["text"]


def _delete(ir: DocumentIR, sem: SemanticRep, eid: str) -> tuple[DocumentIR, SemanticRep]:
    parent = ir.parent_map().get(eid)
    edges = []
    for p, c in ir.hierarchy:
        if c == eid:
            continue
        if p == eid:
            if parent is None:
                continue
            p = parent
        edges.append((p, c))
    new_ir = DocumentIR(
        ir.pages,
        tuple(e for e in ir.elements if e.id != eid),
        tuple(i for i in ir.reading_order if i != eid),
        tuple(edges),
        tuple(a for a in ir.associations if eid not in (a.caption_id, a.target_id)),
    )
    return new_ir, sem.without(eid)


def _reorder(ir: DocumentIR, order: Sequence[str]) -> DocumentIR:
    wanted = set(order)
    slots = [i for i, eid in enumerate(ir.reading_order) if eid in wanted]
    ro = list(ir.reading_order)
    for slot, eid in zip(slots, order):
        ro[slot] = eid
    return replace(ir, reading_order=tuple(ro))


class _State:
    def __init__(self, ir: DocumentIR, sem: SemanticRep, font_size: float):
        self.ir, self.sem = ir, sem
        self.font_size = font_size
        self.summaries: dict[int, str] = {}
        self.warnings: dict[str, OverflowWarning] = {}

    def set_text(self, eid: str, text: str) -> None:
        self.ir, warning = reflow(self.ir, eid, text, self.font_size)
        if warning is not None:
            self.warnings[eid] = warning
        else:
            self.warnings.pop(eid, None)


def _apply_one(st: _State, op: AtomicOp, backend: Backend, instr: Instruction | None) -> None:
    k = op.kind
    if k in REWRITE_KINDS:
        st.set_text(op.target, _rewrite(op, st.ir, st.sem, backend, instr))
    elif k is OpKind.UPDATE_CAPTION:
        text = op.payload["text"] if "text" in op.payload else _rewrite(op, st.ir, st.sem, backend, instr)
        st.set_text(op.target, text)
    elif k is OpKind.DELETE_TEXT:
        st.ir, st.sem = _delete(st.ir, st.sem, op.target)
        st.warnings.pop(op.target, None)
    elif k is OpKind.CORRECT_TABLE_CELL:
        row, col = op.cell
        grid = st.sem.table_grids[op.target].with_cell(row, col, op.payload["value"])
        st.sem = replace(st.sem, table_grids={**st.sem.table_grids, op.target: grid})
        if st.ir.get(op.target).text:
            st.set_text(op.target, grid.to_text())
    elif k is OpKind.GENERATE_SUMMARY:
        text = generate_summary(
            st.sem,
            st.ir,
            op.target,
            backend,
            goal=op.goal,
            max_length=op.payload.get("max_length") or (instr.max_length if instr else None),
            style=instr.style if instr else None,
        )
        st.summaries[op.op_id] = text
        if op.payload.get("supersedes") is not None:
            st.summaries[int(op.payload["supersedes"])] = text
        if op.payload.get("into"):
            st.set_text(op.payload["into"], text)
    elif k is OpKind.REORDER_ELEMENTS:
        st.ir = _reorder(st.ir, op.payload["order"])
    else:  # pragma: no cover - enum is closed
        raise ValueError(k)


def _guard(before: DocumentIR, after: DocumentIR, targeted: set[str]) -> None:
    new = after.by_id()
    for el in before.elements:
        if el.id in targeted:
            continue
        other = new.get(el.id)
        if other is None or element_bytes(other) != element_bytes(el):
            raise GuardViolation(f"untargeted element {el.id} was modified")
    extra = set(new) - before.ids()
    if extra:
        raise GuardViolation(f"elements appeared without an op creating them: {sorted(extra)}")


def apply_ops(
    ir: DocumentIR,
    sem: SemanticRep,
    ops: Sequence[AtomicOp],
    backend: Backend,
    *,
    instruction: Instruction | None = None,
    font_size: float = NOMINAL_FONT_SIZE,
) -> RefinementResult:
    """Apply ``ops`` in op_id order. Elements no op touches come out byte-identical."""
    violations = validate_ops(ops, ir, sem)
    if violations:
        raise OpValidationError(violations)
    st = _State(ir, sem, font_size)
    ordered = sorted(ops, key=lambda o: o.op_id)
    for op in ordered:
        try:
            _apply_one(st, op, backend, instruction)
        except BackendError as exc:
            exc.op_id = op.op_id
            raise
    targeted = set().union(*(o.touched() for o in ordered)) if ordered else set()
    _guard(ir, st.ir, targeted)
    d = diff_ir(ir, st.ir)
    return RefinementResult(
        st.sem,
        st.ir,
        d.all_changed,
        dict(sorted(st.summaries.items())),
        [st.warnings[k] for k in sorted(st.warnings)],
    )


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def write_result(result: RefinementResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "out.ir.json").write_bytes(serialize_ir(result.new_ir))
    (out / "out.sem.json").write_bytes(serialize_sem(result.new_sem))
    (out / "summaries.json").write_bytes(_json_bytes({str(k): v for k, v in result.summaries.items()}))
    (out / "warnings.json").write_bytes(_json_bytes([w.to_dict() for w in result.warnings]))


def load_summaries(path: str | Path) -> dict[int, str]:
    return {int(k): v for k, v in json.loads(Path(path).read_text(encoding="utf-8")).items()}
