"""Instruction decomposition: natural-language instruction -> validated atomic ops."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

from .backend import Backend, BackendRequest, Stage
from .errors import OpValidationError, UnresolvableTarget
from .ir import TEXT_KINDS, DocumentIR, Kind, Violation
from .mcu import SemanticRep

DOCUMENT_SCOPE = "@document"


class OpKind(str, Enum):
    REWRITE_TEXT = "RewriteText"
    INSERT_TEXT = "InsertText"
    DELETE_TEXT = "DeleteText"
    CORRECT_TABLE_CELL = "CorrectTableCell"
    UPDATE_CAPTION = "UpdateCaption"
    GENERATE_SUMMARY = "GenerateSummary"
    REORDER_ELEMENTS = "ReorderElements"
    FORMAT_UNIFY = "FormatUnify"
    CROSS_MODAL_FIX = "CrossModalFix"


# kinds whose edit is produced by a rewrite call against the target's text
REWRITE_KINDS = frozenset({OpKind.REWRITE_TEXT, OpKind.INSERT_TEXT, OpKind.FORMAT_UNIFY, OpKind.CROSS_MODAL_FIX})


@dataclass(frozen=True)
class Instruction:
    text: str
    max_length: int | None = None  # words
    style: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text must be non-empty")
        if self.max_length is not None and self.max_length < 1:
            raise ValueError("max_length must be positive")


@dataclass(frozen=True)
class AtomicOp:
    op_id: int
    kind: OpKind
    target: str
    payload: dict[str, Any] = field(default_factory=dict)
    rationale: str = ""
    cell: tuple[int, int] | None = None  # (row, col), zero-based, CorrectTableCell only

    def __post_init__(self):
        object.__setattr__(self, "kind", OpKind(self.kind))
        if self.cell is not None:
            object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))

    @property
    def goal(self) -> str:
        return str(self.payload.get("goal") or self.rationale or self.kind.value)

    def touched(self) -> set[str]:
        """Element ids this op may modify."""
        ids = {self.target} if self.target != DOCUMENT_SCOPE else set()
        if self.kind is OpKind.GENERATE_SUMMARY:
            # the scope is read, only the destination element is written
            ids = {self.payload["into"]} if self.payload.get("into") else set()
        elif self.kind is OpKind.REORDER_ELEMENTS:
            ids = set()
        return ids

    def to_dict(self) -> dict:
        target: Any = self.target
        if self.cell is not None:
            target = {"table": self.target, "row": self.cell[0], "col": self.cell[1]}
        return {
            "op_id": self.op_id,
            "kind": self.kind.value,
            "target": target,
            "payload": self.payload,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict, op_id: int | None = None) -> AtomicOp:
        target = d["target"]
        cell = None
        if isinstance(target, dict):
            cell = (target["row"], target["col"])
            target = target["table"]
        return cls(
            op_id if op_id is not None else int(d["op_id"]),
            OpKind(d["kind"]),
            target,
            dict(d.get("payload") or {}),
            d.get("rationale", ""),
            cell,
        )


@dataclass(frozen=True)
class AmbiguityNote:
    span: str
    candidates: tuple[str, ...]
    chosen: int = 0
    reason: str = ""

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not 0 <= self.chosen < len(self.candidates):
            raise ValueError("chosen index out of range")

    def to_dict(self) -> dict:
        return {"span": self.span, "candidates": list(self.candidates), "chosen": self.chosen, "reason": self.reason}


def ops_to_json(ops: Sequence[AtomicOp], notes: Sequence[AmbiguityNote] = ()) -> bytes:
    doc = {"ops": [o.to_dict() for o in ops], "ambiguities": [n.to_dict() for n in notes]}
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def ops_from_json(payload: bytes | str) -> list[AtomicOp]:
    data = json.loads(payload)
    return [AtomicOp.from_dict(d) for d in data["ops"]]


# --- validation --------------------------------------------------------------------

_TARGET_KINDS: dict[OpKind, frozenset[Kind]] = {
    OpKind.REWRITE_TEXT: TEXT_KINDS,
    OpKind.INSERT_TEXT: TEXT_KINDS,
    OpKind.FORMAT_UNIFY: TEXT_KINDS,
    OpKind.DELETE_TEXT: TEXT_KINDS | {Kind.TABLE, Kind.FIGURE},
    OpKind.CORRECT_TABLE_CELL: frozenset({Kind.TABLE}),
    OpKind.UPDATE_CAPTION: frozenset({Kind.CAPTION}),
    OpKind.GENERATE_SUMMARY: frozenset({Kind.HEADING}),
    OpKind.REORDER_ELEMENTS: frozenset({Kind.HEADING}),
    OpKind.CROSS_MODAL_FIX: frozenset({Kind.CAPTION, Kind.PARAGRAPH}),
}
_DOC_SCOPE_OK = frozenset({OpKind.GENERATE_SUMMARY, OpKind.REORDER_ELEMENTS})


def figure_for(op: AtomicOp, ir: DocumentIR) -> str | None:
    """Figure grounding a CrossModalFix: explicit payload id, else the caption's link."""
    if op.payload.get("figure"):
        return op.payload["figure"]
    for a in ir.associations:
        if a.caption_id == op.target:
            return a.target_id
    return None


def _check_one(op: AtomicOp, ir: DocumentIR, sem: SemanticRep) -> list[Violation]:
    me = (str(op.op_id),)
    lookup = ir.by_id()
    if op.target == DOCUMENT_SCOPE:
        if op.kind not in _DOC_SCOPE_OK:
            return [Violation("kind-target-mismatch", me, f"{op.kind.value} cannot target the whole document")]
        el = None
    elif op.target not in lookup:
        return [Violation("unresolvable-target", (str(op.op_id), op.target), f"no element {op.target!r}")]
    else:
        el = lookup[op.target]
        if el.kind not in _TARGET_KINDS[op.kind]:
            return [Violation("kind-target-mismatch", me, f"{op.kind.value} cannot target a {el.kind.value}")]

    out: list[Violation] = []
    p = op.payload
    if op.kind is OpKind.CORRECT_TABLE_CELL:
        grid = sem.table_grids.get(op.target)
        if op.cell is None:
            out.append(Violation("payload", me, "CorrectTableCell needs row/col"))
        elif grid is None:
            out.append(Violation("cell-out-of-range", me, f"no grid for table {op.target}"))
        elif not (0 <= op.cell[0] < grid.n_rows and 0 <= op.cell[1] < grid.n_cols):
            out.append(
                Violation("cell-out-of-range", me, f"cell {op.cell} outside {grid.n_rows}x{grid.n_cols} grid")
            )
        if not isinstance(p.get("value"), str):
            out.append(Violation("payload", me, "CorrectTableCell needs a string 'value'"))
    elif op.cell is not None:
        out.append(Violation("payload", me, "only CorrectTableCell takes cell coordinates"))

    if op.kind is OpKind.GENERATE_SUMMARY and p.get("into") is not None:
        into = lookup.get(p["into"])
        if into is None:
            out.append(Violation("unresolvable-target", (str(op.op_id), str(p["into"])), "summary destination"))
        elif into.kind not in TEXT_KINDS:
            out.append(Violation("kind-target-mismatch", me, f"cannot write a summary into a {into.kind.value}"))
    if op.kind is OpKind.GENERATE_SUMMARY and p.get("max_length") is not None:
        if not isinstance(p["max_length"], int) or p["max_length"] < 1:
            out.append(Violation("payload", me, "max_length must be a positive integer"))
    if op.kind is OpKind.REORDER_ELEMENTS:
        order = p.get("order")
        if not isinstance(order, list) or len(order) < 2 or len(set(order)) != len(order):
            out.append(Violation("payload", me, "ReorderElements needs an 'order' list of distinct ids"))
        else:
            scope = set(ir.reading_order) if el is None else set(ir.children(op.target))
            bad = [i for i in order if i not in scope]
            if bad:
                out.append(Violation("unresolvable-target", (str(op.op_id), *map(str, bad)), "not reorderable here"))
    if op.kind is OpKind.UPDATE_CAPTION:
        if "text" in p and not isinstance(p["text"], str):
            out.append(Violation("payload", me, "'text' must be a string"))
        if not all(isinstance(k, str) for k in p.get("keys", [])):
            out.append(Violation("payload", me, "'keys' must be strings"))
    if op.kind is OpKind.CROSS_MODAL_FIX:
        fig = figure_for(op, ir)
        if fig is None or fig not in lookup or lookup[fig].kind is not Kind.FIGURE:
            out.append(Violation("payload", me, "CrossModalFix needs a grounding Figure"))
    return out


def _conflicts(ops: Sequence[AtomicOp]) -> list[Violation]:
    out = []
    for i, a in enumerate(ops):
        for b in ops[i + 1 :]:
            for x, y in ((a, b), (b, a)):
                if x.kind is not OpKind.DELETE_TEXT:
                    continue
                other = y.touched() | set(y.payload.get("order", []) if y.kind is OpKind.REORDER_ELEMENTS else ())
                if x.target in other:
                    out.append(
                        Violation("conflict", (str(a.op_id), str(b.op_id)), f"element {x.target} deleted and edited")
                    )
                    break
    return out


def validate_ops(ops: Sequence[AtomicOp], ir: DocumentIR, sem: SemanticRep) -> list[Violation]:
    """Target existence, kind/target compatibility, table bounds and delete conflicts."""
    out: list[Violation] = []
    ids = [o.op_id for o in ops]
    if len(set(ids)) != len(ids):
        out.append(Violation("op-id-duplicate", tuple(str(i) for i in ids)))
    for op in ops:
        out.extend(_check_one(op, ir, sem))
    out.extend(_conflicts(ops))
    return out


# --- decomposition -------------------------------------------------------------------

SYSTEM_PROMPT = (
    "You decompose document-editing instructions into atomic operations. "
    "First reason step by step about which document parts the instruction refers to, "
    "then emit JSON {reasoning, ops: [{kind, target, payload, rationale}], ambiguities}. "
    "Allowed kinds: RewriteText, InsertText, DeleteText, CorrectTableCell, UpdateCaption, "
    "GenerateSummary, ReorderElements, FormatUnify, CrossModalFix. Targets are element ids from the "
    "outline, '@document', or {table,row,col} with zero-based indices. Put the edit goal in "
    "payload.goal. If the instruction admits several readings, list them under ambiguities."
)


def outline(ir: DocumentIR, snippet: int = 60) -> str:
    parents = ir.parent_map()
    lines = []
    for el in ir.ordered_elements():
        depth = 0
        node = el.id
        while node in parents and depth < 10:
            node = parents[node]
            depth += 1
        text = " ".join(el.text.split())
        if len(text) > snippet:
            text = text[: snippet - 3] + "..."
        level = f" L{el.heading_level}" if el.heading_level else ""
        lines.append(f"{'  ' * depth}[{el.id}] {el.kind.value}{level}: {text}")
    return "\n".join(lines)


def decompose(
    instr: Instruction,
    sem: SemanticRep,
    ir: DocumentIR,
    backend: Backend,
    *,
    feedback: Iterable[str] = (),
) -> tuple[list[AtomicOp], list[AmbiguityNote]]:
    """One backend call, then strict re-validation of what the model proposed.

    Ambiguities are resolved by always taking the first candidate; the choice
    is recorded, never silent.
    """
    parts = [f"instruction: {instr.text}"]
    if instr.max_length:
        parts.append(f"length limit: {instr.max_length} words")
    if instr.style:
        parts.append(f"style: {instr.style}")
    fb = [f for f in feedback if f]
    if fb:
        parts.append("verifier feedback on the previous attempt:\n" + "\n".join(f"- {f}" for f in fb))
    tables = ", ".join(f"{k}={g.n_rows}x{g.n_cols}" for k, g in sorted(sem.table_grids.items()))
    if tables:
        parts.append(f"table sizes: {tables}")
    parts.append("document outline:\n" + outline(ir))
    req = BackendRequest(Stage.IDA, SYSTEM_PROMPT, ("\n".join(parts),), "ida.ops")
    parsed = backend.complete(req).parsed

    ops = [AtomicOp.from_dict(d, op_id=i) for i, d in enumerate(parsed["ops"], start=1)]
    notes = [
        AmbiguityNote(
            a["span"],
            tuple(a["candidates"]),
            0,
            "first candidate chosen by policy" + (f"; model: {a['reason']}" if a.get("reason") else ""),
        )
        for a in parsed.get("ambiguities", [])
    ]

    violations = validate_ops(ops, ir, sem)
    for v in violations:
        if v.rule == "unresolvable-target":
            raise UnresolvableTarget(v.subjects[1])
    if violations:
        raise OpValidationError(violations)
    return ops, notes
