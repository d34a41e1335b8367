"""Fidelity & consistency verification: SCS / LFI / IAR plus routed feedback.

Metric definitions
------------------
SCS  mean over changed textual elements of max(0, cos(embed(new), embed(intent))),
     intent = goals of the ops targeting the element + its original text.
     Changed elements no op targeted contribute 0. No changes -> 1.
LFI  w_geo * G + w_ras * S. G is the mean bbox IoU of untargeted elements
     (missing -> 0), S the mean page SSIM when rasters are given; without
     rasters LFI = G.
IAR  Satisfied / number of ops; Unverifiable counts as not satisfied; no ops -> 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backend import Backend, BackendRequest, Stage
from .errors import DimensionMismatch, ZeroVector
from .ida import DOCUMENT_SCOPE, REWRITE_KINDS, AtomicOp, Instruction, OpKind
from .ir import DocumentIR, Element, diff_ir, element_bytes, serialize_ir
from .mcu import SemanticRep, parse_table_text
from .refine import OverflowWarning

log = logging.getLogger(__name__)

SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_WINDOW = 8
LFI_WEIGHTS = (0.6, 0.4)


# --- primitives -----------------------------------------------------------------------


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    uu, vv = float(u @ u), float(v @ v)
    if uu == 0.0 or vv == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    # sqrt(uu * vv) rather than |u||v| so cosine(u, u) is exactly 1
    c = float(u @ v) / float(np.sqrt(uu * vv))
    return min(1.0, max(-1.0, c))


def _window_sums(x: np.ndarray, w: int) -> np.ndarray:
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(a, b, window: int = DEFAULT_WINDOW, L: float = 255.0) -> float:
    """Mean SSIM over every ``window``x``window`` position, uniform weights.

    Statistics are population moments of each window; C1=(0.01L)^2, C2=(0.03L)^2.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionMismatch(f"images must be 2-D and equal size, got {a.shape} and {b.shape}")
    if window < 1 or min(a.shape) < window:
        raise DimensionMismatch(f"window {window} does not fit a {a.shape} image")
    n = float(window * window)
    c1, c2 = (SSIM_K1 * L) ** 2, (SSIM_K2 * L) ** 2
    mu_a = _window_sums(a, window) / n
    mu_b = _window_sums(b, window) / n
    var_a = _window_sums(a * a, window) / n - mu_a * mu_a
    var_b = _window_sums(b * b, window) / n - mu_b * mu_b
    cov = _window_sums(a * b, window) / n - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def load_gray(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def load_raw(path: str | Path, width: int, height: int) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if data.size != width * height:
        raise DimensionMismatch(f"{path}: {data.size} bytes, expected {width}x{height}")
    return data.reshape(height, width)


# --- verdicts & feedback ------------------------------------------------------------------


class Status(str, Enum):
    SATISFIED = "Satisfied"
    VIOLATED = "Violated"
    UNVERIFIABLE = "Unverifiable"


@dataclass(frozen=True)
class Verdict:
    status: Status
    reason: str = ""

    @classmethod
    def ok(cls) -> Verdict:
        return cls(Status.SATISFIED)

    @classmethod
    def violated(cls, reason: str) -> Verdict:
        return cls(Status.VIOLATED, reason)

    @classmethod
    def unverifiable(cls, reason: str) -> Verdict:
        return cls(Status.UNVERIFIABLE, reason)


class Category(str, Enum):
    SEMANTIC_INACCURACY = "SemanticInaccuracy"
    LAYOUT_DISTORTION = "LayoutDistortion"
    PARTIAL_ADHERENCE = "PartialAdherence"
    NUANCE_MISREAD = "NuanceMisread"
    HALLUCINATION = "Hallucination"


class Route(str, Enum):
    CRA = "CRA"
    SGA = "SGA"
    IDA = "IDA"
    MCU = "MCU"
    LSA = "LSA"


class Severity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


# error taxonomy: which stages may be blamed for each category
CATEGORY_ROUTES: dict[Category, frozenset[Route]] = {
    Category.SEMANTIC_INACCURACY: frozenset({Route.CRA, Route.SGA, Route.MCU}),
    Category.LAYOUT_DISTORTION: frozenset({Route.LSA, Route.CRA}),
    Category.PARTIAL_ADHERENCE: frozenset({Route.IDA}),
    Category.NUANCE_MISREAD: frozenset({Route.MCU, Route.IDA}),
    Category.HALLUCINATION: frozenset({Route.CRA, Route.SGA}),
}
SEVERITY_RANK = {Severity.HIGH: 0, Severity.MEDIUM: 1, Severity.LOW: 2}


def op_ref(op_id: int) -> str:
    return f"op:{op_id}"


@dataclass(frozen=True)
class FeedbackItem:
    category: Category
    route_to: Route
    target: str  # element id, "op:<id>" or "@document"
    message: str
    severity: Severity

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "route_to", Route(self.route_to))
        object.__setattr__(self, "severity", Severity(self.severity))
        if self.route_to not in CATEGORY_ROUTES[self.category]:
            raise ValueError(f"{self.category.value} feedback cannot be routed to {self.route_to.value}")

    @property
    def op_id(self) -> int | None:
        return int(self.target[3:]) if self.target.startswith("op:") else None

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "route_to": self.route_to.value,
            "target": self.target,
            "message": self.message,
            "severity": self.severity.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeedbackItem:
        return cls(d["category"], d["route_to"], d["target"], d["message"], d["severity"])


@dataclass(frozen=True)
class Thresholds:
    scs: float = 0.85
    lfi: float = 0.90
    iar: float = 0.85

    def __post_init__(self):
        for name in ("scs", "lfi", "iar"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"threshold {name} outside [0, 1]")


@dataclass
class VerificationReport:
    scs: float
    lfi: float
    iar: float
    per_op: dict[int, Verdict] = field(default_factory=dict)
    feedback: list[FeedbackItem] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.scs + self.lfi + self.iar

    def passes(self, t: Thresholds) -> bool:
        return self.scs >= t.scs and self.lfi >= t.lfi and self.iar >= t.iar

    def to_dict(self) -> dict:
        return {
            "scs": self.scs,
            "lfi": self.lfi,
            "iar": self.iar,
            "per_op": {
                str(k): {"status": v.status.value, "reason": v.reason} for k, v in sorted(self.per_op.items())
            },
            "feedback": [f.to_dict() for f in self.feedback],
            "details": self.details,
        }


def compute_iar(verdicts: Iterable[Verdict]) -> float:
    verdicts = list(verdicts)
    if not verdicts:
        return 1.0
    return sum(v.status is Status.SATISFIED for v in verdicts) / len(verdicts)


# --- SCS / LFI ----------------------------------------------------------------------------


def _targets(ops: Iterable[AtomicOp]) -> set[str]:
    out: set[str] = set()
    for o in ops:
        out |= o.touched()
    return out


def _intents(ops: Iterable[AtomicOp]) -> dict[str, list[str]]:
    goals: dict[str, list[str]] = {}
    for o in sorted(ops, key=lambda o: o.op_id):
        for eid in o.touched():
            goals.setdefault(eid, []).append(o.goal)
    return goals


def _textual(el: Element | None) -> bool:
    return el is not None and el.is_textual


def scs_detail(
    orig_ir: DocumentIR,
    mod_ir: DocumentIR,
    changed_ids: Iterable[str],
    ops: Sequence[AtomicOp],
    backend: Backend,
) -> tuple[float, dict[str, float]]:
    """SCS and each counted element's contribution."""
    targeted = _targets(ops)
    intents = _intents(ops)
    orig, mod = orig_ir.by_id(), mod_ir.by_id()
    contrib: dict[str, float] = {}
    pending: list[tuple[str, str, str]] = []
    for eid in sorted(set(changed_ids)):
        o, m = orig.get(eid), mod.get(eid)
        if eid not in targeted:
            if _textual(o) or _textual(m):
                contrib[eid] = 0.0
            continue
        if m is None or not m.is_textual:
            continue  # targeted removal is judged by IAR, not SCS
        intent = " ".join(intents.get(eid, []) + ([o.text] if o else []))
        pending.append((eid, m.text, intent))
    if pending:
        vecs = backend.embed([p[1] for p in pending] + [p[2] for p in pending])
        k = len(pending)
        for i, (eid, _, _) in enumerate(pending):
            contrib[eid] = max(0.0, cosine(vecs[i], vecs[k + i]))
    if not contrib:
        return 1.0, {}
    return sum(contrib[k] for k in sorted(contrib)) / len(contrib), contrib


def compute_scs(orig_ir, mod_ir, changed_ids, ops, backend) -> float:
    return scs_detail(orig_ir, mod_ir, changed_ids, ops, backend)[0]


def geometric_fidelity(orig_ir: DocumentIR, mod_ir: DocumentIR, targeted: Iterable[str]) -> tuple[float, dict[str, float]]:
    targeted = set(targeted)
    mod = mod_ir.by_id()
    ious = {}
    for el in orig_ir.elements:
        if el.id in targeted:
            continue
        other = mod.get(el.id)
        ious[el.id] = el.bbox.iou(other.bbox) if other is not None else 0.0
    if not ious:
        return 1.0, {}
    return sum(ious[k] for k in sorted(ious)) / len(ious), ious


def raster_fidelity(rasters: Sequence[tuple[np.ndarray, np.ndarray]], window: int = DEFAULT_WINDOW) -> float:
    # SSIM may dip below 0 for anti-correlated pages; LFI stays within [0, 1]
    return sum(max(0.0, ssim(a, b, window)) for a, b in rasters) / len(rasters)


def compute_lfi(
    orig_ir: DocumentIR,
    mod_ir: DocumentIR,
    targeted: Iterable[str] = (),
    rasters: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    weights: tuple[float, float] = LFI_WEIGHTS,
) -> float:
    g, _ = geometric_fidelity(orig_ir, mod_ir, targeted)
    if not rasters:
        return g
    w_geo, w_ras = weights
    return (w_geo * g + w_ras * raster_fidelity(rasters)) / (w_geo + w_ras)


# --- per-op checks ------------------------------------------------------------------------

JUDGE_SYSTEM = (
    "You check whether a document edit achieved its goal. Compare the original and candidate "
    'text step by step, then answer JSON {"satisfied": true|false, "reason": ...}.'
)


def _judge(op: AtomicOp, before: str, after: str, instruction: Instruction | None, backend: Backend) -> Verdict:
    parts = [f"op_id: {op.op_id}", f"op: {op.kind.value}", f"target_id: {op.target}", f"goal: {op.goal}"]
    if instruction is not None:
        parts.append(f"instruction: {instruction.text}")
    parts += ["original_text:", before, "candidate_text:", after]
    parsed = backend.complete(BackendRequest(Stage.FCV, JUDGE_SYSTEM, ("\n".join(parts),), "fcv.judge")).parsed
    if parsed["satisfied"]:
        return Verdict.ok()
    return Verdict.violated(parsed.get("reason") or "judge: goal not met")


def _grid_of(eid: str, ir: DocumentIR, sem: SemanticRep | None):
    if sem is not None and eid in sem.table_grids:
        return sem.table_grids[eid]
    el = ir.get(eid)
    return parse_table_text(el.text) if el is not None and el.text else None


def _in_order(ir: DocumentIR, ids: Sequence[str]) -> bool:
    pos = {eid: i for i, eid in enumerate(ir.reading_order)}
    if any(i not in pos for i in ids):
        return False
    return all(pos[a] < pos[b] for a, b in zip(ids, ids[1:]))


def check_op(
    op: AtomicOp,
    orig_ir: DocumentIR,
    mod_ir: DocumentIR,
    backend: Backend | None = None,
    *,
    mod_sem: SemanticRep | None = None,
    summaries: Mapping[int, str] | None = None,
    instruction: Instruction | None = None,
    judge: bool = True,
) -> Verdict:
    """Rule checks per op kind; free-text rewrites additionally need a backend judge."""
    k = op.kind
    before, after = orig_ir.get(op.target), mod_ir.get(op.target)

    if k is OpKind.DELETE_TEXT:
        return Verdict.ok() if after is None else Verdict.violated("target not deleted")

    if k is OpKind.CORRECT_TABLE_CELL:
        grid = _grid_of(op.target, mod_ir, mod_sem) if after is not None else None
        if grid is None:
            return Verdict.violated("table missing")
        row, col = op.cell
        if not (row < grid.n_rows and col < grid.n_cols):
            return Verdict.violated("cell no longer exists")
        got = grid.cell(row, col)
        return Verdict.ok() if got == op.payload["value"] else Verdict.violated(f"cell holds {got!r}")

    if k is OpKind.GENERATE_SUMMARY:
        text = (summaries or {}).get(op.op_id, "")
        if not text.strip():
            return Verdict.violated("summary missing")
        limit = op.payload.get("max_length") or (instruction.max_length if instruction else None)
        if limit and len(text.split()) > limit:
            return Verdict.violated(f"summary is too verbose: {len(text.split())} words, limit {limit}")
        into = op.payload.get("into")
        if into:
            dest = mod_ir.get(into)
            if dest is None or dest.text != text:
                return Verdict.violated(f"summary not placed into {into}")
        return Verdict.ok()

    if k is OpKind.REORDER_ELEMENTS:
        return Verdict.ok() if _in_order(mod_ir, op.payload["order"]) else Verdict.violated("order not applied")

    if after is None:
        return Verdict.violated("target missing")
    if before is not None and after.text == before.text:
        return Verdict.violated("target text unchanged")

    if k is OpKind.UPDATE_CAPTION:
        lowered = after.text.lower()
        missing = [key for key in op.payload.get("keys", []) if key.lower() not in lowered]
        return Verdict.violated("caption does not mention " + ", ".join(missing)) if missing else Verdict.ok()

    assert k in REWRITE_KINDS
    if k is OpKind.INSERT_TEXT and op.payload.get("text") and op.payload["text"] not in after.text:
        return Verdict.violated("inserted content missing")
    if not judge or backend is None:
        return Verdict.unverifiable("no judge configured")
    return _judge(op, before.text if before else "", after.text, instruction, backend)


# --- feedback -------------------------------------------------------------------------------


def describe(ir: DocumentIR, eid: str) -> str:
    el = ir.get(eid)
    if el is None:
        return f"element {eid}"
    parent = ir.parent_map().get(eid)
    head = ir.get(parent) if parent else None
    where = f" in section '{head.text}'" if head is not None and head.text else ""
    return f"{el.kind.value} {eid}{where}"


def _op_feedback(op: AtomicOp, verdict: Verdict, ir: DocumentIR) -> FeedbackItem:
    what = describe(ir, op.target) if op.target != DOCUMENT_SCOPE else "the document"
    msg = f"{what}: {verdict.reason} (goal: {op.goal})"
    if op.kind is OpKind.GENERATE_SUMMARY:
        return FeedbackItem(Category.SEMANTIC_INACCURACY, Route.SGA, op_ref(op.op_id), msg, Severity.MEDIUM)
    if op.kind in (OpKind.DELETE_TEXT, OpKind.REORDER_ELEMENTS):
        return FeedbackItem(Category.PARTIAL_ADHERENCE, Route.IDA, op_ref(op.op_id), msg, Severity.MEDIUM)
    return FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, op_ref(op.op_id), msg, Severity.MEDIUM)


def verify(
    orig_ir: DocumentIR,
    mod_ir: DocumentIR,
    orig_sem: SemanticRep | None,
    mod_sem: SemanticRep | None,
    instruction: Instruction | None,
    ops: Sequence[AtomicOp],
    backend: Backend,
    *,
    summaries: Mapping[int, str] | None = None,
    warnings: Sequence[OverflowWarning] = (),
    rasters: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    judge: bool = True,
    thresholds: Thresholds = Thresholds(),
    repair_ops: Sequence[AtomicOp] = (),
    lfi_weights: tuple[float, float] = LFI_WEIGHTS,
) -> VerificationReport:
    """Score ``mod_ir`` against the original and the instruction.

    ``ops`` are the instruction's operations and feed IAR. ``repair_ops`` are
    feedback-driven follow-ups: they widen the targeted set and the intents for
    SCS but are not themselves scored.
    """
    all_ops = list(ops) + list(repair_ops)
    targeted = _targets(all_ops)
    d = diff_ir(orig_ir, mod_ir)
    scs, contrib = scs_detail(orig_ir, mod_ir, d.all_changed, all_ops, backend)
    geo, ious = geometric_fidelity(orig_ir, mod_ir, targeted)
    if rasters:
        w_geo, w_ras = lfi_weights
        lfi = (w_geo * geo + w_ras * raster_fidelity(rasters)) / (w_geo + w_ras)
    else:
        lfi = geo

    per_op = {
        op.op_id: check_op(
            op, orig_ir, mod_ir, backend, mod_sem=mod_sem, summaries=summaries, instruction=instruction, judge=judge
        )
        for op in sorted(ops, key=lambda o: o.op_id)
    }
    iar = compute_iar(per_op.values())

    feedback: list[FeedbackItem] = []
    by_op = {o.op_id: o for o in ops}
    for op_id, v in per_op.items():
        if v.status is Status.VIOLATED:
            feedback.append(_op_feedback(by_op[op_id], v, orig_ir))

    summary_dest = {o.payload["into"] for o in all_ops if o.kind is OpKind.GENERATE_SUMMARY and o.payload.get("into")}
    for eid in sorted(contrib):
        if eid not in targeted:
            feedback.append(
                FeedbackItem(
                    Category.SEMANTIC_INACCURACY,
                    Route.CRA,
                    eid,
                    f"{describe(orig_ir, eid)} changed although no operation targeted it",
                    Severity.HIGH,
                )
            )
        elif scs < thresholds.scs and contrib[eid] < thresholds.scs:
            route = Route.SGA if eid in summary_dest else Route.CRA
            feedback.append(
                FeedbackItem(
                    Category.SEMANTIC_INACCURACY,
                    route,
                    eid,
                    f"{describe(orig_ir, eid)} drifted from its intended content (similarity {contrib[eid]:.2f})",
                    Severity.MEDIUM,
                )
            )
    for eid in sorted(ious):
        if ious[eid] < 1.0:
            what = "is missing" if mod_ir.get(eid) is None else f"moved (IoU {ious[eid]:.2f})"
            feedback.append(
                FeedbackItem(
                    Category.LAYOUT_DISTORTION,
                    Route.CRA,
                    eid,
                    f"{describe(orig_ir, eid)} {what} although no operation targeted it",
                    Severity.HIGH,
                )
            )
    if lfi < thresholds.lfi and all(v >= 1.0 for v in ious.values()):
        feedback.append(
            FeedbackItem(
                Category.LAYOUT_DISTORTION,
                Route.LSA,
                DOCUMENT_SCOPE,
                f"rendered pages differ from the original (LFI {lfi:.2f})",
                Severity.MEDIUM,
            )
        )
    for w in warnings:
        feedback.append(
            FeedbackItem(
                Category.LAYOUT_DISTORTION,
                Route.CRA,
                w.element_id,
                f"{describe(mod_ir, w.element_id)} is too verbose for its box "
                f"({w.needed_lines} lines needed, {w.capacity_lines} available)",
                Severity.LOW,
            )
        )
    if iar < thresholds.iar and not any(v.status is Status.VIOLATED for v in per_op.values()):
        unverified = sum(v.status is Status.UNVERIFIABLE for v in per_op.values())
        feedback.append(
            FeedbackItem(
                Category.PARTIAL_ADHERENCE,
                Route.IDA,
                DOCUMENT_SCOPE,
                f"{unverified} of {len(per_op)} operations could not be verified",
                Severity.LOW,
            )
        )

    return VerificationReport(
        scs,
        lfi,
        iar,
        per_op,
        feedback,
        {
            "scs_contributions": {k: contrib[k] for k in sorted(contrib)},
            "geometric_fidelity": geo,
        },
    )


# --- scoring against a gold document ----------------------------------------------------------


def check_op_against_gold(
    op: AtomicOp,
    mod_ir: DocumentIR,
    mod_sem: SemanticRep | None,
    gold_ir: DocumentIR,
    summaries: Mapping[int, str] | None = None,
) -> Verdict:
    k = op.kind
    if k is OpKind.DELETE_TEXT:
        if gold_ir.get(op.target) is not None:
            return Verdict.violated("gold keeps the target")
        return Verdict.ok() if mod_ir.get(op.target) is None else Verdict.violated("target not deleted")
    if k is OpKind.CORRECT_TABLE_CELL:
        row, col = op.cell
        mine = _grid_of(op.target, mod_ir, mod_sem)
        gold = _grid_of(op.target, gold_ir, None)
        want = gold.cell(row, col) if gold is not None and row < gold.n_rows and col < gold.n_cols else op.payload["value"]
        if mine is None or not (row < mine.n_rows and col < mine.n_cols):
            return Verdict.violated("table missing")
        return Verdict.ok() if mine.cell(row, col) == want else Verdict.violated(f"cell differs from gold {want!r}")
    if k is OpKind.REORDER_ELEMENTS:
        ids = op.payload["order"]
        gpos = {e: i for i, e in enumerate(gold_ir.reading_order)}
        expected = sorted((i for i in ids if i in gpos), key=gpos.get)
        return Verdict.ok() if _in_order(mod_ir, expected) else Verdict.violated("order differs from gold")
    if k is OpKind.GENERATE_SUMMARY:
        into = op.payload.get("into")
        if not into:
            text = (summaries or {}).get(op.op_id, "")
            return Verdict.ok() if text.strip() else Verdict.violated("summary missing")
        target = into
    else:
        target = op.target
    mine, gold = mod_ir.get(target), gold_ir.get(target)
    if gold is None or mine is None:
        return Verdict.violated("target missing")
    return Verdict.ok() if element_bytes(mine) == element_bytes(gold) else Verdict.violated("differs from gold")


def score_against_gold(
    mod_ir: DocumentIR,
    mod_sem: SemanticRep | None,
    gold_ir: DocumentIR,
    ops: Sequence[AtomicOp],
    backend: Backend,
    *,
    summaries: Mapping[int, str] | None = None,
    rasters: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    lfi_weights: tuple[float, float] = LFI_WEIGHTS,
) -> tuple[float, float, float]:
    """Benchmark scoring: (SCS, LFI, IAR) of a pipeline output against the gold document."""
    mine, gold = mod_ir.by_id(), gold_ir.by_id()
    ids = sorted(i for i in mine.keys() | gold.keys() if _textual(mine.get(i)) or _textual(gold.get(i)))
    scores: dict[str, float] = {}
    pairs = []
    for i in ids:
        m, g = mine.get(i), gold.get(i)
        if m is None or g is None:
            scores[i] = 0.0
        elif m.text == g.text:
            scores[i] = 1.0
        else:
            pairs.append((i, m.text, g.text))
    if pairs:
        vecs = backend.embed([p[1] for p in pairs] + [p[2] for p in pairs])
        for n, (i, _, _) in enumerate(pairs):
            scores[i] = max(0.0, cosine(vecs[n], vecs[len(pairs) + n]))
    scs = sum(scores[i] for i in ids) / len(ids) if ids else 1.0

    lfi = compute_lfi(gold_ir, mod_ir, (), rasters, lfi_weights)

    if ops:
        iar = compute_iar(check_op_against_gold(o, mod_ir, mod_sem, gold_ir, summaries) for o in ops)
    else:
        iar = 1.0 if serialize_ir(mod_ir) == serialize_ir(gold_ir) else 0.0
    return scs, lfi, iar
