"""Closed-loop controller: analyze -> understand -> decompose -> refine -> verify, repeat."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend import Backend
from .errors import DocRefineError, PipelineError
from .fcv import (
    SEVERITY_RANK,
    FeedbackItem,
    Route,
    Thresholds,
    VerificationReport,
    verify,
)
from .ida import DOCUMENT_SCOPE, AmbiguityNote, AtomicOp, Instruction, OpKind, decompose, ops_to_json, validate_ops
from .ir import DocumentIR, diff_ir
from .lsa import DEFAULT_CAPTION_GAP, DEFAULT_GAP, IngestSource, analyze
from .mcu import SemanticRep, understand
from .refine import RefinementResult, apply_ops, write_result

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopConfig:
    max_iterations: int = 3
    tau_scs: float = 0.85
    tau_lfi: float = 0.90
    tau_iar: float = 0.85
    keep_best: bool = True
    judge: bool = True
    gap_threshold: float = DEFAULT_GAP
    caption_gap: float = DEFAULT_CAPTION_GAP

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        self.thresholds  # validates ranges

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.tau_scs, self.tau_lfi, self.tau_iar)


@dataclass
class IterationRecord:
    index: int
    ops: list[AtomicOp]
    repair_ops: list[AtomicOp]
    report: VerificationReport
    feedback_consumed: list[FeedbackItem]
    redecomposed: bool
    wall_time: float

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "iteration": self.index,
            "ops": [o.to_dict() for o in self.ops],
            "repair_ops": [o.to_dict() for o in self.repair_ops],
            "feedback_consumed": [f.to_dict() for f in self.feedback_consumed],
            "redecomposed": self.redecomposed,
            "scores": {"scs": self.report.scs, "lfi": self.report.lfi, "iar": self.report.iar},
            "feedback_emitted": [f.to_dict() for f in self.report.feedback],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class IterationTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    best_index: int | None = None

    def __len__(self) -> int:
        return len(self.iterations)

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "best_iteration": self.best_index,
            "iterations": [r.to_dict(timing) for r in self.iterations],
        }


@dataclass
class RunResult:
    result: RefinementResult
    report: VerificationReport
    trace: IterationTrace
    original_ir: DocumentIR
    original_sem: SemanticRep
    ops: list[AtomicOp]
    notes: list[AmbiguityNote]


def route_feedback(
    items: Sequence[FeedbackItem],
    instruction: Instruction | None = None,
    ops: Sequence[AtomicOp] = (),
    *,
    next_op_id: int = 1,
) -> tuple[list[AtomicOp], bool]:
    """Turn feedback into follow-up ops for the refine stage.

    CRA/SGA items become targeted RewriteText / GenerateSummary ops carrying the
    feedback message as their goal. Anything routed to IDA, MCU or LSA sets the
    re-decompose flag instead.
    """
    by_id = {o.op_id: o for o in ops}
    follow: list[AtomicOp] = []
    redecompose = False
    seen: set[tuple[str, str]] = set()
    ranked = sorted(enumerate(items), key=lambda p: (SEVERITY_RANK[p[1].severity], p[0]))
    for _, item in ranked:
        if item.route_to not in (Route.CRA, Route.SGA):
            redecompose = True
            continue
        src = by_id.get(item.op_id) if item.op_id is not None else None
        if src is not None and src.kind is OpKind.GENERATE_SUMMARY:
            payload = {k: v for k, v in src.payload.items() if k in ("into", "max_length")}
            payload.update(goal=item.message, supersedes=src.op_id)
            op = AtomicOp(0, OpKind.GENERATE_SUMMARY, src.target, payload, "verifier feedback")
        elif src is not None:
            if src.kind is OpKind.CORRECT_TABLE_CELL:
                # structural edits are deterministic; retrying them cannot help
                redecompose = True
                continue
            target = src.target
            op = AtomicOp(0, OpKind.REWRITE_TEXT, target, {"goal": item.message}, "verifier feedback")
        elif item.target != DOCUMENT_SCOPE:
            op = AtomicOp(0, OpKind.REWRITE_TEXT, item.target, {"goal": item.message}, "verifier feedback")
        else:
            redecompose = True
            continue
        key = (op.kind.value, op.target)
        if key in seen:
            continue
        seen.add(key)
        follow.append(op)
    follow = [
        AtomicOp(next_op_id + i, o.kind, o.target, o.payload, o.rationale) for i, o in enumerate(follow)
    ]
    return follow, redecompose


def _verify(cfg, ir, sem, result, instruction, ops, repairs, backend) -> VerificationReport:
    return verify(
        ir,
        result.new_ir,
        sem,
        result.new_sem,
        instruction,
        ops,
        backend,
        summaries=result.summaries,
        warnings=result.warnings,
        judge=cfg.judge,
        thresholds=cfg.thresholds,
        repair_ops=repairs,
    )


def run(
    src: IngestSource | DocumentIR,
    instruction: Instruction,
    cfg: LoopConfig,
    backend: Backend,
) -> RunResult:
    """Run the full loop; stops at thresholds or after ``cfg.max_iterations`` iterations."""
    trace = IterationTrace()
    try:
        ir = src if isinstance(src, DocumentIR) else analyze(
            src, backend, gap_threshold=cfg.gap_threshold, caption_gap=cfg.caption_gap
        )
        sem = understand(ir, backend)
    except DocRefineError as exc:
        raise PipelineError(f"analysis failed: {exc}", trace) from exc

    states: list[tuple[RefinementResult, VerificationReport, list[AtomicOp]]] = []
    ops: list[AtomicOp] = []
    notes: list[AmbiguityNote] = []
    repairs: list[AtomicOp] = []
    result: RefinementResult | None = None
    report: VerificationReport | None = None

    for i in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        consumed: list[FeedbackItem] = []
        redecomposed = False
        new_repairs: list[AtomicOp] = []
        try:
            if i == 1:
                ops, notes = decompose(instruction, sem, ir, backend)
                result = apply_ops(ir, sem, ops, backend, instruction=instruction)
            else:
                consumed = list(report.feedback)
                follow, redecompose = route_feedback(
                    consumed, instruction, ops, next_op_id=max([o.op_id for o in ops + repairs], default=0) + 1
                )
                if redecompose:
                    redecomposed = True
                    ops, notes = decompose(instruction, sem, ir, backend, feedback=[f.message for f in consumed])
                    repairs = []
                    result = apply_ops(ir, sem, ops, backend, instruction=instruction)
                else:
                    bad = {v.subjects[0] for v in validate_ops(follow, result.new_ir, result.new_sem)}
                    new_repairs = [o for o in follow if str(o.op_id) not in bad]
                    for o in follow:
                        if str(o.op_id) in bad:
                            log.warning("dropping follow-up op on %s: not applicable", o.target)
                    prev = result
                    step = apply_ops(prev.new_ir, prev.new_sem, new_repairs, backend, instruction=instruction)
                    repairs = repairs + new_repairs
                    result = RefinementResult(
                        step.new_sem,
                        step.new_ir,
                        diff_ir(ir, step.new_ir).all_changed,
                        {**prev.summaries, **step.summaries},
                        step.warnings,
                    )
            report = _verify(cfg, ir, sem, result, instruction, ops, repairs, backend)
        except DocRefineError as exc:
            raise PipelineError(f"iteration {i} failed: {exc}", trace) from exc

        trace.iterations.append(
            IterationRecord(i, list(ops), list(new_repairs), report, consumed, redecomposed, time.perf_counter() - t0)
        )
        states.append((result, report, list(ops)))
        log.info("iteration %d: scs=%.3f lfi=%.3f iar=%.3f", i, report.scs, report.lfi, report.iar)
        if report.passes(cfg.thresholds) or not report.feedback:
            break

    if cfg.keep_best:
        best = max(range(len(states)), key=lambda k: (states[k][1].total, -k))
    else:
        best = len(states) - 1
    trace.best_index = best + 1
    final_result, final_report, final_ops = states[best]
    return RunResult(final_result, final_report, trace, ir, sem, final_ops, notes)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def write_run(run_result: RunResult, out_dir: str | Path, *, timing: bool = False) -> None:
    out = Path(out_dir)
    write_result(run_result.result, out)
    (out / "report.json").write_bytes(_json_bytes(run_result.report.to_dict()))
    (out / "trace.json").write_bytes(_json_bytes(run_result.trace.to_dict(timing)))
    (out / "out.ops.json").write_bytes(ops_to_json(run_result.ops, run_result.notes))
