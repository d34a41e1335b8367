from __future__ import annotations

import json

import pytest

from docrefine.backend import MockBackend
from docrefine.errors import PipelineError
from docrefine.fcv import Category, FeedbackItem, Route, Severity
from docrefine.ida import AtomicOp, Instruction, OpKind
from docrefine.ir import serialize_ir
from docrefine.orchestrator import LoopConfig, route_feedback, run, write_run
from scenarios import (
    P1,
    P2,
    always_failing_script,
    feedback_message,
    loop_doc,
    two_iteration_script,
    zero_op_script,
)

INSTR = Instruction("tighten the results section")


class TestLoopConfig:
    def test_defaults(self):
        cfg = LoopConfig()
        assert (cfg.max_iterations, cfg.tau_scs, cfg.tau_lfi, cfg.tau_iar, cfg.keep_best) == (3, 0.85, 0.90, 0.85, True)

    @pytest.mark.parametrize("kw", [{"max_iterations": 0}, {"tau_scs": 1.5}, {"tau_iar": -0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LoopConfig(**kw)


class TestRun:
    def test_two_iteration_convergence(self):
        mb = MockBackend(two_iteration_script())
        rr = run(loop_doc(), INSTR, LoopConfig(), mb)
        it1, it2 = rr.trace.iterations
        assert it1.report.iar == 0.5
        assert [f.target for f in it1.report.feedback if f.op_id is not None] == ["op:2"]
        # one feedback-derived rewrite of p2
        assert [(o.kind, o.target) for o in it2.repair_ops] == [(OpKind.REWRITE_TEXT, "p2")]
        assert it2.repair_ops[0].goal == feedback_message()
        assert not it2.redecomposed
        assert rr.report.passes(LoopConfig().thresholds)
        assert (rr.report.scs, rr.report.lfi, rr.report.iar) == (pytest.approx(1.0), 1.0, 1.0)
        assert rr.trace.best_index == 2
        assert rr.result.new_ir.get("p1").text == "tighten " + P1

    def test_always_failing_stops_at_budget(self):
        rr = run(loop_doc(), INSTR, LoopConfig(), MockBackend(always_failing_script()))
        assert len(rr.trace) == 3
        sums = [r.report.total for r in rr.trace.iterations]
        best = max(range(3), key=lambda k: (sums[k], -k))
        assert rr.trace.best_index == best + 1
        assert rr.report.total == max(sums)
        # iteration 1 output is unrelated to the goal, so a later one must win
        assert best > 0 and sums[best] > sums[0]

    def test_keep_best_off_returns_last(self):
        cfg = LoopConfig(keep_best=False)
        rr = run(loop_doc(), INSTR, cfg, MockBackend(always_failing_script()))
        assert rr.trace.best_index == 3
        assert rr.report is rr.trace.iterations[-1].report

    def test_zero_ops_is_identity(self):
        ir = loop_doc()
        rr = run(ir, INSTR, LoopConfig(), MockBackend(zero_op_script()))
        assert len(rr.trace) == 1
        assert serialize_ir(rr.result.new_ir) == serialize_ir(ir)
        assert (rr.report.scs, rr.report.lfi, rr.report.iar) == (1.0, 1.0, 1.0)

    def test_budget_one(self):
        rr = run(loop_doc(), INSTR, LoopConfig(max_iterations=1), MockBackend(always_failing_script()))
        assert len(rr.trace) == 1 and rr.trace.best_index == 1

    def test_stage_error_carries_trace(self):
        script = two_iteration_script()
        script["rules"] = script["rules"][1:]  # follow-up rewrite now falls through to a miss
        del script["rules"][1]
        with pytest.raises(PipelineError) as info:
            run(loop_doc(), INSTR, LoopConfig(), MockBackend(script))
        assert "iteration 1" in str(info.value)
        assert len(info.value.trace) == 0

    def test_error_in_second_iteration_keeps_first(self):
        script = two_iteration_script()
        script["rules"] = script["rules"][1:]
        script["rules"].insert(0, {"stage": "CRA", "contains": "goal: Paragraph p2", "response": {"wrong": 1}})
        with pytest.raises(PipelineError) as info:
            run(loop_doc(), INSTR, LoopConfig(), MockBackend(script))
        assert len(info.value.trace) == 1

    def test_write_run_deterministic(self, tmp_path):
        outs = []
        for i in range(2):
            rr = run(loop_doc(), INSTR, LoopConfig(), MockBackend(two_iteration_script()))
            write_run(rr, tmp_path / str(i))
            outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / str(i)).iterdir())})
        assert outs[0] == outs[1]
        assert {"out.ir.json", "report.json", "trace.json", "out.ops.json"} <= set(outs[0])
        trace = json.loads(outs[0]["trace.json"])
        assert trace["best_iteration"] == 2 and len(trace["iterations"]) == 2
        assert "wall_time" not in trace["iterations"][0]

    def test_write_run_timing(self, tmp_path):
        rr = run(loop_doc(), INSTR, LoopConfig(), MockBackend(zero_op_script()))
        write_run(rr, tmp_path, timing=True)
        assert "wall_time" in json.loads((tmp_path / "trace.json").read_text())["iterations"][0]


class TestRouteFeedback:
    def test_verbose_paragraph(self):
        msg = "p7 runs long for its box and repeats the setup"
        item = FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, "p7", msg, Severity.MEDIUM)
        ops, redo = route_feedback([item], INSTR)
        assert not redo
        assert [(o.kind, o.target, o.payload["goal"]) for o in ops] == [(OpKind.REWRITE_TEXT, "p7", msg)]

    def test_ida_item_sets_flag(self):
        item = FeedbackItem(Category.PARTIAL_ADHERENCE, Route.IDA, "@document", "missing step", Severity.LOW)
        assert route_feedback([item], INSTR) == ([], True)

    @pytest.mark.parametrize("route", [Route.MCU, Route.LSA])
    def test_other_stages_set_flag(self, route):
        cat = Category.NUANCE_MISREAD if route is Route.MCU else Category.LAYOUT_DISTORTION
        ops, redo = route_feedback([FeedbackItem(cat, route, "p1", "m", Severity.LOW)], INSTR)
        assert ops == [] and redo

    def test_severity_order(self):
        items = [
            FeedbackItem(Category.LAYOUT_DISTORTION, Route.CRA, "a", "low one", Severity.LOW),
            FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, "b", "high one", Severity.HIGH),
            FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, "c", "medium one", Severity.MEDIUM),
        ]
        ops, _ = route_feedback(items, INSTR, next_op_id=10)
        assert [(o.op_id, o.target) for o in ops] == [(10, "b"), (11, "c"), (12, "a")]

    def test_summary_op_follow_up(self):
        src = AtomicOp(1, OpKind.GENERATE_SUMMARY, "h", {"max_length": 30, "into": "p1"})
        item = FeedbackItem(Category.SEMANTIC_INACCURACY, Route.SGA, "op:1", "too long", Severity.MEDIUM)
        ops, redo = route_feedback([item], INSTR, [src], next_op_id=2)
        assert not redo
        (op,) = ops
        assert op.kind is OpKind.GENERATE_SUMMARY
        assert op.payload == {"goal": "too long", "into": "p1", "max_length": 30, "supersedes": 1}

    def test_duplicate_targets_collapse(self):
        items = [FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, "p1", m, Severity.MEDIUM) for m in "xy"]
        ops, _ = route_feedback(items, INSTR)
        assert [o.payload["goal"] for o in ops] == ["x"]

    def test_table_cell_retry_redecomposes(self):
        src = AtomicOp(1, OpKind.CORRECT_TABLE_CELL, "t", {"value": "1"}, cell=(0, 0))
        item = FeedbackItem(Category.SEMANTIC_INACCURACY, Route.CRA, "op:1", "wrong", Severity.MEDIUM)
        assert route_feedback([item], INSTR, [src]) == ([], True)


def test_run_texts_untouched_outside_targets():
    rr = run(loop_doc(), INSTR, LoopConfig(), MockBackend(two_iteration_script()))
    assert rr.result.new_ir.get("h").text == "Results"
    assert P2 in rr.result.new_ir.get("p2").text
