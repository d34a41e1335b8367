"""Exit criteria for the build. Run alone with ``pytest -m acceptance``."""

from __future__ import annotations

import csv
import itertools
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from docrefine.backend import MockBackend, mock_embed
from docrefine.cli import main
from docrefine.fcv import Status, Verdict, compute_iar, cosine, ssim, verify
from docrefine.ida import AtomicOp, Instruction, OpKind, decompose, validate_ops
from docrefine.ir import deserialize_ir, element_bytes, serialize_ir
from docrefine.lsa import xy_cut_order
from docrefine.mcu import structural_rep
from docrefine.orchestrator import LoopConfig, run
from docrefine.refine import apply_ops
from scenarios import always_failing_script, loop_doc, two_iteration_script
from strategies import doc, el, valid_irs
from test_fcv import naive_ssim
from test_ida import SUMMARY_AND_POLISH, SIX_STEPS, sample_article
from test_lsa import _two_column_layout

acceptance = pytest.mark.acceptance
DATASET = Path(__file__).resolve().parents[1] / "datasets" / "synthetic"


@acceptance("SSIM oracle equivalence")
def test_ssim_oracle_equivalence():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        a = rng.integers(0, 256, (16, 16))
        b = rng.integers(0, 256, (16, 16))
        s = ssim(a, b)
        worst = max(worst, abs(s - naive_ssim(a, b)))
        assert abs(ssim(a, a) - 1.0) <= 1e-9
        assert abs(s - ssim(b, a)) <= 1e-12
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-6
    assert elapsed < 5.0


@acceptance("Cosine and embedding")
def test_cosine_and_embeddings():
    rng = random.Random(99)
    words = "layout table figure caption summary abstract section paragraph model result".split()
    for _ in range(500):
        text = " ".join(rng.choices(words, k=rng.randint(1, 12)))
        v = np.asarray(mock_embed(text))
        assert abs(float(np.linalg.norm(v)) - 1.0) <= 1e-6
    for _ in range(1000):
        n = rng.randint(1, 64)
        u = [rng.gauss(0, 1) for _ in range(n)]
        w = [rng.gauss(0, 1) for _ in range(n)]
        direct = sum(x * y for x, y in zip(u, w)) / (
            math.sqrt(sum(x * x for x in u)) * math.sqrt(sum(y * y for y in w))
        )
        assert abs(cosine(u, w) - direct) <= 1e-12


@acceptance("Reading order")
def test_reading_order():
    rng = random.Random(7)
    for _ in range(25):
        els, expected = _two_column_layout(rng)
        assert list(xy_cut_order(els)) == expected
    for _ in range(1000):
        n = rng.randint(1, 15)
        els = []
        for i in range(n):
            x0, y0 = rng.uniform(0, 550), rng.uniform(0, 740)
            els.append(el(f"e{i}", "Paragraph", x0, y0, x0 + rng.uniform(1, 60), y0 + rng.uniform(1, 50)))
        rng.shuffle(els)
        order = list(xy_cut_order(els))
        assert sorted(order) == sorted(e.id for e in els) and len(set(order)) == n


@acceptance("IR round-trip")
@settings(max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(valid_irs())
def test_ir_round_trip(ir):
    blob = serialize_ir(ir)
    back = deserialize_ir(blob)
    assert back == ir.canonical()
    assert deserialize_ir(serialize_ir(back)) == back
    assert serialize_ir(back) == blob


@acceptance("IAR exactness")
def test_iar_exactness():
    kinds = (Verdict.ok(), Verdict.violated("r"), Verdict.unverifiable("r"))
    checked = 0
    for n in range(1, 5):
        for vec in itertools.product(kinds, repeat=n):
            satisfied = sum(v.status is Status.SATISFIED for v in vec)
            assert compute_iar(list(vec)) == satisfied / n
            checked += 1
    assert checked == 3 + 9 + 27 + 81


@acceptance("Identity edit")
def test_identity_edit():
    for ir in (loop_doc(), sample_article()):
        sem = structural_rep(ir)
        r = verify(ir, ir, sem, sem, Instruction("leave it alone"), [], MockBackend())
        assert (r.scs, r.lfi, r.iar) == (1.0, 1.0, 1.0)
        assert r.feedback == []


def _random_doc(rng: random.Random):
    els, hier, y = [], [], 40.0
    head = None
    for i in range(rng.randint(2, 9)):
        kind = rng.choice(["Heading", "Paragraph", "Paragraph", "ListItem", "Footnote", "Table"])
        h = rng.uniform(15, 70)
        text = "a\tb\nc\td" if kind == "Table" else f"{kind.lower()} {i} " + "words " * rng.randint(1, 8)
        els.append(el(f"e{i}", kind, 72, y, 540, y + h, text.strip(), 1 if kind == "Heading" else None))
        if kind == "Heading":
            head = f"e{i}"
        elif head is not None:
            hier.append((head, f"e{i}"))
        y += h + rng.uniform(5, 20)
    return doc(*els, hierarchy=hier)


def _random_op_subset(rng: random.Random, ir, sem):
    cands = []
    for e in ir.elements:
        if e.kind.value == "Table":
            cands.append(AtomicOp(0, OpKind.CORRECT_TABLE_CELL, e.id, {"value": "9"}, cell=(1, 0)))
        elif e.kind.value == "Heading":
            cands.append(AtomicOp(0, OpKind.FORMAT_UNIFY, e.id))
        else:
            cands += [AtomicOp(0, OpKind.REWRITE_TEXT, e.id), AtomicOp(0, OpKind.DELETE_TEXT, e.id),
                      AtomicOp(0, OpKind.INSERT_TEXT, e.id, {"text": "extra"})]
    for _ in range(50):
        picked = rng.sample(cands, rng.randint(0, min(4, len(cands))))
        ops = [AtomicOp(i, o.kind, o.target, o.payload, o.rationale, o.cell) for i, o in enumerate(picked, 1)]
        if not validate_ops(ops, ir, sem):
            return ops
    return []


@acceptance("Untargeted immutability")
def test_untargeted_immutability():
    rng = random.Random(31337)
    mb = MockBackend({"defaults": {"CRA": {"text": "changed by the model"}}})
    for _ in range(200):
        ir = _random_doc(rng)
        sem = structural_rep(ir)
        ops = _random_op_subset(rng, ir, sem)
        res = apply_ops(ir, sem, ops, mb)
        targeted = set().union(*(o.touched() for o in ops)) if ops else set()
        after = res.new_ir.by_id()
        for e in ir.elements:
            if e.id not in targeted:
                assert element_bytes(after[e.id]) == element_bytes(e)


@acceptance("Closed loop")
def test_closed_loop():
    cfg = LoopConfig()
    rr = run(loop_doc(), Instruction("tighten the results"), cfg, MockBackend(two_iteration_script()))
    assert len(rr.trace) == 2
    assert rr.report.scs >= cfg.tau_scs and rr.report.lfi >= cfg.tau_lfi and rr.report.iar >= cfg.tau_iar

    rr = run(loop_doc(), Instruction("tighten the results"), cfg, MockBackend(always_failing_script()))
    assert len(rr.trace) == 3
    assert not rr.report.passes(cfg.thresholds)
    assert rr.report.total == max(it.report.total for it in rr.trace.iterations)


@acceptance("Determinism")
def test_refine_determinism(tmp_path):
    import json

    src = tmp_path / "in.ir.json"
    src.write_bytes(serialize_ir(loop_doc()))
    mock = tmp_path / "mock.json"
    mock.write_text(json.dumps(two_iteration_script()))
    trees = []
    for i in range(3):
        out = tmp_path / f"run{i}"
        assert main(["refine", str(src), str(out), "--instruction", "tighten", "--mock", str(mock)]) == 0
        trees.append({p.name: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert trees[0] and trees[0] == trees[1] == trees[2]


@acceptance("Bench sanity")
def test_bench_sanity(tmp_path):
    report = tmp_path / "bench.csv"
    t0 = time.perf_counter()
    assert main(["bench", "--dataset", str(DATASET), "--report", str(report)]) == 0
    assert time.perf_counter() - t0 < 60
    with open(report, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert sum(r["case"] != "mean" for r in rows) >= 5
    overall = [r for r in rows if r["category"] == "overall"]
    assert len(overall) == 1
    assert [float(overall[0][k]) for k in ("scs", "lfi", "iar")] == [1.0, 1.0, 1.0]


@acceptance("Worked example")
def test_worked_example():
    ir = sample_article()
    sem = structural_rep(ir)
    ops, _ = decompose(Instruction(SUMMARY_AND_POLISH), sem, ir, MockBackend({"defaults": {"IDA": SIX_STEPS}}))
    assert len(ops) == 6
    assert validate_ops(ops, ir, sem) == []
    ids = ir.ids()
    assert all(o.target in ids for o in ops)
