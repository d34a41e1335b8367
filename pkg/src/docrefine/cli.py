"""Command-line entry point: ``docrefine analyze | refine | verify | bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .backend import Backend, MockBackend, MockScript, make_backend
from .bench import run_bench
from .config import load_config
from .errors import DocRefineError, PipelineError
from .fcv import load_gray, verify
from .ida import Instruction, ops_from_json
from .ir import deserialize_ir, serialize_ir
from .lsa import IngestSource, analyze
from .mcu import SemanticRep, structural_rep
from .orchestrator import run, write_run
from .refine import load_summaries

log = logging.getLogger("docrefine")


def _instruction_text(value: str) -> str:
    if value.startswith("@"):
        return Path(value[1:]).read_text(encoding="utf-8").strip()
    return value


def _backend(args, backend_cfg, script_path) -> Backend:
    if getattr(args, "mock", None):
        return MockBackend(MockScript.load(args.mock), concurrency_limit=backend_cfg.concurrency_limit)
    return make_backend(backend_cfg, script_path)


def _sem(path: str | None, ir) -> SemanticRep:
    if path:
        return SemanticRep.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    return structural_rep(ir)


def cmd_analyze(args) -> int:
    _, backend_cfg, script = load_config(args.config)
    backend = _backend(args, backend_cfg, script) if args.vision else None
    ir = analyze(
        IngestSource.from_path(args.input),
        backend,
        gap_threshold=args.gap,
        caption_gap=args.caption_gap,
        vision=args.vision,
        raster_dir=args.raster_dir,
    )
    Path(args.out).write_bytes(serialize_ir(ir))
    log.info("wrote %s (%d elements)", args.out, len(ir.elements))
    return 0


def cmd_refine(args) -> int:
    loop_cfg, backend_cfg, script = load_config(args.config)
    if args.max_iterations is not None:
        loop_cfg = replace(loop_cfg, max_iterations=args.max_iterations)
    backend = _backend(args, backend_cfg, script)
    instruction = Instruction(_instruction_text(args.instruction), args.max_length, args.style)
    res = run(IngestSource.from_path(args.input), instruction, loop_cfg, backend)
    write_run(res, args.out, timing=args.timing)
    r = res.report
    print(f"scs={r.scs:.3f} lfi={r.lfi:.3f} iar={r.iar:.3f} iterations={len(res.trace)}")
    return 0


def cmd_verify(args) -> int:
    loop_cfg, backend_cfg, script = load_config(args.config)
    backend = _backend(args, backend_cfg, script)
    orig = deserialize_ir(Path(args.original).read_bytes())
    mod = deserialize_ir(Path(args.modified).read_bytes())
    ops = ops_from_json(Path(args.ops).read_bytes())
    instruction = Instruction(_instruction_text(args.instruction), args.max_length)
    rasters = None
    if args.raster_pair:
        rasters = [(load_gray(a), load_gray(b)) for a, b in args.raster_pair]
    report = verify(
        orig,
        mod,
        _sem(args.original_sem, orig),
        _sem(args.modified_sem, mod),
        instruction,
        ops,
        backend,
        summaries=load_summaries(args.summaries) if args.summaries else None,
        rasters=rasters,
        judge=loop_cfg.judge and not args.no_judge,
        thresholds=loop_cfg.thresholds,
    )
    blob = json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    Path(args.report).write_text(blob, encoding="utf-8")
    print(f"scs={report.scs:.3f} lfi={report.lfi:.3f} iar={report.iar:.3f} feedback={len(report.feedback)}")
    return 0


def cmd_bench(args) -> int:
    loop_cfg, backend_cfg, script = load_config(args.config)
    backend = None
    if backend_cfg.mode == "live" or script is not None:
        backend = make_backend(backend_cfg, script)
    t0 = time.perf_counter()
    report = run_bench(args.dataset, loop_cfg, backend, jobs=args.jobs)
    report.write_csv(args.report)
    for row in report.means():
        print(f"{row.category}: scs={row.scs:.3f} lfi={row.lfi:.3f} iar={row.iar:.3f} ({row.status})")
    log.info("bench finished in %.2fs", time.perf_counter() - t0)
    if report.failed:
        print(f"{len(report.failed)} case(s) failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="docrefine", description="instruction-driven document refinement")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mock=True):
        p.add_argument("--config", help="INI file with [loop] and [backend] sections")
        if mock:
            p.add_argument("--mock", help="mock script JSON; forces the scripted backend")

    p = sub.add_parser("analyze", help="layout analysis to a canonical IR file")
    p.add_argument("input", help="PDF or layout JSON")
    p.add_argument("out", help="output *.ir.json")
    p.add_argument("--gap", type=float, default=8.0, help="minimum whitespace gap for an XY cut (pt)")
    p.add_argument("--caption-gap", type=float, default=20.0)
    p.add_argument("--vision", action="store_true", help="let the model relabel image regions")
    p.add_argument("--raster-dir", help="where to save region crops (PDF input only)")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("refine", help="run the full closed loop")
    p.add_argument("input")
    p.add_argument("out", help="output directory")
    p.add_argument("--instruction", required=True, help="instruction text, or @file")
    p.add_argument("--max-length", type=int, help="word limit for generated text")
    p.add_argument("--style")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--timing", action="store_true", help="record wall time in trace.json")
    common(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("verify", help="score a modified document against its original")
    p.add_argument("--original", required=True)
    p.add_argument("--modified", required=True)
    p.add_argument("--instruction", required=True, help="instruction text, or @file")
    p.add_argument("--ops", required=True, help="ops JSON as written by refine")
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--max-length", type=int)
    p.add_argument("--summaries", help="summaries.json from the refine output")
    p.add_argument("--original-sem")
    p.add_argument("--modified-sem")
    p.add_argument("--raster-pair", nargs=2, action="append", metavar=("ORIG_PNG", "MOD_PNG"))
    p.add_argument("--no-judge", action="store_true", help="skip model judging of free-text edits")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="score the pipeline on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--report", required=True, help="output CSV")
    p.add_argument("--jobs", type=int, default=1)
    common(p, mock=False)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc} (after {len(exc.trace)} iteration(s))", file=sys.stderr)
        return 2
    except (DocRefineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
