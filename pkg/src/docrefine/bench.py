"""Run the pipeline over a directory of cases and score each output against its gold document.

A case is a directory holding:

* ``input.ir.json`` or ``input.pdf``
* ``instruction.txt``
* ``gold.ir.json``
* ``meta.json`` with at least ``{"category": ...}``; optional ``max_length`` and ``style``
* ``mock.json`` (optional) with a scripted backend used for that case only
* ``rasters/`` (optional) with ``gold_<k>.png`` / ``out_<k>.png`` page pairs rendered elsewhere
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .backend import Backend, MockBackend, MockScript
from .fcv import load_gray, score_against_gold
from .ida import Instruction
from .ir import deserialize_ir
from .lsa import IngestSource
from .orchestrator import LoopConfig, run

log = logging.getLogger(__name__)

CSV_FIELDS = ("case", "category", "scs", "lfi", "iar", "status")


@dataclass
class BenchCase:
    name: str
    path: Path
    category: str


@dataclass
class BenchRow:
    case: str
    category: str
    scs: float | None = None
    lfi: float | None = None
    iar: float | None = None
    status: str = "ok"

    @property
    def scored(self) -> bool:
        return self.status == "ok"


@dataclass
class BenchReport:
    rows: list[BenchRow]

    @property
    def failed(self) -> list[BenchRow]:
        return [r for r in self.rows if not r.scored]

    def means(self) -> list[BenchRow]:
        """Per-category means in name order, then the overall mean; failed cases are left out."""
        scored = [r for r in self.rows if r.scored]
        groups: dict[str, list[BenchRow]] = {}
        for r in scored:
            groups.setdefault(r.category, []).append(r)
        out = [_mean_row(cat, rows) for cat, rows in sorted(groups.items())]
        if scored:
            out.append(_mean_row("overall", scored))
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in [*self.rows, *self.means()]:
                w.writerow([r.case, r.category, _fmt(r.scs), _fmt(r.lfi), _fmt(r.iar), r.status])


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _mean_row(category: str, rows: list[BenchRow]) -> BenchRow:
    n = len(rows)
    return BenchRow(
        "mean",
        category,
        sum(r.scs for r in rows) / n,
        sum(r.lfi for r in rows) / n,
        sum(r.iar for r in rows) / n,
        f"n={n}",
    )


def discover(dataset: str | Path) -> list[BenchCase]:
    root = Path(dataset)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    cases = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        if not (d / "meta.json").exists() and not (d / "gold.ir.json").exists():
            continue
        try:
            category = json.loads((d / "meta.json").read_text(encoding="utf-8"))["category"]
        except (OSError, ValueError, KeyError):
            category = "unknown"
        cases.append(BenchCase(d.name, d, category))
    return cases


def _rasters(case_dir: Path) -> list | None:
    rdir = case_dir / "rasters"
    if not rdir.is_dir():
        return None
    pairs = []
    for gold in sorted(rdir.glob("gold_*.png")):
        out = rdir / ("out_" + gold.name[len("gold_"):])
        if out.exists():
            pairs.append((load_gray(out), load_gray(gold)))
    return pairs or None


def run_case(case: BenchCase, cfg: LoopConfig, backend: Backend | None) -> BenchRow:
    d = case.path
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    instruction = Instruction(
        (d / "instruction.txt").read_text(encoding="utf-8").strip(),
        meta.get("max_length"),
        meta.get("style"),
    )
    gold = deserialize_ir((d / "gold.ir.json").read_bytes())
    if (d / "mock.json").exists():
        backend = MockBackend(MockScript.load(d / "mock.json"))
    if backend is None:
        raise ValueError("no backend configured and the case has no mock.json")
    src = IngestSource.layout_json(d / "input.ir.json") if (d / "input.ir.json").exists() else IngestSource.pdf(d / "input.pdf")
    res = run(src, instruction, cfg, backend)
    scs, lfi, iar = score_against_gold(
        res.result.new_ir,
        res.result.new_sem,
        gold,
        res.ops,
        backend,
        summaries=res.result.summaries,
        rasters=_rasters(d),
    )
    return BenchRow(case.name, case.category, scs, lfi, iar)


def run_bench(
    dataset: str | Path,
    cfg: LoopConfig,
    backend: Backend | None = None,
    *,
    jobs: int = 1,
    runner: Callable[[BenchCase, LoopConfig, Backend | None], BenchRow] = run_case,
) -> BenchReport:
    cases = discover(dataset)
    if not cases:
        raise ValueError(f"no cases found in {dataset}")

    def one(case: BenchCase) -> BenchRow:
        try:
            row = runner(case, cfg, backend)
            log.info("%s: scs=%.3f lfi=%.3f iar=%.3f", case.name, row.scs, row.lfi, row.iar)
            return row
        except Exception as exc:  # a broken case must not sink the whole benchmark
            log.error("case %s failed: %s", case.name, exc)
            msg = " ".join(str(exc).split()) or type(exc).__name__
            return BenchRow(case.name, case.category, status=f"failed: {msg}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, cases))
    else:
        rows = [one(c) for c in cases]
    return BenchReport(rows)
