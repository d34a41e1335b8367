"""Multimodal content understanding: DocumentIR -> SemanticRep.

Tables with extractable text are parsed structurally (no model call). Figures,
raster-only tables and per-section fact extraction go through the backend.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .backend import Backend, BackendRequest, ImagePart, Stage
from .errors import BackendError, IRFormatError, SchemaError
from .ir import DocumentIR, Element, Kind, TEXT_KINDS, canonical_json

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fact:
    subject: str
    predicate: str
    object: str
    element_id: str


@dataclass(frozen=True)
class Entity:
    surface: str
    category: str
    element_id: str


@dataclass(frozen=True)
class TableGrid:
    n_rows: int
    n_cols: int
    cells: tuple[str, ...]
    header_rows: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid dimensions must be positive")
        if len(self.cells) != self.n_rows * self.n_cols:
            raise ValueError(f"{len(self.cells)} cells do not fill a {self.n_rows}x{self.n_cols} grid")
        if not 0 <= self.header_rows <= self.n_rows:
            raise ValueError("header_rows out of range")

    def cell(self, row: int, col: int) -> str:
        return self.cells[row * self.n_cols + col]

    def with_cell(self, row: int, col: int, value: str) -> TableGrid:
        cells = list(self.cells)
        cells[row * self.n_cols + col] = value
        return replace(self, cells=tuple(cells))

    def rows(self) -> list[list[str]]:
        return [list(self.cells[r * self.n_cols : (r + 1) * self.n_cols]) for r in range(self.n_rows)]

    def to_text(self) -> str:
        return "\n".join("\t".join(r) for r in self.rows())


@dataclass(frozen=True)
class FigureDesc:
    description: str
    axis_labels: tuple[str, ...] = ()
    legend_entries: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.description:
            raise ValueError("figure description must be non-empty")
        object.__setattr__(self, "axis_labels", tuple(self.axis_labels))
        object.__setattr__(self, "legend_entries", tuple(self.legend_entries))


@dataclass(frozen=True)
class SemanticRep:
    facts: tuple[Fact, ...] = ()
    entities: tuple[Entity, ...] = ()
    table_grids: dict[str, TableGrid] = field(default_factory=dict)
    figure_descs: dict[str, FigureDesc] = field(default_factory=dict)
    section_digests: dict[str, str] = field(default_factory=dict)

    def provenance_ids(self) -> set[str]:
        ids = {f.element_id for f in self.facts} | {e.element_id for e in self.entities}
        return ids | set(self.table_grids) | set(self.figure_descs) | set(self.section_digests)

    def without(self, element_id: str) -> SemanticRep:
        """Drop everything sourced from ``element_id``."""
        return SemanticRep(
            tuple(f for f in self.facts if f.element_id != element_id),
            tuple(e for e in self.entities if e.element_id != element_id),
            {k: v for k, v in self.table_grids.items() if k != element_id},
            {k: v for k, v in self.figure_descs.items() if k != element_id},
            {k: v for k, v in self.section_digests.items() if k != element_id},
        )

    def to_dict(self) -> dict:
        return {
            "facts": [
                {"subject": f.subject, "predicate": f.predicate, "object": f.object, "element_id": f.element_id}
                for f in self.facts
            ],
            "entities": [
                {"surface": e.surface, "category": e.category, "element_id": e.element_id} for e in self.entities
            ],
            "table_grids": {
                k: {"n_rows": g.n_rows, "n_cols": g.n_cols, "cells": list(g.cells), "header_rows": g.header_rows}
                for k, g in self.table_grids.items()
            },
            "figure_descs": {
                k: {
                    "description": d.description,
                    "axis_labels": list(d.axis_labels),
                    "legend_entries": list(d.legend_entries),
                }
                for k, d in self.figure_descs.items()
            },
            "section_digests": dict(self.section_digests),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SemanticRep:
        try:
            return cls(
                tuple(Fact(**f) for f in data.get("facts", [])),
                tuple(Entity(**e) for e in data.get("entities", [])),
                {k: TableGrid(**g) for k, g in data.get("table_grids", {}).items()},
                {k: FigureDesc(**d) for k, d in data.get("figure_descs", {}).items()},
                dict(data.get("section_digests", {})),
            )
        except (TypeError, ValueError) as exc:
            raise IRFormatError("$", f"malformed semantic representation: {exc}") from None


def serialize_sem(sem: SemanticRep) -> bytes:
    return canonical_json(sem.to_dict())


# --- tables ----------------------------------------------------------------------


def parse_table_text(text: str) -> TableGrid:
    """Rows on newlines, cells on tabs; ragged rows padded with empty cells."""
    rows = [line.split("\t") for line in text.rstrip("\n").split("\n")]
    width = max(len(r) for r in rows)
    cells = [c for r in rows for c in r + [""] * (width - len(r))]
    return TableGrid(len(rows), width, tuple(cells))


def _with_element(exc: BackendError, element_id: str) -> BackendError:
    exc.element_id = element_id
    return exc


def table_to_grid(el: Element, backend: Backend | None) -> TableGrid:
    if el.kind is not Kind.TABLE:
        raise ValueError(f"{el.id} is a {el.kind.value}, not a Table")
    if el.text:
        return parse_table_text(el.text)
    if backend is None:
        raise ValueError(f"table {el.id} has no text and no backend is available")
    parts: list[Any] = [f"table_id: {el.id}\nTranscribe this table cell by cell in row-major order."]
    if el.raster_ref:
        parts.append(ImagePart(el.raster_ref))
    req = BackendRequest(
        Stage.MCU,
        "You read tables from page images. Reason about row and column structure first, "
        "then return JSON {n_rows, n_cols, cells (row-major strings), header_rows}.",
        tuple(parts),
        "mcu.table_grid",
    )
    try:
        resp = backend.complete(req)
        p = resp.parsed
        try:
            return TableGrid(p["n_rows"], p["n_cols"], tuple(p["cells"]), p.get("header_rows", 0))
        except ValueError as exc:
            raise SchemaError(f"table grid inconsistent: {exc}", resp.raw_text) from None
    except BackendError as exc:
        raise _with_element(exc, el.id)


# --- figures & sections ----------------------------------------------------------


def _figure_desc(el: Element, caption: str, backend: Backend) -> FigureDesc:
    parts: list[Any] = [f"figure_id: {el.id}\ncaption: {caption or '(none)'}"]
    if el.raster_ref:
        parts.append(ImagePart(el.raster_ref))
    req = BackendRequest(
        Stage.MCU,
        "You describe scientific figures. Work out what is plotted, its axes and legend, "
        "then return JSON {description, axis_labels, legend_entries}.",
        tuple(parts),
        "mcu.figure",
    )
    try:
        p = backend.complete(req).parsed
    except BackendError as exc:
        raise _with_element(exc, el.id)
    return FigureDesc(p["description"], tuple(p.get("axis_labels", [])), tuple(p.get("legend_entries", [])))


@dataclass
class _Section:
    heading_id: str | None
    members: list[Element]


def sections(ir: DocumentIR) -> list[_Section]:
    """Split the reading order into runs headed by each heading."""
    out = [_Section(None, [])]
    for el in ir.ordered_elements():
        if el.kind is Kind.HEADING:
            out.append(_Section(el.id, [el]))
        elif el.kind in TEXT_KINDS:
            out[-1].members.append(el)
    return [s for s in out if s.members]


def _section_facts(sec: _Section, backend: Backend):
    listing = "\n".join(f"[{e.id}] ({e.kind.value}) {e.text}" for e in sec.members)
    req = BackendRequest(
        Stage.MCU,
        "You extract knowledge from a document section. Think through the claims step by step, "
        "then return JSON {facts: [{subject, predicate, object, element_id}], "
        "entities: [{surface, category, element_id}], digest}. element_id must be one of the "
        "bracketed ids.",
        (f"section: {sec.heading_id or '(preamble)'}\n{listing}",),
        "mcu.facts",
    )
    try:
        return backend.complete(req).parsed
    except BackendError as exc:
        raise _with_element(exc, sec.heading_id or sec.members[0].id)


def _run(fn: Callable, items: list, limit: int) -> list:
    if limit <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=limit) as pool:
        return list(pool.map(fn, items))


def understand(ir: DocumentIR, backend: Backend) -> SemanticRep:
    """Build the semantic representation, assembled deterministically in reading order."""
    ordered = ir.ordered_elements()
    limit = getattr(backend, "concurrency_limit", 1)
    captions: dict[str, str] = {}
    lookup = ir.by_id()
    for a in ir.associations:
        captions.setdefault(a.target_id, lookup[a.caption_id].text)

    tables = [e for e in ordered if e.kind is Kind.TABLE]
    figures = [e for e in ordered if e.kind is Kind.FIGURE]
    secs = sections(ir)

    grids = _run(lambda e: table_to_grid(e, backend), tables, limit)
    descs = _run(lambda e: _figure_desc(e, captions.get(e.id, ""), backend), figures, limit)
    extracted = _run(lambda s: _section_facts(s, backend), secs, limit)

    facts: list[Fact] = []
    entities: list[Entity] = []
    digests: dict[str, str] = {}
    for sec, parsed in zip(secs, extracted):
        allowed = {e.id for e in sec.members}
        for f in parsed.get("facts", []):
            if f["element_id"] not in allowed:
                log.warning("dropping fact with unknown provenance %r", f["element_id"])
                continue
            facts.append(Fact(f["subject"], f["predicate"], f["object"], f["element_id"]))
        for e in parsed.get("entities", []):
            if e["element_id"] not in allowed:
                log.warning("dropping entity with unknown provenance %r", e["element_id"])
                continue
            entities.append(Entity(e["surface"], e["category"], e["element_id"]))
        if sec.heading_id and parsed.get("digest"):
            digests[sec.heading_id] = parsed["digest"]

    return SemanticRep(
        tuple(facts),
        tuple(entities),
        {e.id: g for e, g in zip(tables, grids)},
        {e.id: d for e, d in zip(figures, descs)},
        digests,
    )


def structural_rep(ir: DocumentIR) -> SemanticRep:
    """Model-free representation: table grids from text only. Used by standalone verification."""
    return SemanticRep(
        table_grids={e.id: parse_table_text(e.text) for e in ir.ordered_elements() if e.kind is Kind.TABLE and e.text}
    )
