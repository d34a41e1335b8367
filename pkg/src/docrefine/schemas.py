"""JSON schemas for every structured model output, keyed by schema id."""

from __future__ import annotations

OP_KINDS = [
    "RewriteText",
    "InsertText",
    "DeleteText",
    "CorrectTableCell",
    "UpdateCaption",
    "GenerateSummary",
    "ReorderElements",
    "FormatUnify",
    "CrossModalFix",
]

_str = {"type": "string"}
_str_list = {"type": "array", "items": _str}

SCHEMAS: dict[str, dict] = {
    "lsa.region": {
        "type": "object",
        "required": ["kind"],
        "properties": {"kind": {"enum": ["Figure", "Table"]}, "reasoning": _str},
    },
    "mcu.facts": {
        "type": "object",
        "required": ["facts"],
        "properties": {
            "reasoning": _str,
            "facts": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["subject", "predicate", "object", "element_id"],
                    "properties": {
                        "subject": _str,
                        "predicate": _str,
                        "object": _str,
                        "element_id": _str,
                    },
                },
            },
            "entities": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["surface", "category", "element_id"],
                    "properties": {"surface": _str, "category": _str, "element_id": _str},
                },
            },
            "digest": _str,
        },
    },
    "mcu.table_grid": {
        "type": "object",
        "required": ["n_rows", "n_cols", "cells"],
        "properties": {
            "n_rows": {"type": "integer", "minimum": 1},
            "n_cols": {"type": "integer", "minimum": 1},
            "cells": _str_list,
            "header_rows": {"type": "integer", "minimum": 0},
        },
    },
    "mcu.figure": {
        "type": "object",
        "required": ["description"],
        "properties": {
            "description": {"type": "string", "minLength": 1},
            "axis_labels": _str_list,
            "legend_entries": _str_list,
        },
    },
    "ida.ops": {
        "type": "object",
        "required": ["ops"],
        "properties": {
            "reasoning": _str,
            "ops": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["kind", "target"],
                    "properties": {
                        "kind": {"enum": OP_KINDS},
                        "target": {
                            "oneOf": [
                                _str,
                                {
                                    "type": "object",
                                    "required": ["table", "row", "col"],
                                    "properties": {
                                        "table": _str,
                                        "row": {"type": "integer"},
                                        "col": {"type": "integer"},
                                    },
                                },
                            ]
                        },
                        "payload": {"type": "object"},
                        "rationale": _str,
                    },
                },
            },
            "ambiguities": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["span", "candidates"],
                    "properties": {
                        "span": _str,
                        "candidates": {"type": "array", "items": _str, "minItems": 1},
                        "reason": _str,
                    },
                },
            },
        },
    },
    "cra.rewrite": {
        "type": "object",
        "required": ["text"],
        "properties": {"reasoning": _str, "text": _str},
    },
    "sga.summary": {
        "type": "object",
        "required": ["text"],
        "properties": {"reasoning": _str, "text": _str},
    },
    "fcv.judge": {
        "type": "object",
        "required": ["satisfied"],
        "properties": {"satisfied": {"type": "boolean"}, "reason": _str},
    },
}


def is_registered(schema_id: str) -> bool:
    return schema_id in SCHEMAS
