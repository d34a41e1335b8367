"""INI-style run configuration.

Example::

    [loop]
    max_iterations = 3
    tau_scs = 0.85
    tau_lfi = 0.90
    tau_iar = 0.85
    keep_best = true
    judge = true

    [backend]
    mode = mock                 ; or live
    mock_script = mock.json     ; relative to this file
    endpoint = https://api.example.com/v1/chat/completions
    api_key_env = DOCREFINE_API_KEY
    timeout = 60
    max_retries = 3
    concurrency_limit = 4
    model = gpt-4o

``DOCREFINE_API_URL`` in the environment overrides ``endpoint``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import fields
from pathlib import Path

from .backend import BackendConfig
from .orchestrator import LoopConfig

API_URL_ENV = "DOCREFINE_API_URL"

_LOOP_TYPES = {f.name: f.type for f in fields(LoopConfig)}
_BACKEND_TYPES = {f.name: f.type for f in fields(BackendConfig)}


def _coerce(section: configparser.SectionProxy, key: str, typ: str):
    if typ == "bool":
        return section.getboolean(key)
    if typ == "int":
        return section.getint(key)
    if typ == "float":
        return section.getfloat(key)
    return section.get(key)


def _section(cp: configparser.ConfigParser, name: str, types: dict) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key in cp[name]:
        if key == "mock_script":
            continue
        if key not in types:
            raise ValueError(f"unknown key [{name}] {key}")
        typ = str(types[key]).split(" ")[0]
        out[key] = _coerce(cp[name], key, typ)
    return out


def load_config(path: str | Path | None) -> tuple[LoopConfig, BackendConfig, Path | None]:
    """Returns (loop config, backend config, mock script path or None)."""
    loop, backend, script = {}, {}, None
    if path is not None:
        path = Path(path)
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not cp.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        loop = _section(cp, "loop", _LOOP_TYPES)
        backend = _section(cp, "backend", _BACKEND_TYPES)
        if cp.has_option("backend", "mock_script"):
            script = (path.parent / cp.get("backend", "mock_script")).resolve()
    if os.environ.get(API_URL_ENV):
        backend["endpoint"] = os.environ[API_URL_ENV]
    return LoopConfig(**loop), BackendConfig(**backend), script
