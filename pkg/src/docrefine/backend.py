"""Model access: a live chat-completion client and a deterministic scripted mock.

Every other module talks to models only through :class:`Backend`. The mock is
a pure function of its script and the request, which keeps the whole pipeline
reproducible offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx
import jsonschema
import numpy as np

from .errors import MockMiss, SchemaError, TransportError
from .schemas import SCHEMAS, is_registered

log = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "DOCREFINE_API_KEY"
MOCK_EMBED_DIM = 256
NGRAM = 3


class Stage(str, Enum):
    LSA = "LSA"
    MCU = "MCU"
    IDA = "IDA"
    CRA = "CRA"
    SGA = "SGA"
    FCV = "FCV"


@dataclass(frozen=True)
class ImagePart:
    path: str


UserPart = str | ImagePart


@dataclass(frozen=True)
class BackendRequest:
    stage_tag: Stage
    system_text: str
    user_parts: tuple[UserPart, ...]
    schema_id: str
    temperature: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stage_tag", Stage(self.stage_tag))
        object.__setattr__(self, "user_parts", tuple(self.user_parts))
        if not self.user_parts:
            raise ValueError("a backend request needs at least one user part")
        if not is_registered(self.schema_id):
            raise ValueError(f"schema {self.schema_id!r} is not registered")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")

    def to_dict(self) -> dict:
        parts = [{"text": p} if isinstance(p, str) else {"image": p.path} for p in self.user_parts]
        return {
            "stage": self.stage_tag.value,
            "system": self.system_text,
            "parts": parts,
            "schema": self.schema_id,
            "temperature": self.temperature,
        }

    def haystack(self) -> str:
        """Flat text of the request, used by mock substring rules."""
        texts = [self.system_text]
        texts += [p if isinstance(p, str) else f"<image {p.path}>" for p in self.user_parts]
        return "\n".join(texts)


def request_digest(req: BackendRequest) -> str:
    blob = json.dumps(req.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendResponse:
    raw_text: str
    parsed: Any
    repair_applied: bool = False


# --- structured output --------------------------------------------------------

_CLOSE = {"{": "}", "[": "]"}


def _balanced_end(text: str, start: int) -> int | None:
    stack = []
    in_str = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in _CLOSE:
            stack.append(_CLOSE[ch])
        elif ch in "}]":
            if not stack or stack.pop() != ch:
                return None
            if not stack:
                return i + 1
    return None


def extract_json_span(text: str) -> Any:
    """Return the value of the largest balanced ``{...}``/``[...]`` span that parses.

    Raises ``ValueError`` when no span parses.
    """
    spans = []
    for i, ch in enumerate(text):
        if ch in _CLOSE:
            end = _balanced_end(text, i)
            if end is not None:
                spans.append((end - i, i, end))
    # longest first, leftmost on ties
    for _, i, end in sorted(spans, key=lambda s: (-s[0], s[1])):
        try:
            return json.loads(text[i:end])
        except json.JSONDecodeError:
            continue
    raise ValueError("no balanced JSON span found")


def parse_structured(raw_text: str, schema_id: str) -> tuple[Any, bool]:
    """Parse and validate model output. One repair pass, then ``SchemaError``."""
    schema = SCHEMAS[schema_id]
    try:
        value = json.loads(raw_text)
        jsonschema.validate(value, schema)
        return value, False
    except (json.JSONDecodeError, jsonschema.ValidationError):
        pass
    try:
        value = extract_json_span(raw_text)
    except ValueError:
        raise SchemaError(f"no JSON found in output for schema {schema_id}", raw_text) from None
    try:
        jsonschema.validate(value, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"output violates schema {schema_id}: {exc.message}", raw_text) from None
    return value, True


# --- embeddings ---------------------------------------------------------------


def normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def mock_embed(text: str, dim: int = MOCK_EMBED_DIM) -> np.ndarray:
    """Hashed bag of character trigrams, L2-normalized."""
    norm = " ".join(text.lower().split())
    padded = f" {norm} "
    grams = [padded[i : i + NGRAM] for i in range(len(padded) - NGRAM + 1)] or [padded]
    v = np.zeros(dim)
    for g in grams:
        h = hashlib.blake2b(g.encode("utf-8"), digest_size=8).digest()
        v[int.from_bytes(h, "little") % dim] += 1.0
    return normalize(v)


# --- backends -------------------------------------------------------------------


class Backend:
    """Interface shared by the live client and the mock."""

    concurrency_limit: int = 1

    def complete(self, req: BackendRequest) -> BackendResponse:
        raise NotImplementedError

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        raise NotImplementedError


@dataclass
class MockRule:
    stage: Stage
    contains: tuple[str, ...]
    response: str


def _as_raw(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value, sort_keys=True, ensure_ascii=False)


@dataclass
class MockScript:
    """Scripted responses.

    Lookup order: exact ``"STAGE:digest"`` entry, then the first substring rule
    whose ``contains`` strings all occur in the request, then the stage default.
    Non-string response values are stored as their JSON text.
    """

    entries: dict[str, str] = field(default_factory=dict)
    rules: list[MockRule] = field(default_factory=list)
    defaults: dict[Stage, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> MockScript:
        entries = {k: _as_raw(v) for k, v in data.get("entries", {}).items()}
        rules = []
        for r in data.get("rules", []):
            contains = r.get("contains", ())
            if isinstance(contains, str):
                contains = (contains,)
            rules.append(MockRule(Stage(r["stage"]), tuple(contains), _as_raw(r["response"])))
        defaults = {Stage(k): _as_raw(v) for k, v in data.get("defaults", {}).items()}
        return cls(entries, rules, defaults)

    @classmethod
    def load(cls, path: str | Path) -> MockScript:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def lookup(self, req: BackendRequest) -> str:
        digest = request_digest(req)
        key = f"{req.stage_tag.value}:{digest}"
        if key in self.entries:
            return self.entries[key]
        hay = None
        for rule in self.rules:
            if rule.stage is not req.stage_tag:
                continue
            hay = hay if hay is not None else req.haystack()
            if all(s in hay for s in rule.contains):
                return rule.response
        if req.stage_tag in self.defaults:
            return self.defaults[req.stage_tag]
        raise MockMiss(req.stage_tag.value, digest)


class MockBackend(Backend):
    def __init__(self, script: MockScript | dict | None = None, *, embed_dim: int = MOCK_EMBED_DIM,
                 concurrency_limit: int = 4):
        if script is None:
            script = MockScript()
        elif isinstance(script, dict):
            script = MockScript.from_dict(script)
        self.script = script
        self.embed_dim = embed_dim
        self.concurrency_limit = concurrency_limit
        self.calls: list[BackendRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: BackendRequest) -> BackendResponse:
        with self._lock:
            self.calls.append(req)
        raw = self.script.lookup(req)
        parsed, repaired = parse_structured(raw, req.schema_id)
        return BackendResponse(raw, parsed, repaired)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed needs at least one text")
        return [mock_embed(t, self.embed_dim) for t in texts]


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 3
    concurrency_limit: int = 4
    mode: str = "mock"
    model: str = "gpt-4o"
    embed_endpoint: str | None = None
    embed_model: str = "text-embedding-3-small"
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be at least 1")
        if self.mode not in ("live", "mock"):
            raise ValueError(f"mode must be 'live' or 'mock', got {self.mode!r}")

    @property
    def embeddings_url(self) -> str:
        if self.embed_endpoint:
            return self.embed_endpoint
        base = self.endpoint.rstrip("/")
        if base.endswith("/chat/completions"):
            base = base[: -len("/chat/completions")]
        return base + "/embeddings"


RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


def _image_url(path: str) -> str:
    mime = mimetypes.guess_type(path)[0] or "image/png"
    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    return f"data:{mime};base64,{data}"


class LiveBackend(Backend):
    """Chat-completion style HTTP client with retry and a concurrency cap."""

    def __init__(self, config: BackendConfig, *, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.concurrency_limit = config.concurrency_limit
        self._slots = threading.BoundedSemaphore(config.concurrency_limit)
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        else:
            log.warning("env var %s is not set; sending requests without credentials", config.api_key_env)
        self._client = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, url: str, body: dict) -> dict:
        attempt = 0
        while True:
            try:
                with self._slots:
                    resp = self._client.post(url, json=body)
                if resp.status_code in RETRY_STATUSES:
                    raise httpx.HTTPStatusError(
                        f"HTTP {resp.status_code}", request=resp.request, response=resp
                    )
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                if attempt >= self.config.max_retries:
                    raise TransportError(f"{url} failed after {attempt + 1} attempts: {exc}") from exc
                delay = self.config.backoff_base * (2**attempt)
                log.info("retrying %s in %.1fs (%s)", url, delay, exc)
                self._sleep(delay)
                attempt += 1
            except json.JSONDecodeError as exc:
                raise TransportError(f"non-JSON body from {url}") from exc

    def chat_body(self, req: BackendRequest) -> dict:
        content = []
        for part in req.user_parts:
            if isinstance(part, str):
                content.append({"type": "text", "text": part})
            else:
                content.append({"type": "image_url", "image_url": {"url": _image_url(part.path)}})
        return {
            "model": self.config.model,
            "temperature": req.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": content},
            ],
        }

    def complete(self, req: BackendRequest) -> BackendResponse:
        data = self._post(self.config.endpoint, self.chat_body(req))
        try:
            raw = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise TransportError("unexpected chat-completion response shape") from None
        parsed, repaired = parse_structured(raw, req.schema_id)
        if repaired:
            log.warning("stage %s: model output needed JSON repair", req.stage_tag.value)
        return BackendResponse(raw, parsed, repaired)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed needs at least one text")
        data = self._post(self.config.embeddings_url, {"model": self.config.embed_model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda r: r.get("index", 0))
            vectors = [normalize(np.asarray(r["embedding"], dtype=float)) for r in rows]
        except (KeyError, TypeError, ValueError):
            raise TransportError("unexpected embeddings response shape") from None
        if len(vectors) != len(texts):
            raise TransportError(f"asked for {len(texts)} embeddings, got {len(vectors)}")
        return vectors


def make_backend(config: BackendConfig, mock_script: str | Path | None = None) -> Backend:
    if config.mode == "live":
        return LiveBackend(config)
    script = MockScript.load(mock_script) if mock_script else MockScript()
    return MockBackend(script, concurrency_limit=config.concurrency_limit)
