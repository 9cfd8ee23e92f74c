"""Pluggable LLM transport: prompt templates, structured-output parsing,
re-ask repair, confidence extraction, and offline replay.

Every stage consumes a fenced JSON block from the model output. Prompts are
addressed by a fingerprint of (template name, bindings) rather than rendered
text, so transcripts recorded for replay survive cosmetic template edits.

Backends:
  ScriptedBackend   replays a recorded transcript (fingerprint -> raw text)
  RemoteBackend     chat-completions-style HTTP endpoint
  AuthoredBackend   raw text produced by in-process handler functions
  RecordingBackend  wraps another backend and captures a transcript
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import (
    MissingPlaceholder,
    SchemaViolation,
    TranscriptMiss,
    TransportError,
    Unparseable,
)

DEFAULT_REASK_LIMIT = 2

_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


@dataclass
class PromptTemplate:
    name: str
    stage: str
    body: str

    @property
    def required(self) -> tuple:
        return tuple(dict.fromkeys(_PLACEHOLDER_RE.findall(self.body)))

    def render(self, bindings: dict) -> str:
        text = self.body
        for name in self.required:
            if name not in bindings:
                raise MissingPlaceholder(name)
        for name in self.required:
            text = text.replace("${" + name + "}", str(bindings[name]))
        return text


def load_template(path: Path) -> PromptTemplate:
    text = Path(path).read_text()
    stage = ""
    if text.startswith("stage:"):
        header, _, rest = text.partition("\n---\n")
        stage = header[len("stage:"):].strip()
        text = rest
    return PromptTemplate(name=Path(path).stem, stage=stage, body=text)


class TemplateLibrary:
    """Templates loaded from a directory; re-read on change for hot reload."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self._cache: dict = {}

    def get(self, name: str) -> PromptTemplate:
        path = self.directory / f"{name}.txt"
        if not path.exists():
            raise KeyError(f"no template named '{name}' in {self.directory}")
        mtime = path.stat().st_mtime_ns
        cached = self._cache.get(name)
        if cached is None or cached[0] != mtime:
            self._cache[name] = (mtime, load_template(path))
        return self._cache[name][1]

    def names(self) -> list:
        return sorted(p.stem for p in self.directory.glob("*.txt"))


def default_template_dir() -> Path:
    return Path(__file__).parent / "templates"


@dataclass
class PromptRequest:
    template: str
    bindings: dict
    rendered: str

    @property
    def fingerprint(self) -> str:
        canon = json.dumps(
            {"template": self.template, "bindings": {k: str(v) for k, v in self.bindings.items()}},
            sort_keys=True,
        )
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_repair(self, attempt: int, error: str) -> "PromptRequest":
        bindings = dict(self.bindings)
        bindings["repair_attempt"] = str(attempt)
        bindings["repair_error"] = error
        notice = (
            f"\n\nYour previous reply could not be used ({error}). "
            "Reply again with a single fenced ```json block that fits the schema."
        )
        return PromptRequest(self.template, bindings, self.rendered + notice)


@dataclass
class LlmResponse:
    raw: str
    payload: Optional[dict]
    backend_id: str
    latency: float = 0.0
    retries: int = 0
    fingerprint: str = ""

    @property
    def confidence(self) -> Optional[int]:
        if isinstance(self.payload, dict):
            value = self.payload.get("confidence")
            if isinstance(value, int) and not isinstance(value, bool):
                return value
        return None


def confidence_of(response: LlmResponse) -> int:
    """Stated confidence clamped to the 1..5 scale; anything else forces 1.

    A missing or out-of-range score maps to 1 so that unscored output always
    routes to review.
    """
    value = response.confidence
    if isinstance(value, int) and 1 <= value <= 5:
        return value
    return 1


@dataclass
class BackendSpec:
    kind: str  # 'scripted' | 'remote-http'
    model: str = ""
    tier: str = "standard"  # 'standard' | 'strong'
    endpoint: Optional[str] = None
    transcript: Optional[str] = None
    max_in_flight: int = 4
    min_interval: float = 0.0

    def __post_init__(self):
        if self.kind not in ("scripted", "remote-http"):
            raise ValueError(f"unknown backend kind '{self.kind}'")
        if self.tier not in ("standard", "strong"):
            raise ValueError(f"unknown backend tier '{self.tier}'")
        if self.kind == "scripted" and not self.transcript:
            raise ValueError("a scripted backend needs a transcript file")

    @classmethod
    def from_dict(cls, doc: dict) -> "BackendSpec":
        known = {"kind", "model", "tier", "endpoint", "transcript", "max_in_flight", "min_interval"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown backend fields: {sorted(unknown)}")
        return cls(**doc)


class ScriptedBackend:
    """Deterministic replay of a recorded transcript."""

    def __init__(self, transcript: dict, id: str = "scripted"):
        self.transcript = dict(transcript)
        self.id = id

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        with open(path) as fh:
            return cls(json.load(fh), id=f"scripted:{Path(path).stem}")

    def complete_raw(self, request: PromptRequest) -> str:
        fp = request.fingerprint
        if fp not in self.transcript:
            raise TranscriptMiss(fp, request.template)
        return self.transcript[fp]


class AuthoredBackend:
    """Responses produced by handler functions keyed by template name.

    A handler receives the request bindings and returns either a payload dict
    (wrapped into a fenced JSON block) or raw text.
    """

    def __init__(self, handlers: dict, default: Optional[Callable] = None, id: str = "authored"):
        self.handlers = dict(handlers)
        self.default = default
        self.id = id

    def complete_raw(self, request: PromptRequest) -> str:
        handler = self.handlers.get(request.template, self.default)
        if handler is None:
            raise TranscriptMiss(request.fingerprint, request.template)
        result = handler(request.bindings)
        if isinstance(result, str):
            return result
        return "```json\n" + json.dumps(result, indent=1) + "\n```\n"


class RecordingBackend:
    """Wraps a backend and records (fingerprint -> raw) for later replay."""

    def __init__(self, inner):
        self.inner = inner
        self.recorded: dict = {}

    @property
    def id(self) -> str:
        return self.inner.id

    def complete_raw(self, request: PromptRequest) -> str:
        raw = self.inner.complete_raw(request)
        self.recorded[request.fingerprint] = raw
        return raw

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.recorded, fh, indent=1, sort_keys=True)


ENDPOINT_ENV = "ENGINE_LLM_ENDPOINT"
KEY_ENV = "ENGINE_LLM_KEY"


class RemoteBackend:
    """Chat-completions-style HTTP backend.

    Endpoint and key come from the spec or the ENGINE_LLM_ENDPOINT /
    ENGINE_LLM_KEY environment variables. Honors the spec's rate limits:
    at most ``max_in_flight`` concurrent calls, ``min_interval`` seconds apart.
    """

    def __init__(self, spec: BackendSpec, client=None):
        import httpx

        self.spec = spec
        self.endpoint = spec.endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise TransportError(f"no endpoint configured (set {ENDPOINT_ENV})")
        self.key = os.environ.get(KEY_ENV, "")
        self.id = f"remote:{spec.model or 'default'}"
        self._client = client or httpx.Client(timeout=120.0)
        self._gate = threading.Semaphore(spec.max_in_flight)
        self._clock_lock = threading.Lock()
        self._last_call = 0.0

    def complete_raw(self, request: PromptRequest) -> str:
        with self._gate:
            if self.spec.min_interval > 0:
                with self._clock_lock:
                    wait = self._last_call + self.spec.min_interval - time.monotonic()
                    if wait > 0:
                        time.sleep(wait)
                    self._last_call = time.monotonic()
            headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
            body = {
                "model": self.spec.model,
                "messages": [{"role": "user", "content": request.rendered}],
            }
            try:
                resp = self._client.post(self.endpoint, json=body, headers=headers)
                resp.raise_for_status()
                doc = resp.json()
                return doc["choices"][0]["message"]["content"]
            except Exception as exc:
                raise TransportError(str(exc)) from exc


def make_backend(spec: BackendSpec, base_dir=None):
    if spec.kind == "scripted":
        path = Path(spec.transcript)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return ScriptedBackend.from_file(path)
    return RemoteBackend(spec)


# --- structured output ------------------------------------------------------


def extract_payload(raw: str):
    """Pull the first fenced JSON block (or whole-text JSON) out of a reply."""
    m = _FENCE_RE.search(raw)
    candidate = m.group(1) if m else raw
    try:
        payload = json.loads(candidate)
    except json.JSONDecodeError as exc:
        return None, f"no valid JSON block ({exc.msg} at line {exc.lineno})"
    if not isinstance(payload, dict):
        return None, "the JSON block must be an object"
    return payload, None


def validate_payload(payload, schema, path="$"):
    """Tiny structural validator. Returns an error string or None."""
    if schema is None:
        return None
    typ = schema.get("type")
    if typ == "object":
        if not isinstance(payload, dict):
            return f"{path}: expected object"
        for key in schema.get("required", []):
            if key not in payload:
                return f"{path}.{key}: missing required field"
        for key, sub in schema.get("properties", {}).items():
            if key in payload:
                err = validate_payload(payload[key], sub, f"{path}.{key}")
                if err:
                    return err
    elif typ == "array":
        if not isinstance(payload, list):
            return f"{path}: expected array"
        items = schema.get("items")
        if items is not None:
            for i, item in enumerate(payload):
                err = validate_payload(item, items, f"{path}[{i}]")
                if err:
                    return err
    elif typ == "string":
        if not isinstance(payload, str):
            return f"{path}: expected string"
    elif typ == "integer":
        if not isinstance(payload, int) or isinstance(payload, bool):
            return f"{path}: expected integer"
    elif typ == "number":
        if not isinstance(payload, (int, float)) or isinstance(payload, bool):
            return f"{path}: expected number"
    elif typ == "boolean":
        if not isinstance(payload, bool):
            return f"{path}: expected boolean"
    return None


def complete(backend, request: PromptRequest, schema=None,
             reask_limit: int = DEFAULT_REASK_LIMIT) -> LlmResponse:
    """Run one prompt, re-asking with a repair notice on malformed output.

    At most ``reask_limit`` repair attempts follow the initial ask; afterwards
    Unparseable carries every raw attempt.
    """
    attempts = []
    current = request
    started = time.perf_counter()
    for attempt in range(reask_limit + 1):
        raw = backend.complete_raw(current)
        attempts.append(raw)
        payload, err = extract_payload(raw)
        if err is None:
            err = validate_payload(payload, schema)
        if err is None:
            return LlmResponse(
                raw=raw,
                payload=payload,
                backend_id=backend.id,
                latency=time.perf_counter() - started,
                retries=attempt,
                fingerprint=request.fingerprint,
            )
        current = request.with_repair(attempt + 1, err)
    raise Unparseable(attempts)


class Gateway:
    """Template library + backend + retry policy, bundled for the pipeline."""

    def __init__(self, backend, templates: Optional[TemplateLibrary] = None,
                 reask_limit: int = DEFAULT_REASK_LIMIT):
        self.backend = backend
        self.templates = templates or TemplateLibrary(default_template_dir())
        self.reask_limit = reask_limit

    def render(self, template_name: str, bindings: dict) -> PromptRequest:
        template = self.templates.get(template_name)
        return PromptRequest(template_name, dict(bindings), template.render(bindings))

    def ask(self, template_name: str, bindings: dict, schema=None) -> LlmResponse:
        request = self.render(template_name, bindings)
        return complete(self.backend, request, schema, self.reask_limit)
