"""Prompt construction, response parsing and transports for a vision-chat VLM."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from ._images import data_url
from .core import Action, format_action
from .detect import BBox, normalize_label

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
_USER_MARK = "=== user ==="


class VLMParseError(ValueError):
    """The model answer holds no usable JSON object. ``raw`` keeps the text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class VLMValidationError(ValueError):
    pass


class VLMTransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContextSummary:
    task: str
    environment: str
    risks: tuple[str, ...]
    vocabulary: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"task": self.task, "environment": self.environment,
                "risks": list(self.risks), "objects": list(self.vocabulary)}

    @classmethod
    def from_dict(cls, d: dict) -> "ContextSummary":
        return _context_from_obj(d, json.dumps(d))

    def describe(self) -> str:
        risks = "; ".join(self.risks) if self.risks else "none stated"
        return (f"task: {self.task}\nenvironment: {self.environment}\n"
                f"risks: {risks}\nobjects: {', '.join(self.vocabulary)}")


@dataclass(frozen=True)
class FilterDecision:
    key_ids: tuple[int, ...]
    missing_categories: tuple[str, ...]
    dropped_ids: tuple[int, ...] = ()


def sample_context_frames(T: int, n: int) -> list[int]:
    """Up to ``n`` evenly spaced frame indices spanning ``[0, T-1]`` (round half up)."""
    if T < 1 or n < 1:
        raise ValueError("T and n must be positive")
    k = min(n, T)
    if k == 1:
        return [0]
    out = []
    for j in range(k):
        idx = (2 * j * (T - 1) + (k - 1)) // (2 * (k - 1))   # floor(j(T-1)/(k-1) + 1/2), exact
        if not out or idx != out[-1]:
            out.append(idx)
    return out


def load_template(name: str, version: str = PROMPT_VERSION) -> tuple[str, str]:
    """(system, user) text of a packaged prompt template."""
    text = resources.files("focusmap").joinpath("prompts", f"{name}_{version}.txt").read_text(encoding="utf-8")
    system, _, user = text.partition(_USER_MARK)
    return system.strip(), user.strip()


def render(template: str, **values: str) -> str:
    for key, val in values.items():
        template = template.replace("{" + key + "}", val)
    return template


def _image_part(png: bytes) -> dict:
    return {"type": "image_url", "image_url": {"url": data_url(png)}}


def build_context_prompt(frames: Sequence[tuple[int, bytes]], actions: Sequence[Action]) -> dict:
    """Multi-image request asking for the global context summary and vocabulary.

    ``frames`` holds ``(frame_index, png_bytes)`` pairs in temporal order.
    """
    if not frames:
        raise ValueError("at least one frame is required")
    if len(actions) != len(frames):
        raise ValueError("need one action per frame")
    indices = [i for i, _ in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"frames must be in strictly increasing temporal order, got {indices}")
    system, user = load_template("context")
    action_lines = "\n".join(f"frame {i}: {format_action(a)}" for i, a in zip(indices, actions))
    content = [{"type": "text", "text": render(user, action=action_lines)}]
    content += [_image_part(png) for _, png in frames]
    return {"messages": [{"role": "system", "content": system},
                         {"role": "user", "content": content}],
            "temperature": 0}


def _fmt(v: float) -> str:
    return f"{v:g}"


def object_line(track_id: int, label: str, box: BBox) -> str:
    return f"id={track_id} label={label} box=[{','.join(_fmt(c) for c in box.as_list())}]"


def build_filter_prompt(frame: bytes, action: Action, context: ContextSummary,
                        active: Sequence[tuple[int, str, BBox]]) -> dict:
    """Single-image request asking which active objects are key, and what is missing."""
    system, user = load_template("filter")
    if active:
        objects = "\n".join(object_line(i, label, box) for i, label, box in active)
    else:
        objects = "(no objects are tracked; return an empty key_object_ids list and report only missing_categories)"
    text = render(user, context=context.describe(), action=format_action(action), objects=objects)
    return {"messages": [{"role": "system", "content": system},
                         {"role": "user", "content": [{"type": "text", "text": text}, _image_part(frame)]}],
            "temperature": 0}


def extract_json(raw: str) -> dict:
    """First JSON object in ``raw``; code fences and surrounding prose are skipped."""
    decoder = json.JSONDecoder()
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError:
            pos = raw.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            return obj
        pos = raw.find("{", pos + 1)
    raise VLMParseError("no JSON object found in model response", raw)


def normalize_terms(terms) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for t in terms:
        t = normalize_label(t)
        if t:
            seen.setdefault(t, None)
    return tuple(seen)


def _context_from_obj(obj: dict, raw: str) -> ContextSummary:
    try:
        task, env, risks, objects = obj["task"], obj["environment"], obj["risks"], obj["objects"]
    except KeyError as exc:
        raise VLMParseError(f"context response lacks key {exc.args[0]!r}", raw) from None
    if not isinstance(task, str) or not isinstance(env, str):
        raise VLMParseError("'task' and 'environment' must be strings", raw)
    if not isinstance(risks, list) or not all(isinstance(r, str) for r in risks):
        raise VLMParseError("'risks' must be a list of strings", raw)
    if not isinstance(objects, list) or not all(isinstance(o, str) for o in objects):
        raise VLMParseError("'objects' must be a list of strings", raw)
    vocab = normalize_terms(objects)
    if not vocab:
        raise VLMValidationError("context response has an empty object vocabulary")
    return ContextSummary(task.strip(), env.strip(), tuple(r.strip() for r in risks), vocab)


def parse_context_response(raw: str) -> ContextSummary:
    return _context_from_obj(extract_json(raw), raw)


def parse_filter_response(raw: str, active_ids: Sequence[int], vocabulary: Sequence[str]) -> FilterDecision:
    """Key IDs restricted to ``active_ids`` and missing categories not yet in ``vocabulary``."""
    obj = extract_json(raw)
    ids = obj.get("key_object_ids")
    missing = obj.get("missing_categories", [])
    if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ids):
        raise VLMParseError("'key_object_ids' must be a list of integers", raw)
    if not isinstance(missing, list) or not all(isinstance(m, str) for m in missing):
        raise VLMParseError("'missing_categories' must be a list of strings", raw)
    active = set(active_ids)
    keep = tuple(sorted({i for i in ids if i in active}))
    dropped = tuple(sorted({i for i in ids if i not in active}))
    known = set(normalize_terms(vocabulary))
    new = tuple(m for m in normalize_terms(missing) if m not in known)
    return FilterDecision(keep, new, dropped)


class ScriptedTransport:
    """Deterministic stand-in for a VLM endpoint: the n-th request gets ``responses[n]``."""

    def __init__(self, responses: Mapping[int, str] | Sequence[str], offset: int = 0):
        if isinstance(responses, Mapping):
            self.responses = {int(k): v for k, v in responses.items()}
        else:
            self.responses = dict(enumerate(responses))
        self.offset = offset
        self.requests: list[dict] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, request: dict) -> str:
        ordinal = self.offset + len(self.requests)
        self.requests.append(request)
        try:
            return self.responses[ordinal]
        except KeyError:
            raise VLMTransportError(f"mock VLM has no response for request #{ordinal}") from None


class MockVLMFixture:
    """Scripted responses per trajectory, loaded from JSON.

    File layout: ``{"<trajectory name>": ["response 0", "response 1", ...]}``;
    a trajectory may map to an object keyed by ordinal strings instead.
    """

    def __init__(self, scripts: Mapping[str, Mapping[int, str] | Sequence[str]]):
        self.scripts = dict(scripts)

    @classmethod
    def load(cls, path: Path | str) -> "MockVLMFixture":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def for_trajectory(self, name: str, offset: int = 0) -> ScriptedTransport:
        if name not in self.scripts:
            raise VLMTransportError(f"mock VLM fixture has no script for trajectory {name!r}")
        return ScriptedTransport(self.scripts[name], offset)


class HTTPTransport:
    """OpenAI-compatible ``/chat/completions`` client with bounded retries."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, max_retries: int = 3,
                 backoff: float = 1.0, max_in_flight: int = 4, timeout: float = 120.0,
                 client: httpx.Client | None = None, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.max_retries = max_retries
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_env(cls, **kwargs) -> "HTTPTransport":
        try:
            base_url = os.environ["AUTOFOCUS_VLM_BASE_URL"]
            model = os.environ["AUTOFOCUS_VLM_MODEL"]
        except KeyError as exc:
            raise VLMTransportError(f"environment variable {exc.args[0]} is not set") from None
        return cls(base_url, model, os.environ.get("AUTOFOCUS_VLM_API_KEY"), **kwargs)

    def complete(self, request: dict) -> str:
        body = {"model": self.model, "messages": request["messages"],
                "temperature": request.get("temperature", 0)}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            with self._slots:
                try:
                    resp = self.client.post(self.base_url + "/chat/completions", json=body, headers=headers)
                except httpx.TransportError as exc:
                    last = exc
                    continue
                with self._lock:
                    self.calls += 1
            if resp.status_code == 429 or resp.status_code >= 500:
                last = httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                continue
            if resp.status_code >= 400:
                raise VLMTransportError(f"VLM request rejected with status {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise VLMParseError(f"malformed chat completion payload: {exc}", resp.text) from exc
        raise VLMTransportError(f"VLM request failed after {self.max_retries + 1} attempts: {last}")
