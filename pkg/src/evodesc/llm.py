"""Chat-LLM providers and the prompts sent through them.

Three interchangeable providers cover the lifecycle of a run: a live HTTP
provider for real optimization, a scripted provider that serves queued
responses for tests, and a replay provider that maps a digest of the
request to a canned response so whole runs can be replayed offline and
deterministically.

Prompt text lives in template files under prompts/; builders fill them in
and return ChatRequest values. Responses are parsed leniently, because
models wrap JSON in fences and prose more often than not.
"""

from __future__ import annotations

import json
import os
import re
import string
import threading
import time
from dataclasses import dataclass
from hashlib import sha256
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .types import (
    ClassLabel,
    ConfigError,
    DescriptorSet,
    MemoryRecord,
    POSITIVE,
    ProviderError,
    ResponseParseError,
    VisualFeedback,
    is_valid_descriptor,
)

_RETRY_DELAYS = (1.0, 4.0, 16.0)
_TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})
_MEMORY_LIMIT_PER_POLARITY = 50


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = 1.0
    max_tokens: int = 4096


def request_digest(system: str, user: str) -> str:
    """Hex digest identifying a request by its prompt text alone."""
    h = sha256()
    h.update(system.encode("utf-8"))
    h.update(b"\x1f")
    h.update(user.encode("utf-8"))
    return h.hexdigest()


def _estimate_tokens(request: ChatRequest, response: str) -> int:
    return (len(request.system) + len(request.user) + len(response)) // 4


class ChatProvider:
    """Base class: subclasses implement _complete, this tracks token use."""

    kind = "base"
    parallel_safe = False

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.tokens_used = 0

    def complete(self, request: ChatRequest) -> str:
        response, tokens = self._complete(request)
        with self._lock:
            self.tokens_used += tokens
        return response

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        raise NotImplementedError


class ScriptedProvider(ChatProvider):
    """Serves a fixed queue of responses in order. Test double."""

    kind = "scripted"
    parallel_safe = False

    def __init__(self, responses: Sequence[str]):
        super().__init__()
        self._queue = list(responses)
        self.requests: list[ChatRequest] = []

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        with self._lock:
            if not self._queue:
                raise ProviderError("scripted provider has no responses left")
            response = self._queue.pop(0)
            self.requests.append(request)
        return response, _estimate_tokens(request, response)


class ReplayProvider(ChatProvider):
    """Maps request digests to recorded responses.

    The script is a JSON object {digest: response}. A digest miss is a
    hard error that reports the digest so the fixture can be extended.
    """

    kind = "replay"
    parallel_safe = True

    def __init__(self, script: Mapping[str, str] | str | Path):
        super().__init__()
        if isinstance(script, (str, Path)):
            with open(script, "r", encoding="utf-8") as fh:
                script = json.load(fh)
        if not isinstance(script, Mapping):
            raise ConfigError("replay script must be a JSON object of digest -> response")
        self._script = dict(script)

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        digest = request_digest(request.system, request.user)
        try:
            response = self._script[digest]
        except KeyError:
            raise ProviderError(
                f"replay script has no response for request digest {digest}"
            ) from None
        return response, _estimate_tokens(request, response)


class RecordingProvider(ChatProvider):
    """Wraps another provider and records digest -> response pairs."""

    kind = "recording"
    parallel_safe = False

    def __init__(self, inner: ChatProvider):
        super().__init__()
        self.inner = inner
        self.script: dict[str, str] = {}

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        response = self.inner.complete(request)
        digest = request_digest(request.system, request.user)
        with self._lock:
            self.script[digest] = response
        return response, 0

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.script, fh, indent=2, sort_keys=True)
            fh.write("\n")


class HttpProvider(ChatProvider):
    """OpenAI-style chat completion endpoint over HTTP.

    The API key is read from the environment variable named by
    `credential_env`; it is never taken from configuration files. 429 and
    5xx responses and connection failures are retried with 1s, 4s, 16s
    backoff before giving up.
    """

    kind = "http"
    parallel_safe = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "EVODESC_API_KEY",
        timeout: float = 120.0,
        post: Callable | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout
        if post is None:
            import requests

            post = requests.post
        self._post = post
        self._sleep = sleep

    def _complete(self, request: ChatRequest) -> tuple[str, int]:
        key = os.environ.get(self.credential_env)
        if not key:
            raise ConfigError(
                f"environment variable {self.credential_env} is not set"
            )
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {key}",
            "Content-Type": "application/json",
        }
        import requests as _requests

        last_error = "request was not attempted"
        for attempt in range(len(_RETRY_DELAYS) + 1):
            try:
                resp = self._post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except (_requests.ConnectionError, _requests.Timeout) as exc:
                last_error = f"connection failed: {exc}"
            else:
                status = getattr(resp, "status_code", 0)
                if status in _TRANSIENT_STATUSES:
                    last_error = f"transient status {status}"
                elif status >= 400:
                    body = getattr(resp, "text", "")[:200]
                    raise ProviderError(f"chat endpoint returned {status}: {body}")
                else:
                    return self._parse_body(request, resp)
            if attempt < len(_RETRY_DELAYS):
                self._sleep(_RETRY_DELAYS[attempt])
        raise ProviderError(f"chat endpoint unavailable after retries: {last_error}")

    def _parse_body(self, request: ChatRequest, resp) -> tuple[str, int]:
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion response: {exc}") from None
        if not isinstance(content, str):
            raise ProviderError("chat completion content is not a string")
        usage = data.get("usage") or {}
        tokens = usage.get("total_tokens")
        if not isinstance(tokens, int):
            tokens = _estimate_tokens(request, content)
        return content, tokens


def _template(name: str) -> string.Template:
    text = (
        resources.files("evodesc").joinpath("prompts").joinpath(name).read_text("utf-8")
    )
    return string.Template(text)


def build_init_prompt(
    classes: Sequence[ClassLabel],
    n_init: int,
    temperature: float = 1.0,
    max_tokens: int = 4096,
) -> ChatRequest:
    """Initial descriptor-writing request for one cluster of classes."""
    class_list = "\n".join(f"- {c}" for c in classes)
    user = _template("init_user.txt").substitute(
        n_init=n_init, class_list=class_list, n_classes=len(classes)
    )
    return ChatRequest(
        system=_template("init_system.txt").template,
        user=user,
        temperature=temperature,
        max_tokens=max_tokens,
    )


def build_mutation_prompt(
    ds_cluster: DescriptorSet,
    feedback_text: str,
    memory_text: str,
    n_change: int,
    temperature: float = 1.0,
    max_tokens: int = 4096,
) -> ChatRequest:
    user = _template("mutation_user.txt").substitute(
        descriptors_json=ds_cluster.to_json(),
        feedback=feedback_text,
        memory=memory_text or "none",
        n_change=n_change,
    )
    return ChatRequest(
        system=_template("mutation_system.txt").template,
        user=user,
        temperature=temperature,
        max_tokens=max_tokens,
    )


def build_crossover_prompt(
    candidates: Sequence[tuple[DescriptorSet, VisualFeedback]],
    temperature: float = 1.0,
    max_tokens: int = 4096,
) -> ChatRequest:
    """Crossover request over the mutated candidates and their feedback."""
    if not candidates:
        raise ValueError("crossover needs at least one candidate")
    blocks = []
    for i, (ds, feedback) in enumerate(candidates, start=1):
        per_class = ", ".join(
            f"{c} {feedback.per_class_accuracy[c] * 100:.1f}%"
            for c in sorted(feedback.per_class_accuracy)
        )
        blocks.append(
            f"Candidate {i} (overall accuracy {feedback.overall_accuracy * 100:.1f}%):\n"
            f"per-class accuracy: {per_class or 'none'}\n"
            f"{ds.to_json()}"
        )
    user = _template("crossover_user.txt").substitute(
        n_candidates=len(candidates), candidates="\n\n".join(blocks)
    )
    return ChatRequest(
        system=_template("crossover_system.txt").template,
        user=user,
        temperature=temperature,
        max_tokens=max_tokens,
    )


def render_memory(records: Sequence[MemoryRecord]) -> str:
    """History block for mutation prompts.

    Keeps the most recent 50 records of each polarity, in append order,
    one line each: "class: descriptor (+)" or "class: descriptor (-)".
    """
    positives = [i for i, r in enumerate(records) if r.polarity == POSITIVE]
    negatives = [i for i, r in enumerate(records) if r.polarity != POSITIVE]
    kept = sorted(
        positives[-_MEMORY_LIMIT_PER_POLARITY:] + negatives[-_MEMORY_LIMIT_PER_POLARITY:]
    )
    lines = []
    for i in kept:
        r = records[i]
        sign = "+" if r.polarity == POSITIVE else "-"
        lines.append(f"{r.class_name}: {r.descriptor} ({sign})")
    return "\n".join(lines) if lines else "none"


def _extract_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", raw):
        try:
            obj, _end = decoder.raw_decode(raw, match.start())
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ResponseParseError("no JSON object found in response")


def _clean_descriptor(item) -> str | None:
    if isinstance(item, str):
        text = item
    elif isinstance(item, (int, float, bool)):
        text = str(item)
    else:
        return None
    text = text.replace("\r", " ").replace("\n", " ").strip()
    return text if is_valid_descriptor(text) else None


def parse_descriptor_response(
    raw: str,
    expected_classes: Sequence[ClassLabel],
    expected_count: int | None = None,
) -> tuple[DescriptorSet, list[str]]:
    """Extract a descriptor set from a model response.

    Finds the first JSON object in the text (fences and surrounding prose
    are fine), then per expected class: cleans each descriptor (newlines
    collapsed, whitespace stripped), drops unusable entries, dedupes
    keeping the first occurrence, and truncates to `expected_count` when
    there are more. Missing classes and classes left with no usable
    descriptor raise; everything recoverable becomes a warning.
    """
    obj = _extract_json_object(raw)
    warnings: list[str] = []
    extra = [k for k in obj if k not in set(expected_classes)]
    if extra:
        warnings.append(f"ignored {len(extra)} unexpected class key(s): {extra[:5]}")
    entries: dict[str, list[str]] = {}
    for c in expected_classes:
        if c not in obj:
            raise ResponseParseError(f"response is missing class {c!r}")
        value = obj[c]
        if isinstance(value, str):
            warnings.append(f"class {c!r}: single string value, treating as one descriptor")
            value = [value]
        if not isinstance(value, list):
            raise ResponseParseError(
                f"response value for class {c!r} is not a list of descriptors"
            )
        cleaned: list[str] = []
        seen: set[str] = set()
        dropped = 0
        for item in value:
            text = _clean_descriptor(item)
            if text is None:
                dropped += 1
                continue
            if text in seen:
                dropped += 1
                continue
            seen.add(text)
            cleaned.append(text)
        if dropped:
            warnings.append(f"class {c!r}: dropped {dropped} unusable or duplicate entries")
        if not cleaned:
            raise ResponseParseError(f"class {c!r} has no usable descriptors")
        if expected_count is not None:
            if len(cleaned) > expected_count:
                warnings.append(
                    f"class {c!r}: truncated {len(cleaned)} descriptors to {expected_count}"
                )
                cleaned = cleaned[:expected_count]
            elif len(cleaned) < expected_count:
                warnings.append(
                    f"class {c!r}: got {len(cleaned)} descriptors, expected {expected_count}"
                )
        entries[c] = cleaned
    return DescriptorSet(entries=entries), warnings
