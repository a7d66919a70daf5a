"""Prompt construction and dispatch for post-OCR correction.

Two prompting modes: zero-shot sends the instruction plus the OCR text;
few-shot appends dictionary hint pairs under a suffix header. Backends
speak the common chat-completion JSON shape over HTTP; mocks cover tests
and offline use.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

import requests

from .errors import DriveThruError
from .lexicon import SimilarPair

BASE_URL_ENV = "DRIVETHRU_LLM_BASE_URL"
API_KEY_ENV = "DRIVETHRU_LLM_API_KEY"
MODEL_ENV = "DRIVETHRU_LLM_MODEL"

DEFAULT_PREFIX = "Fix the grammar of the following text"
DEFAULT_SUFFIX_HEADER = "The following are potentially similar words from the dictionary"


class BackendUnavailable(DriveThruError):
    pass


class BackendRefused(DriveThruError):
    def __init__(self, message: str, status: int = 0, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ResponseEmpty(DriveThruError):
    pass


class PromptTooLong(DriveThruError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    prefix: str = DEFAULT_PREFIX
    suffix_header: str = DEFAULT_SUFFIX_HEADER

    def __post_init__(self):
        if not self.prefix:
            raise ValueError("prompt prefix must be nonempty")


@dataclass(frozen=True)
class CorrectionRequest:
    ocr_text: str
    mode: str = "zero_shot"
    language: str = ""
    pairs: tuple[SimilarPair, ...] = ()
    template: PromptTemplate = PromptTemplate()

    def __post_init__(self):
        if self.mode not in ("zero_shot", "few_shot"):
            raise ValueError(f"unknown correction mode {self.mode!r}")
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.mode == "zero_shot" and self.pairs:
            raise ValueError("zero_shot requests carry no hint pairs")


@dataclass(frozen=True)
class CorrectionResult:
    corrected_text: str
    backend_id: str
    prompt_rendered: str
    latency_ms: float


@dataclass(frozen=True)
class GenerationParams:
    """Decoding settings. Temperature 0 keeps runs reproducible."""

    temperature: float = 0.0
    max_tokens: int = 2048
    model: str = ""
    max_prompt_chars: int = 100_000


def render_prompt(req: CorrectionRequest) -> str:
    """Deterministic prompt text for a request.

    Zero-shot: ``{prefix}:\\n\\n{ocr_text}``. Few-shot appends the suffix
    header plus one ``token -> candidate (gloss)`` line per hint pair, in
    the order given. An empty pair list renders like zero-shot.
    """
    t = req.template
    prompt = f"{t.prefix}:\n\n{req.ocr_text}"
    if req.mode == "few_shot" and req.pairs:
        lines = "\n".join(
            f"{p.token} -> {p.candidate} ({p.gloss})" for p in req.pairs
        )
        prompt += f"\n\n{t.suffix_header}:\n{lines}"
    return prompt


_PREAMBLE_RE = re.compile(
    r"^(?:here(?:'s| is| are)\b|berikut\b|sure[,.!]?\s)[^\n]*\n+",
    re.IGNORECASE,
)
_FENCE_RE = re.compile(r"^```[^\n]*\n(.*)\n```$", re.DOTALL)


def extract_response(completion: str) -> str:
    """Strip the chatter chat models wrap around an answer: a leading
    "Here is ..."-style line and surrounding code fences. The remaining
    body is returned with outer whitespace trimmed."""
    text = completion.strip()
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1).strip()
    text = _PREAMBLE_RE.sub("", text, count=1)
    return text.strip()


class LlmBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str, params: GenerationParams) -> str: ...

    def ping(self) -> bool: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockBackend:
    """Canned completions keyed by sha256 of the prompt."""

    backend_id = "mock"

    def __init__(self, mapping: dict[str, str], default: Optional[str] = None):
        self.mapping = dict(mapping)
        self.default = default

    @classmethod
    def from_file(cls, path: str | Path, default: Optional[str] = None) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), default=default)

    @classmethod
    def from_prompts(cls, prompt_to_completion: dict[str, str]) -> "MockBackend":
        """Convenience: key by plain prompt text instead of its hash."""
        return cls({prompt_hash(p): c for p, c in prompt_to_completion.items()})

    def complete(self, prompt: str, params: GenerationParams) -> str:
        key = prompt_hash(prompt)
        if key in self.mapping:
            return self.mapping[key]
        if self.default is not None:
            return self.default
        raise BackendUnavailable(f"mock backend has no completion for prompt hash {key[:12]}")

    def ping(self) -> bool:
        return True


class EchoBackend:
    """Returns the prompt verbatim. Handy for wiring tests."""

    backend_id = "echo"

    def complete(self, prompt: str, params: GenerationParams) -> str:
        return prompt

    def ping(self) -> bool:
        return True


class HttpChatBackend:
    """Chat-completion client over HTTP.

    POSTs ``{base_url}/chat/completions`` with a single user message and
    reads ``choices[0].message.content``. Retries with exponential backoff
    on 429 and 5xx; 4xx surfaces as BackendRefused with the body captured.
    A semaphore caps in-flight requests.
    """

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        max_in_flight: int = 4,
        max_tries: int = 5,
        backoff_base_s: float = 0.5,
        backoff_cap_s: float = 8.0,
        timeout_s: float = 60.0,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        if not self.base_url:
            raise BackendUnavailable(f"no backend URL configured (set {BASE_URL_ENV})")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.model = model or os.environ.get(MODEL_ENV, "")
        self.max_tries = max_tries
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self._slots = threading.Semaphore(max_in_flight)
        self.backend_id = f"http:{self.model or 'default'}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, prompt: str, params: GenerationParams) -> str:
        payload = {
            "model": params.model or self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_err: Exception | None = None
        for attempt in range(self.max_tries):
            try:
                with self._slots:
                    resp = self.session.post(
                        url, json=payload, headers=self._headers(), timeout=self.timeout_s
                    )
            except requests.RequestException as err:
                raise BackendUnavailable(f"backend unreachable: {err}") from err
            if resp.status_code == 429 or resp.status_code >= 500:
                last_err = BackendRefused(
                    f"backend returned {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text[:2000],
                )
                time.sleep(min(self.backoff_cap_s, self.backoff_base_s * 2**attempt))
                continue
            if resp.status_code >= 400:
                raise BackendRefused(
                    f"backend refused request with {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text[:2000],
                )
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as err:
                raise ResponseEmpty(f"malformed completion payload: {err}") from err
            if content is None:
                raise ResponseEmpty("completion had no content")
            return content
        raise last_err or BackendUnavailable("backend retries exhausted")

    def ping(self) -> bool:
        try:
            self.session.get(self.base_url, timeout=2.0)
            return True
        except requests.RequestException:
            return False


def correct(
    req: CorrectionRequest,
    backend: LlmBackend,
    params: GenerationParams | None = None,
) -> CorrectionResult:
    """Render the prompt, run the backend, and return the extracted
    correction. The rendered prompt is kept on the result for audit."""
    params = params or GenerationParams()
    prompt = render_prompt(req)
    if len(prompt) > params.max_prompt_chars:
        raise PromptTooLong(
            f"prompt is {len(prompt)} chars, limit {params.max_prompt_chars}"
        )
    start = time.monotonic()
    completion = backend.complete(prompt, params)
    latency_ms = (time.monotonic() - start) * 1000.0
    corrected = extract_response(completion)
    if not corrected:
        raise ResponseEmpty("backend returned an empty correction")
    return CorrectionResult(
        corrected_text=corrected,
        backend_id=backend.backend_id,
        prompt_rendered=prompt,
        latency_ms=latency_ms,
    )
