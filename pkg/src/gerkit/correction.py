"""LLM-based correction of N-best lists: prompts, backends, parsing.

Two prompting modes. Generation asks the model for a free-form corrected
transcription conditioned on the ranked hypotheses; selection asks only
for the index of the best candidate. Few-shot variants prepend k worked
correction examples. Rendering is deterministic, so prompts are
content-addressable: responses are cached on disk by a digest of
(model, temperature, prompt) and reruns are resumable without network
access.

Backends are pluggable. http_chat talks a minimal chat-completions wire
format to any compatible gateway; mock_echo, mock_oracle, and identity
are offline doubles used for testing and for exercising the evaluation
pipeline end to end.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import requests

from gerkit.records import CorrectionRecord, NBestList

log = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "GERKIT_API_TOKEN"

TEMPLATE_VERSION = "default-v1"
_KNOWN_TEMPLATES = ("default-v1",)


class BackendError(RuntimeError):
    """A backend request failed."""

    def __init__(self, message: str, transient: bool = False):
        super().__init__(message)
        self.transient = transient


@dataclass(frozen=True)
class PromptConfig:
    mode: str = "generation"  # generation | selection
    shots: int = 0
    template: str = TEMPLATE_VERSION
    language_name: str = "Frisian"

    def __post_init__(self) -> None:
        if self.mode not in ("generation", "selection"):
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if self.template not in _KNOWN_TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")


@dataclass(frozen=True)
class FewShotExample:
    """One worked correction: hypothesis strings plus the right answer."""

    nbest: tuple[str, ...]
    reference: str

    def __post_init__(self) -> None:
        if not self.nbest:
            raise ValueError("few-shot example needs at least one hypothesis")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock_echo"  # http_chat | mock_echo | mock_oracle | identity
    endpoint: Optional[str] = None
    model_name: str = "mock"
    temperature: float = 0.0
    max_retries: int = 3
    requests_per_minute: int = 0  # 0 = unlimited
    cache_dir: Optional[str] = None
    max_concurrency: int = 4
    retry_base_delay: float = 0.5
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("http_chat", "mock_echo", "mock_oracle", "identity"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if self.kind == "http_chat" and not self.endpoint:
            raise ValueError("http_chat backend requires an endpoint")


# ---------------------------------------------------------------------------
# prompt rendering


def _role_instruction(cfg: PromptConfig) -> str:
    return (
        f"You are a {cfg.language_name} language expert specializing in "
        "correcting automatic speech recognition output."
    )


def _numbered(hyps: Sequence[str]) -> str:
    return "\n".join(f"{i}. {h}" for i, h in enumerate(hyps, start=1))


def _output_instruction(cfg: PromptConfig, n: int) -> str:
    if cfg.mode == "generation":
        return (
            "Provide the corrected transcription of the utterance. "
            "Output only the corrected transcription, nothing else."
        )
    return (
        "Choose the best candidate from the list above and output only "
        f"its index (a number between 1 and {n}). Output nothing else."
    )


def build_prompt(
    nbest: NBestList,
    cfg: PromptConfig,
    examples: Sequence[FewShotExample] = (),
) -> str:
    """Render the full prompt text. Byte-identical for equal inputs."""
    if len(examples) < cfg.shots:
        raise ValueError(
            f"{cfg.shots}-shot prompt requested but only {len(examples)} "
            "example(s) supplied"
        )
    parts = [_role_instruction(cfg), ""]
    for i, ex in enumerate(examples[: cfg.shots], start=1):
        parts.append(f"Example {i}:")
        parts.append(_numbered(ex.nbest))
        parts.append(f"Correction: {ex.reference}")
        parts.append("")
    parts.append("ASR hypotheses:")
    parts.append(_numbered([h.text for h in nbest.hypotheses]))
    parts.append("")
    parts.append(_output_instruction(cfg, len(nbest.hypotheses)))
    return "\n".join(parts)


def split_system_user(prompt: str) -> tuple[str, str]:
    """Split a rendered prompt into (system, user) chat messages."""
    head, _, rest = prompt.partition("\n\n")
    return head, rest


def prompt_digest(model_name: str, temperature: float, prompt: str) -> str:
    h = hashlib.sha256()
    h.update(model_name.encode("utf-8"))
    h.update(b"\x00")
    h.update(repr(float(temperature)).encode("ascii"))
    h.update(b"\x00")
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


# ---------------------------------------------------------------------------
# response parsing

_FENCE_RE = re.compile(r"^```[^\n]*\n(.*?)\n?```\s*$", re.DOTALL)
_INT_RE = re.compile(r"\d+")


def parse_generation(raw: str, nbest: NBestList) -> tuple[str, str]:
    """Extract the corrected transcription from a raw model response.

    Strips code fences and enclosing quotes, keeps the first non-empty
    line; an empty result falls back to the rank-1 hypothesis.
    """
    text = raw.strip()
    fenced = _FENCE_RE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    line = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    while len(line) >= 2 and line[0] == line[-1] and line[0] in "\"'":
        line = line[1:-1].strip()
    if not line:
        return nbest.top.text, "fallback"
    return line, "ok"


def parse_selection(raw: str, n: int) -> tuple[int, str]:
    """First integer in the response, valid iff within 1..n; else (1, fallback)."""
    if n < 1:
        raise ValueError("selection requires at least one candidate")
    m = _INT_RE.search(raw)
    if m:
        index = int(m.group(0))
        if 1 <= index <= n:
            return index, "ok"
    return 1, "fallback"


# ---------------------------------------------------------------------------
# backends


class _RateLimiter:
    def __init__(self, per_minute: int):
        self.interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if delay > 0:
            time.sleep(delay)


class Backend:
    """Produces a raw response string for one utterance's prompt."""

    def respond(
        self, prompt: str, nbest: NBestList, reference: Optional[str], mode: str
    ) -> str:
        raise NotImplementedError


class MockEchoBackend(Backend):
    """Returns the rank-1 hypothesis verbatim."""

    def respond(self, prompt, nbest, reference, mode):
        return nbest.top.text


class MockOracleBackend(Backend):
    """Returns the supplied reference transcript (generation-mode double)."""

    def respond(self, prompt, nbest, reference, mode):
        if reference is None:
            raise BackendError(f"no reference available for {nbest.utt_id}")
        return reference


class IdentityBackend(Backend):
    """Keeps the ASR output: rank-1 text, or index 1 in selection mode."""

    def respond(self, prompt, nbest, reference, mode):
        return "1" if mode == "selection" else nbest.top.text


class HttpChatBackend(Backend):
    """Minimal chat-completions client.

    POSTs {model, temperature, messages: [{role: system|user, content}]}
    and reads choices[0].message.content. The bearer token, if any, comes
    from the GERKIT_API_TOKEN environment variable.
    """

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg

    def respond(self, prompt, nbest, reference, mode):
        system, user = split_system_user(prompt)
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.cfg.endpoint, json=payload, headers=headers,
                timeout=self.cfg.timeout_s,
            )
        except requests.RequestException as e:
            raise BackendError(f"request failed: {e}", transient=True) from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"HTTP {resp.status_code}", transient=True)
        if resp.status_code != 200:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"malformed response body: {e}") from e


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "http_chat":
        return HttpChatBackend(cfg)
    if cfg.kind == "mock_echo":
        return MockEchoBackend()
    if cfg.kind == "mock_oracle":
        return MockOracleBackend()
    return IdentityBackend()


# ---------------------------------------------------------------------------
# cached, rate-limited batch driver


class ResponseCache:
    """Content-addressed response store; writes are atomic."""

    def __init__(self, cache_dir: Optional[str]):
        self.dir = Path(cache_dir) if cache_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def get(self, digest: str) -> Optional[str]:
        if not self.dir:
            return None
        path = self.dir / f"{digest}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, digest: str, response: str) -> None:
        if not self.dir:
            return
        path = self.dir / f"{digest}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"response": response}, ensure_ascii=False), encoding="utf-8"
        )
        tmp.replace(path)


def _call_with_retry(
    backend: Backend,
    bcfg: BackendConfig,
    limiter: _RateLimiter,
    prompt: str,
    nbest: NBestList,
    reference: Optional[str],
    mode: str,
) -> str:
    last: Optional[BackendError] = None
    for attempt in range(bcfg.max_retries):
        limiter.wait()
        try:
            return backend.respond(prompt, nbest, reference, mode)
        except BackendError as e:
            last = e
            if not e.transient:
                break
            if attempt + 1 < bcfg.max_retries and bcfg.retry_base_delay > 0:
                time.sleep(bcfg.retry_base_delay * (2**attempt))
    assert last is not None
    raise last


def correct_one(
    nbest: NBestList,
    pcfg: PromptConfig,
    bcfg: BackendConfig,
    examples: Sequence[FewShotExample],
    backend: Backend,
    cache: ResponseCache,
    limiter: _RateLimiter,
    reference: Optional[str] = None,
) -> CorrectionRecord:
    prompt = build_prompt(nbest, pcfg, examples)
    digest = prompt_digest(bcfg.model_name, bcfg.temperature, prompt)

    raw = cache.get(digest)
    error = None
    if raw is None:
        try:
            raw = _call_with_retry(
                backend, bcfg, limiter, prompt, nbest, reference, pcfg.mode
            )
            cache.put(digest, raw)
        except BackendError as e:
            error = str(e)
            raw = ""

    if error is not None:
        # failed request: keep the ASR output so the pipeline continues
        corrected, status = nbest.top.text, "fallback"
        index = 1 if pcfg.mode == "selection" else None
    elif pcfg.mode == "generation":
        corrected, status = parse_generation(raw, nbest)
        index = None
    else:
        index, status = parse_selection(raw, len(nbest.hypotheses))
        corrected = nbest.hypotheses[index - 1].text

    return CorrectionRecord(
        utt_id=nbest.utt_id,
        mode=pcfg.mode,
        shots=pcfg.shots,
        prompt_hash=digest,
        raw_response=raw,
        corrected_text=corrected,
        selected_index=index,
        parse_status=status,
        error=error,
    )


def correct_batch(
    nbests: Sequence[NBestList],
    pcfg: PromptConfig,
    bcfg: BackendConfig,
    examples: Sequence[FewShotExample] = (),
    references: Optional[dict[str, str]] = None,
) -> list[CorrectionRecord]:
    """Correct every utterance; output order matches input order.

    Responses come from the cache when present. Transient failures retry
    with exponential backoff; exhausted retries mark the record failed
    (error set, ASR output kept) and the batch continues.
    """
    if len(examples) < pcfg.shots:
        raise ValueError(
            f"{pcfg.shots}-shot correction requires {pcfg.shots} examples, "
            f"got {len(examples)}"
        )
    backend = make_backend(bcfg)
    cache = ResponseCache(bcfg.cache_dir)
    limiter = _RateLimiter(bcfg.requests_per_minute)
    refs = references or {}

    def work(nbest: NBestList) -> CorrectionRecord:
        return correct_one(
            nbest, pcfg, bcfg, examples, backend, cache, limiter,
            reference=refs.get(nbest.utt_id),
        )

    if bcfg.max_concurrency <= 1 or len(nbests) <= 1:
        return [work(nb) for nb in nbests]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=bcfg.max_concurrency) as pool:
        return list(pool.map(work, nbests))
