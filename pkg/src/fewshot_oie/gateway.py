"""Chat backends, a content-addressed response cache, and transcript execution."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .corpus import AnnotatedSentence, Triplet, canonical_key, normalize_text
from .parsing import format_triplet
from .prompts import DEMO_HEADER, QUIZ_HEADER, ChatMessage, Transcript, query_target

logger = logging.getLogger(__name__)

_KEY_RE = re.compile(r"^[0-9a-f]{64}$")


class BackendError(RuntimeError):
    retriable = False


class TransportError(BackendError):
    retriable = True


class MalformedResponseError(BackendError):
    pass


class CredentialsError(BackendError):
    pass


@dataclass(frozen=True)
class CompletionParams:
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_tokens: int = 512
    seed_hint: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class RawResponse:
    text: str
    backend_id: str
    cached: bool = False
    latency_ms: int = 0


def _serialize_messages(messages: Sequence[ChatMessage]) -> str:
    return "".join(f"{m.role}\u0000{m.content}\u0000" for m in messages)


def cache_key(backend_id: str, transcript: Transcript | Sequence[ChatMessage], params: CompletionParams) -> str:
    """SHA-256 hex digest of the request.

    Serialization: ``backend_id``, ``model``, temperature rendered with six decimals
    and ``max_tokens``, each followed by NUL, then every message as
    ``role NUL content NUL``.
    """
    messages = transcript.messages if isinstance(transcript, Transcript) else transcript
    head = f"{backend_id}\u0000{params.model}\u0000{params.temperature:.6f}\u0000{params.max_tokens}\u0000"
    return hashlib.sha256((head + _serialize_messages(messages)).encode("utf-8")).hexdigest()


def transcript_digest(transcript: Transcript | Sequence[ChatMessage]) -> str:
    """SHA-256 over the messages alone; the lookup key of scripted mock fixtures."""
    messages = transcript.messages if isinstance(transcript, Transcript) else transcript
    return hashlib.sha256(_serialize_messages(messages).encode("utf-8")).hexdigest()


class ResponseCache:
    """Directory holding one file per cache key whose content is the response text."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / key

    def get(self, key: str) -> str | None:
        try:
            return self._path(key).read_bytes().decode("utf-8")
        except FileNotFoundError:
            return None

    def put(self, key: str, text: str) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(text.encode("utf-8"))
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def keys(self) -> list[str]:
        if not self.directory.is_dir():
            return []
        return sorted(p.name for p in self.directory.iterdir() if _KEY_RE.match(p.name))

    def stats(self) -> tuple[int, int]:
        keys = self.keys()
        return len(keys), sum(self._path(k).stat().st_size for k in keys)

    def clear(self) -> int:
        keys = self.keys()
        for k in keys:
            self._path(k).unlink(missing_ok=True)
        return len(keys)


class ChatBackend:
    """Base for chat backends. ``calls`` counts every attempted request."""

    backend_id = "abstract"
    max_in_flight = 4

    def __init__(self):
        self.calls = 0
        self._counter_lock = threading.Lock()

    def __deepcopy__(self, memo):
        # Backends hold connections and locks; estimator clones share them.
        return self

    def complete(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
        with self._counter_lock:
            self.calls += 1
        return self._complete(list(messages), params)

    def _complete(self, messages: list[ChatMessage], params: CompletionParams) -> str:
        raise NotImplementedError


class HTTPChatBackend(ChatBackend):
    """OpenAI-compatible ``/v1/chat/completions`` endpoint."""

    def __init__(self, url: str = "https://api.openai.com/v1/chat/completions", *,
                 api_key_env: str = "OPENAI_API_KEY", timeout: float = 120.0,
                 max_in_flight: int = 4, client: httpx.Client | None = None, require_key: bool = True):
        super().__init__()
        self.url = url
        self.api_key = os.environ.get(api_key_env)
        if require_key and not self.api_key:
            raise CredentialsError(f"environment variable {api_key_env} is not set")
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.backend_id = f"http:{url}"
        self._client = client or httpx.Client(timeout=timeout)

    def _complete(self, messages, params):
        payload = {
            "model": params.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed_hint is not None:
            payload["seed"] = params.seed_hint
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._client.post(self.url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.url} returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"malformed chat payload: {resp.text[:200]!r}") from exc
        if content is None:
            return ""
        if not isinstance(content, str):
            raise MalformedResponseError(f"malformed chat payload: {resp.text[:200]!r}")
        return content


class ScriptedBackend(ChatBackend):
    """Replays canned responses.

    Fixture lines are ``{"key": transcript_digest, "response": text}``. Two fallbacks
    make fixtures easy to write by hand: ``{"sentence": text, "response": ...}`` answers
    any extraction query for that sentence, and ``{"key": "*", ...}`` answers anything
    else. Lookups that match nothing raise a non-retriable error.
    """

    max_in_flight = 16

    def __init__(self, by_digest: Mapping[str, str] | None = None, by_sentence: Mapping[str, str] | None = None,
                 default: str | None = None, name: str = "mock"):
        super().__init__()
        self.by_digest = dict(by_digest or {})
        self.by_sentence = dict(by_sentence or {})
        self.default = default
        self.backend_id = name

    @classmethod
    def from_jsonl(cls, path, name: str | None = None) -> "ScriptedBackend":
        by_digest, by_sentence, default = {}, {}, None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    response = rec["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad mock fixture line") from exc
                if rec.get("key") == "*":
                    default = response
                elif "key" in rec:
                    by_digest[rec["key"]] = response
                elif "sentence" in rec:
                    by_sentence[rec["sentence"]] = response
                else:
                    raise ValueError(f"{path}:{lineno}: fixture line needs 'key' or 'sentence'")
        return cls(by_digest, by_sentence, default, name=name or f"mock:{Path(path).name}")

    def _complete(self, messages, params):
        digest = transcript_digest(messages)
        if digest in self.by_digest:
            return self.by_digest[digest]
        target = query_target(messages[-1])
        if target is not None and target in self.by_sentence:
            return self.by_sentence[target]
        if self.default is not None:
            return self.default
        raise BackendError(f"no scripted response for transcript {digest[:12]}")


class SyntheticExtractor(ChatBackend):
    """Simulated extractor with tunable disagreement, for offline experiments.

    For an extraction query about a known sentence, it seeds
    ``random.Random(f"{seed}:{transcript_digest}")`` and then, in order:

    1. for each gold triplet, draws ``r``; the triplet is dropped when ``r < p_drop``;
    2. draws ``r``; when ``r < p_noise`` a distractor is injected, built from three
       ``rng.choice`` picks over the sentence's normalized tokens (subject,
       predicate, object). A distractor equal to a gold triplet is discarded.

    When the transcript contains demonstrations, both probabilities are multiplied by
    ``1 - demo_benefit``. Quiz turns are answered with the quiz sentences' gold
    triplets, and unknown sentences raise a non-retriable error.
    """

    max_in_flight = 16

    def __init__(self, gold: Mapping[str, Sequence[Triplet]], p_drop: float = 0.3, p_noise: float = 0.5,
                 seed: int = 0, demo_benefit: float = 0.5):
        super().__init__()
        self.gold = {text: list(ts) for text, ts in gold.items()}
        self.p_drop = p_drop
        self.p_noise = p_noise
        self.seed = seed
        self.demo_benefit = demo_benefit
        self.backend_id = f"synthetic:seed={seed},p_drop={p_drop},p_noise={p_noise},demo_benefit={demo_benefit}"

    @classmethod
    def from_corpora(cls, *corpora: Sequence[AnnotatedSentence], **kwargs) -> "SyntheticExtractor":
        gold: dict[str, list[Triplet]] = {}
        for corpus in corpora:
            for a in corpus:
                gold.setdefault(a.text, list(a.gold))
        return cls(gold, **kwargs)

    def _answer_quiz(self, content: str) -> str:
        lines = []
        for raw in content.split("\n")[1:]:
            m = re.match(r"^\d+\.\s(.*)$", raw)
            if m:
                lines += [format_triplet(t, len(lines) + 1) for t in self.gold.get(m.group(1), [])]
        return "\n".join(lines) if lines else "No triplets found."

    def _complete(self, messages, params):
        last = messages[-1]
        target = query_target(last)
        if target is None:
            if last.role == "user" and last.content.startswith(QUIZ_HEADER):
                return self._answer_quiz(last.content)
            return "OK."
        if target not in self.gold:
            raise BackendError(f"synthetic extractor has no gold for sentence {target[:60]!r}")

        has_demos = any(m.role == "user" and m.content.startswith(DEMO_HEADER) for m in messages)
        factor = (1.0 - self.demo_benefit) if has_demos else 1.0
        p_drop, p_noise = self.p_drop * factor, self.p_noise * factor
        rng = random.Random(f"{self.seed}:{transcript_digest(messages)}")

        out = [t for t in self.gold[target] if not rng.random() < p_drop]
        if rng.random() < p_noise:
            tokens = normalize_text(target)
            if tokens:
                distractor = Triplet(rng.choice(tokens), rng.choice(tokens), rng.choice(tokens))
                gold_keys = {canonical_key(t) for t in self.gold[target]}
                if canonical_key(distractor) not in gold_keys:
                    out.append(distractor)
        return "\n".join(format_triplet(t, i) for i, t in enumerate(out, start=1))


class Gateway:
    """Runs transcripts against a backend through an optional response cache.

    Concurrent requests for the same key are collapsed into one backend call.
    """

    def __init__(self, backend: ChatBackend, cache: ResponseCache | None = None, *,
                 max_retries: int = 3, backoff: float = 0.5, sleep=time.sleep):
        self.backend = backend
        self.cache = cache
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._in_flight = threading.BoundedSemaphore(max(1, backend.max_in_flight))
        self._key_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._stats_lock = threading.Lock()
        self.cache_hits = 0
        self.backend_calls = 0

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._key_locks.setdefault(key, threading.Lock())

    def _lookup(self, key: str) -> str | None:
        if self.cache is None:
            return None
        text = self.cache.get(key)
        if text is not None:
            with self._stats_lock:
                self.cache_hits += 1
        return text

    def _call_backend(self, messages, params) -> str:
        attempt = 0
        while True:
            try:
                with self._in_flight:
                    with self._stats_lock:
                        self.backend_calls += 1
                    return self.backend.complete(messages, params)
            except BackendError as exc:
                if not exc.retriable or attempt >= self.max_retries:
                    raise
                delay = self.backoff * (2 ** attempt)
                logger.warning("%s: %s; retry %d in %.2fs", self.backend.backend_id, exc, attempt + 1, delay)
                attempt += 1
                self._sleep(delay)

    def _request(self, messages: tuple[ChatMessage, ...], params: CompletionParams) -> RawResponse:
        key = cache_key(self.backend.backend_id, messages, params)
        text = self._lookup(key)
        if text is not None:
            return RawResponse(text, self.backend.backend_id, cached=True, latency_ms=0)
        with self._key_lock(key):
            text = self._lookup(key)
            if text is not None:
                return RawResponse(text, self.backend.backend_id, cached=True, latency_ms=0)
            start = time.perf_counter()
            text = self._call_backend(messages, params)
            latency = int((time.perf_counter() - start) * 1000)
            if self.cache is not None:
                self.cache.put(key, text)
        return RawResponse(text, self.backend.backend_id, cached=False, latency_ms=latency)

    def converse(self, transcript: Transcript, params: CompletionParams) -> tuple[Transcript, RawResponse]:
        """Execute a transcript, resolving a pending quiz first.

        Returns the full conversation (including the final answer) and the final
        response.
        """
        if not transcript.messages:
            raise ValueError("cannot complete an empty transcript")
        messages = transcript.messages
        if transcript.awaiting_quiz_answer:
            cut = transcript.quiz_at
            answer = self._request(messages[:cut], params)
            messages = (
                messages[:cut]
                + (ChatMessage("assistant", answer.text or "(empty response)"),
                   ChatMessage("user", transcript.quiz_correction))
                + messages[cut:]
            )
        final = self._request(messages, params)
        resolved = Transcript(messages + (ChatMessage("assistant", final.text or "(empty response)"),))
        return resolved, final

    def complete(self, transcript: Transcript, params: CompletionParams) -> RawResponse:
        return self.converse(transcript, params)[1]
