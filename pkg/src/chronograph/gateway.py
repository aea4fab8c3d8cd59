"""Uniform client for chat-completion and embedding providers.

One Gateway instance serves one pipeline stage (summarizer, extractor,
embedder, reader, judge).  It wraps a provider (OpenAI-compatible HTTP or
the deterministic mock), a content-addressed on-disk response cache, a
parallelism bound, and call counters.  All pipeline calls use greedy
decoding (temperature 0), and every returned embedding is unit-normalized
by the gateway regardless of what the provider emitted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import ConfigurationError, ProviderError
from .tokenizers import count_tokens

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    max_output_tokens: int
    decoding: str = "greedy"


@dataclass
class ProviderConfig:
    """Connection settings for one provider endpoint.

    ``base_url`` starting with ``mock`` selects the offline mock provider;
    the remainder after ``mock://`` is an optional fixtures directory.
    ``context_tokens`` is the provider's context ceiling (None = unlimited);
    the mock enforces it, and the summarizer pre-checks against it.
    """

    base_url: str = "mock://"
    model_name: str = "mock-model"
    api_key_env: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    max_parallel: int = 4
    retry_base_delay: float = 1.0
    context_tokens: int | None = None
    embedding_dim: int = 64

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "max_parallel": self.max_parallel,
            "retry_base_delay": self.retry_base_delay,
            "context_tokens": self.context_tokens,
            "embedding_dim": self.embedding_dim,
        }


def request_fingerprint(model_name: str, kind: str, payload: str) -> str:
    """Content hash identifying one request; also the cache key and the
    filename the mock provider resolves fixtures by."""
    blob = "\x00".join((model_name, kind, payload)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def chat_fingerprint(request: ChatRequest, model_name: str) -> str:
    payload = request.system_prompt + "\x00" + request.user_prompt
    return request_fingerprint(model_name, "chat", payload)


class ResponseCache:
    """On-disk store keyed by request fingerprint; writes are atomic."""

    def __init__(self, root: str | Path | None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        assert self.root is not None
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str):
        if self.root is None:
            return None
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["value"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            logger.warning("discarding unreadable cache entry %s", path)
            return None

    def put(self, key: str, value) -> None:
        if self.root is None:
            return
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"value": value}), encoding="utf-8")
            os.replace(tmp, path)


class HttpProvider:
    """OpenAI-compatible JSON client: POST {base_url}/chat/completions and
    {base_url}/embeddings.  Retries 5xx/timeouts with exponential backoff;
    4xx responses are configuration errors and are not retried."""

    def _headers(self, config: ProviderConfig) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise ConfigurationError(
                    f"api key environment variable {config.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, endpoint: str, body: dict, config: ProviderConfig) -> dict:
        url = config.base_url.rstrip("/") + endpoint
        headers = self._headers(config)
        delay = config.retry_base_delay
        last_error = "unknown error"
        for attempt in range(config.max_retries + 1):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=config.timeout)
            except requests.RequestException as exc:
                last_error = f"network error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise ProviderError(f"non-JSON response from {url}: {exc}")
                if 400 <= resp.status_code < 500:
                    raise ConfigurationError(
                        f"HTTP {resp.status_code} from {url}: {resp.text[:500]}"
                    )
                last_error = f"HTTP {resp.status_code}"
            if attempt < config.max_retries:
                logger.warning(
                    "%s from %s, retry %d/%d in %.1fs",
                    last_error, url, attempt + 1, config.max_retries, delay,
                )
                time.sleep(delay)
                delay *= 2
            else:
                break
        raise ProviderError(
            f"{last_error} from {url} after {config.max_retries} retries"
        )

    def chat(self, request: ChatRequest, config: ProviderConfig) -> str:
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        body = {
            "model": config.model_name,
            "messages": messages,
            "temperature": 0,
            "max_tokens": request.max_output_tokens,
        }
        data = self._post("/chat/completions", body, config)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}")

    def embed(self, texts: list[str], config: ProviderConfig) -> list[list[float]]:
        body = {"model": config.model_name, "input": texts}
        data = self._post("/embeddings", body, config)
        try:
            rows = sorted(data["data"], key=lambda d: d["index"])
            return [row["embedding"] for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}")


_CAPITALIZED = re.compile(r"\b[A-Z][a-z]{2,}\b")
_MOCK_NAME_STOPWORDS = frozenset({
    "The", "This", "That", "Then", "There", "They", "She", "His", "Her",
    "When", "While", "During", "After", "Before", "And", "But", "Not",
})
_MOCK_VERBS = (
    "confronts", "travels with", "aids", "betrays",
    "meets", "follows", "warns", "rescues",
)


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


class MockProvider:
    """Deterministic offline provider.

    Chat responses resolve from ``fixtures_dir/<fingerprint>.txt`` when
    present; otherwise a fallback generator inspects the prompt shape and
    produces a plausible, fully deterministic completion (summary,
    extraction records, judgement, or an echo of the first prompt line).
    Embeddings are unit pseudo-random vectors seeded by the text hash.
    """

    def __init__(self, fixtures_dir: str | Path | None = None):
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None

    def _fixture(self, fingerprint: str, suffix: str) -> str | None:
        if self.fixtures_dir is None:
            return None
        path = self.fixtures_dir / f"{fingerprint}{suffix}"
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def chat(self, request: ChatRequest, config: ProviderConfig) -> str:
        prompt_tokens = count_tokens(request.system_prompt + "\n" + request.user_prompt)
        if config.context_tokens is not None and prompt_tokens > config.context_tokens:
            raise ProviderError(
                f"request of {prompt_tokens} tokens exceeds provider context "
                f"of {config.context_tokens}"
            )
        canned = self._fixture(chat_fingerprint(request, config.model_name), ".txt")
        if canned is not None:
            return canned
        user = request.user_prompt
        if "DO NOT USE PRONOUN" in request.system_prompt:
            return self._summary(user)
        if '("entity"|<entity_name>' in user:
            return self._extraction(user)
        if "[Correct] or [Wrong]" in user:
            return self._judgement(user)
        return self._echo(user)

    @staticmethod
    def _summary(user: str) -> str:
        body = user
        if body.startswith("Context: "):
            body = body[len("Context: "):]
        if body.endswith("\nSummary:"):
            body = body[: -len("\nSummary:")]
        words = body.split()
        return " ".join(words[:60])

    @staticmethod
    def _extraction(user: str) -> str:
        marker = "Real Data\nText: "
        start = user.rfind(marker)
        body = user[start + len(marker):] if start >= 0 else user
        if body.endswith("\nOutput:"):
            body = body[: -len("\nOutput:")]
        names: list[str] = []
        for match in _CAPITALIZED.finditer(body):
            if match.group(0) in _MOCK_NAME_STOPWORDS:
                continue
            name = match.group(0).upper()
            if name not in names:
                names.append(name)
            if len(names) >= 6:
                break
        types = ("PERSON", "ORGANIZATION", "ETC")
        records = [
            f'("entity"|{name}|{types[i % len(types)]}|{name} appears in the story)'
            for i, name in enumerate(names[:3])
        ]
        for a, b in zip(names, names[1:]):
            seed = _stable_int(a + "|" + b)
            verb = _MOCK_VERBS[seed % len(_MOCK_VERBS)]
            strength = 1 + seed % 9
            records.append(f'("relationship"|{a}|{b}|{a} {verb} {b}|{strength})')
        if not records:
            return "<End>"
        return "\n& ".join(records) + "\n<End>"

    @staticmethod
    def _judgement(user: str) -> str:
        gold, answer = "", ""
        for line in user.splitlines():
            if line.startswith("- Golden answer: "):
                gold = line[len("- Golden answer: "):]
            elif line.startswith("- User's answer: "):
                answer = line[len("- User's answer: "):]
        gold_tokens = {t.lower() for t in gold.split()} - {"[", "]", '"', ","}
        answer_tokens = {t.lower() for t in answer.split()}
        if gold_tokens and len(gold_tokens & answer_tokens) / len(gold_tokens) >= 0.5:
            return "[Correct]"
        return "[Wrong]"

    @staticmethod
    def _echo(user: str) -> str:
        for line in user.splitlines():
            if line.strip():
                return " ".join(line.split()[:12])
        return ""

    def embed(self, texts: list[str], config: ProviderConfig) -> list[list[float]]:
        vectors = []
        for text in texts:
            canned = self._fixture(
                request_fingerprint(config.model_name, "embed", text), ".json"
            )
            if canned is not None:
                vectors.append(json.loads(canned))
                continue
            rng = np.random.default_rng(_stable_int(text))
            vec = rng.standard_normal(config.embedding_dim)
            vec /= np.linalg.norm(vec)
            vectors.append(vec.tolist())
        return vectors


def provider_for(config: ProviderConfig):
    if config.base_url.startswith("mock"):
        rest = config.base_url[len("mock://"):] if "://" in config.base_url else ""
        return MockProvider(fixtures_dir=rest or None)
    return HttpProvider()


@dataclass
class GatewayStats:
    chat_calls: int = 0
    embed_calls: int = 0
    embed_texts: int = 0
    cache_hits: int = 0

    def to_dict(self) -> dict:
        return {
            "chat_calls": self.chat_calls,
            "embed_calls": self.embed_calls,
            "embed_texts": self.embed_texts,
            "cache_hits": self.cache_hits,
        }


@dataclass
class Gateway:
    """Provider + cache + parallelism bound for one pipeline stage."""

    config: ProviderConfig
    stage: str = "llm"
    cache_dir: str | Path | None = None
    provider: object = None

    def __post_init__(self):
        if self.provider is None:
            self.provider = provider_for(self.config)
        self.cache = ResponseCache(self.cache_dir)
        self.stats = GatewayStats()
        self._stats_lock = threading.Lock()
        self._sem = threading.BoundedSemaphore(max(1, self.config.max_parallel))

    def _count(self, attr: str, n: int = 1) -> None:
        with self._stats_lock:
            setattr(self.stats, attr, getattr(self.stats, attr) + n)

    def _stage_error(self, exc: Exception) -> Exception:
        return type(exc)(f"stage {self.stage!r}: {exc}")

    def chat(self, request: ChatRequest) -> str:
        """Completion text for ``request``; cached, retried, stage-labelled."""
        key = chat_fingerprint(request, self.config.model_name)
        cached = self.cache.get(key)
        if cached is not None:
            self._count("cache_hits")
            return cached
        try:
            with self._sem:
                self._count("chat_calls")
                text = self.provider.chat(request, self.config)
        except (ProviderError, ConfigurationError) as exc:
            raise self._stage_error(exc) from exc
        self.cache.put(key, text)
        return text

    def embed(self, texts: list[str]) -> np.ndarray:
        """One unit-normalized float64 vector per input text, as rows."""
        if not texts:
            raise ConfigurationError(f"stage {self.stage!r}: embed() requires texts")
        keys = [
            request_fingerprint(self.config.model_name, "embed", t) for t in texts
        ]
        found: dict[str, list[float]] = {}
        for text, key in zip(texts, keys):
            if text in found:
                continue
            cached = self.cache.get(key)
            if cached is not None:
                self._count("cache_hits")
                found[text] = cached
        missing = [t for t in dict.fromkeys(texts) if t not in found]
        if missing:
            try:
                with self._sem:
                    self._count("embed_calls")
                    self._count("embed_texts", len(missing))
                    raw = self.provider.embed(missing, self.config)
            except (ProviderError, ConfigurationError) as exc:
                raise self._stage_error(exc) from exc
            if len(raw) != len(missing):
                raise ProviderError(
                    f"stage {self.stage!r}: expected {len(missing)} embeddings, "
                    f"got {len(raw)}"
                )
            for text, vec in zip(missing, raw):
                found[text] = vec
                self.cache.put(
                    request_fingerprint(self.config.model_name, "embed", text), vec
                )
        dims = {len(found[t]) for t in texts}
        if len(dims) != 1:
            raise ProviderError(
                f"stage {self.stage!r}: inconsistent embedding dimensions {sorted(dims)}"
            )
        matrix = np.asarray([found[t] for t in texts], dtype=np.float64)
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms < 1e-12):
            raise ProviderError(f"stage {self.stage!r}: zero-norm embedding returned")
        return matrix / norms[:, None]

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed([text])[0]
