"""Language-model and text-embedding clients.

Two families, each with an offline implementation used by default and an
HTTP implementation for OpenAI-compatible servers:

* language models: :class:`MockLanguageModelClient`, :class:`ChatCompletionsClient`
* text embedders: :class:`HashingTextEmbedder`, :class:`EndpointEmbedder`
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ..exceptions import (
    DimensionError,
    EmptyResponseError,
    EndpointStatusError,
    InputError,
    TransportError,
)

API_KEY_ENV = "URBANCAST_API_KEY"
LLM_URL_ENV = "URBANCAST_LLM_URL"


class PrototypeSource(str, Enum):
    LANGUAGE_MODEL = "language_model"
    CANNED_MOCK = "canned_mock"


@dataclass(frozen=True)
class PrototypeQuery:
    text: str
    source: PrototypeSource

    def __post_init__(self):
        if not self.text:
            raise InputError("prototype text must be non-empty")


class LanguageModelClient(Protocol):
    source: PrototypeSource

    def complete(self, prompt: str) -> str: ...


class TextEmbedder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def infer_prototype(client: LanguageModelClient, prompt: str) -> PrototypeQuery:
    if not prompt:
        raise InputError("empty prompt")
    text = client.complete(prompt)
    text = (text or "").strip()
    if not text:
        raise EmptyResponseError("language model returned an empty response")
    return PrototypeQuery(text, getattr(client, "source", PrototypeSource.LANGUAGE_MODEL))


# -- language models ---------------------------------------------------------

_TASK_SLOT = re.compile(r"^To predict (.*?) for a given target region described as follows:", re.S)


class MockLanguageModelClient:
    """Canned responses keyed by task text (or task name).

    The key is recovered from the prompt's task slot; if that fails, the first
    key that occurs anywhere in the prompt is used. Stateless, so one instance
    may be shared across threads.
    """

    source = PrototypeSource.CANNED_MOCK

    def __init__(self, responses: dict[str, str], default: str | None = None):
        self.responses = dict(responses)
        self.default = default

    def complete(self, prompt: str) -> str:
        m = _TASK_SLOT.match(prompt)
        if m and m.group(1) in self.responses:
            return self.responses[m.group(1)]
        for key, text in self.responses.items():
            if key in prompt:
                return text
        if self.default is not None:
            return self.default
        raise EmptyResponseError("mock language model has no canned response for this prompt")


def _post_json(url: str, body: dict, api_key: str | None, timeout: float) -> dict:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="POST")
    req.add_header("Content-Type", "application/json")
    if api_key:
        req.add_header("Authorization", f"Bearer {api_key}")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        body_text = exc.read().decode("utf-8", "replace") if exc.fp else ""
        raise EndpointStatusError(exc.code, body_text) from exc
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(f"cannot reach {url}: {exc}") from exc
    try:
        return json.loads(raw)
    except ValueError as exc:
        raise TransportError(f"{url} returned malformed JSON") from exc


class ChatCompletionsClient:
    """Client for ``POST {base_url}/v1/chat/completions`` (temperature 0)."""

    source = PrototypeSource.LANGUAGE_MODEL

    def __init__(self, base_url: str, model: str = "default", api_key: str | None = None,
                 timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        reply = _post_json(f"{self.base_url}/v1/chat/completions", body, self.api_key, self.timeout)
        try:
            content = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EmptyResponseError("chat completion response has no message content") from None
        if not content or not str(content).strip():
            raise EmptyResponseError("chat completion returned empty content")
        return str(content)


class CachedLanguageModelClient:
    """Wraps a client with an append-only JSONL cache keyed by prompt SHA-256."""

    def __init__(self, client: LanguageModelClient, path):
        self.client = client
        self.source = getattr(client, "source", PrototypeSource.LANGUAGE_MODEL)
        self.path = Path(path)
        self._lock = threading.Lock()
        self._cache: dict[str, str] = {}
        if self.path.is_file():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self._cache[row["prompt_sha256"]] = row["response_text"]

    @staticmethod
    def key(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def complete(self, prompt: str) -> str:
        key = self.key(prompt)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        text = self.client.complete(prompt)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = text
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    row = {"prompt_sha256": key, "response_text": text}
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return text


# -- text embedders ----------------------------------------------------------

_TOKEN = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise InputError("cannot normalize a zero or non-finite embedding")
    return m / norms[:, None]


class HashingTextEmbedder:
    """Bag-of-words embedder: each token is hashed into one of ``dim`` buckets.

    Uses BLAKE2b rather than ``hash()`` so vectors are stable across processes.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise InputError("embedding dimension must be positive")
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = tokenize(text)
            if not tokens:
                raise InputError(f"text {text!r} has no alphanumeric tokens")
            for tok in tokens:
                out[i, self.bucket(tok)] += 1.0
        return _unit_rows(out)


class EndpointEmbedder:
    """Client for ``POST {base_url}/v1/embeddings``; rows are L2-normalized on receipt."""

    def __init__(self, base_url: str, model: str = "default", dim: int | None = None,
                 api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        body = {"model": self.model, "input": list(texts)}
        reply = _post_json(f"{self.base_url}/v1/embeddings", body, self.api_key, self.timeout)
        try:
            data = sorted(reply["data"], key=lambda d: d.get("index", 0))
            m = np.array([d["embedding"] for d in data], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise EmptyResponseError("embedding response is malformed") from None
        if m.ndim != 2 or len(m) != len(texts):
            raise EmptyResponseError("embedding response has the wrong number of vectors")
        if self.dim is None:
            self.dim = m.shape[1]
        elif m.shape[1] != self.dim:
            raise DimensionError(f"expected {self.dim}-d embeddings, got {m.shape[1]}")
        return _unit_rows(m)


def embed_text(embedder: TextEmbedder, text: str) -> np.ndarray:
    if not text:
        raise InputError("empty text")
    return embedder.embed([text])[0]


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"vector shapes differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InputError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def clients_from_env(mock_responses: dict[str, str] | None = None,
                     embed_dim: int = 256) -> tuple[LanguageModelClient, TextEmbedder]:
    """Pick HTTP clients when ``URBANCAST_LLM_URL`` is set, offline mocks otherwise."""
    url = os.environ.get(LLM_URL_ENV)
    if url:
        return ChatCompletionsClient(url), HashingTextEmbedder(embed_dim)
    return MockLanguageModelClient(mock_responses or {}), HashingTextEmbedder(embed_dim)
