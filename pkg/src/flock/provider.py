"""Chat-completion and embedding clients.

One generic HTTP client speaks the de-facto chat-completions/embeddings
JSON protocol, so any OpenAI-compatible endpoint (cloud or local runtime)
works through the same code path. Model metadata (context window, output
cap, embedding dimension) comes from an editable registry file.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Union

import httpx

from .errors import ProviderError, UnknownModel
from .prompting import estimate_tokens

BACKOFF_BASE_S = 0.25
BACKOFF_FACTOR = 2.0
BACKOFF_CAP_S = 8.0
BACKOFF_JITTER = 0.2

_OVERFLOW_PATTERNS = (
    "context window",
    "context length",
    "maximum context",
    "context_length_exceeded",
    "too many tokens",
)


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    base_url: str = ""
    api_key_env: str = ""
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_text: str
    user_text: str
    params: dict = field(default_factory=dict)
    json_mode: bool = False

    def __post_init__(self):
        if not (self.system_text + self.user_text):
            raise ValueError("empty chat request")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ModelMetadata:
    context_window_tokens: int
    max_output_tokens: int
    embedding_dimension: Optional[int] = None


class ProviderRegistry:
    """Model metadata and provider endpoint configuration.

    Backed by a JSON file (``providers.json``); the shipped copy covers the
    common OpenAI models plus the offline mock models, and users can point
    at their own file.
    """

    def __init__(self, data: dict):
        self._providers = {
            pid: ProviderConfig(provider_id=pid, **cfg)
            for pid, cfg in data.get("providers", {}).items()
        }
        self._models = {
            mid: ModelMetadata(**meta) for mid, meta in data.get("models", {}).items()
        }

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "ProviderRegistry":
        if path is None:
            text = resources.files("flock").joinpath("providers.json").read_text()
        else:
            text = Path(path).read_text()
        return cls(json.loads(text))

    @property
    def provider_ids(self) -> frozenset:
        return frozenset(self._providers)

    def provider_config(self, provider_id: str) -> ProviderConfig:
        if provider_id not in self._providers:
            raise UnknownModel(f"unknown provider '{provider_id}'")
        return self._providers[provider_id]

    def model_metadata(self, model_id: str) -> ModelMetadata:
        if model_id not in self._models:
            raise UnknownModel(f"model '{model_id}' not in provider registry")
        return self._models[model_id]

    def has_model(self, model_id: str) -> bool:
        return model_id in self._models


def with_retry(
    fn: Callable[[], object],
    max_retries: int,
    sleeper: Callable[[float], None] = time.sleep,
    rng: random.Random = random,
):
    """Run ``fn``, retrying RateLimited/Transient failures with exponential
    backoff. ContextOverflow and Fatal are returned to the caller immediately
    (overflow drives batch shrinking, not retrying)."""
    attempt = 0
    while True:
        try:
            return fn()
        except ProviderError as e:
            if not e.retryable or attempt >= max_retries:
                raise
            delay = min(BACKOFF_BASE_S * BACKOFF_FACTOR**attempt, BACKOFF_CAP_S)
            sleeper(delay * rng.uniform(1 - BACKOFF_JITTER, 1 + BACKOFF_JITTER))
            attempt += 1


def classify_http_error(status_code: int, message: str) -> ProviderError:
    lowered = message.lower()
    if any(p in lowered for p in _OVERFLOW_PATTERNS):
        return ProviderError(ProviderError.CONTEXT_OVERFLOW, message)
    if status_code == 429:
        return ProviderError(ProviderError.RATE_LIMITED, message)
    if status_code >= 500:
        return ProviderError(ProviderError.TRANSIENT, message)
    return ProviderError(ProviderError.FATAL, f"HTTP {status_code}: {message}")


class HttpProvider:
    """OpenAI-compatible HTTP client. Immutable after construction; safe for
    concurrent use."""

    def __init__(
        self,
        config: ProviderConfig,
        api_key: Optional[str] = None,
        client: Optional[httpx.Client] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        import os

        self.config = config
        self._api_key = api_key or (
            os.environ.get(config.api_key_env) if config.api_key_env else None
        )
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleeper = sleeper

    def _post(self, path: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = self._client.post(
                self.config.base_url.rstrip("/") + path, json=payload, headers=headers
            )
        except httpx.HTTPError as e:
            raise ProviderError(ProviderError.TRANSIENT, str(e))
        if resp.status_code >= 400:
            raise classify_http_error(resp.status_code, resp.text)
        return resp.json()

    def chat_complete(self, req: ChatRequest) -> ChatResponse:
        payload = {
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            **req.params,
        }
        if req.json_mode:
            payload["response_format"] = {"type": "json_object"}

        def attempt() -> ChatResponse:
            body = self._post("/chat/completions", payload)
            usage = body.get("usage", {})
            return ChatResponse(
                text=body["choices"][0]["message"]["content"],
                prompt_tokens=usage.get("prompt_tokens", 0),
                completion_tokens=usage.get("completion_tokens", 0),
            )

        return with_retry(attempt, self.config.max_retries, self._sleeper)

    def embed(self, model_id: str, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")

        def attempt() -> list[list[float]]:
            body = self._post("/embeddings", {"model": model_id, "input": texts})
            data = sorted(body["data"], key=lambda d: d["index"])
            return [d["embedding"] for d in data]

        return with_retry(attempt, self.config.max_retries, self._sleeper)


def estimate_request_tokens(req: ChatRequest) -> int:
    return estimate_tokens(req.system_text) + estimate_tokens(req.user_text)
