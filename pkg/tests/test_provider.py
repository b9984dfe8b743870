"""HTTP provider protocol, error classification, retry policy, and the
deterministic mock provider."""

import json
import random

import httpx
import pytest

from flock.errors import ProviderError
from flock.mock import MockProvider, deterministic_vector, parse_serialized_tuples
from flock.prompting import SerializationFormat, serialize_tuples
from flock.provider import (
    ChatRequest, ChatResponse, HttpProvider, ProviderConfig, ProviderRegistry,
    classify_http_error, estimate_request_tokens, with_retry,
)

CONFIG = ProviderConfig(provider_id="openai", base_url="https://api.test/v1",
                        api_key_env="", max_retries=2)


def make_provider(handler):
    transport = httpx.MockTransport(handler)
    client = httpx.Client(transport=transport)
    return HttpProvider(CONFIG, api_key="sk-test", client=client, sleeper=lambda s: None)


def chat_body(text):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    }


def test_chat_complete_request_and_response_shape():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["payload"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=chat_body("hello"))

    provider = make_provider(handler)
    resp = provider.chat_complete(ChatRequest(
        model_id="gpt-4o-mini", system_text="sys", user_text="usr",
        params={"temperature": 0}, json_mode=True,
    ))
    assert resp == ChatResponse(text="hello", prompt_tokens=12, completion_tokens=3)
    assert seen["url"].endswith("/v1/chat/completions")
    assert seen["auth"] == "Bearer sk-test"
    payload = seen["payload"]
    assert payload["model"] == "gpt-4o-mini"
    assert payload["messages"][0] == {"role": "system", "content": "sys"}
    assert payload["messages"][1] == {"role": "user", "content": "usr"}
    assert payload["temperature"] == 0
    assert payload["response_format"] == {"type": "json_object"}


def test_embed_sorts_by_index():
    def handler(request):
        return httpx.Response(200, json={"data": [
            {"index": 1, "embedding": [2.0]},
            {"index": 0, "embedding": [1.0]},
        ]})

    provider = make_provider(handler)
    assert provider.embed("e", ["a", "b"]) == [[1.0], [2.0]]
    with pytest.raises(ValueError):
        provider.embed("e", [])


def test_transient_errors_retried_then_succeed():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(500, text="server exploded")
        return httpx.Response(200, json=chat_body("ok"))

    provider = make_provider(handler)
    resp = provider.chat_complete(ChatRequest("m", "s", "u"))
    assert resp.text == "ok"
    assert calls["n"] == 3


def test_fatal_errors_not_retried():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401, text="bad key")

    provider = make_provider(handler)
    with pytest.raises(ProviderError) as exc:
        provider.chat_complete(ChatRequest("m", "s", "u"))
    assert exc.value.kind == ProviderError.FATAL
    assert calls["n"] == 1


def test_context_overflow_not_retried():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(400, text="this model's maximum context length is 8192")

    provider = make_provider(handler)
    with pytest.raises(ProviderError) as exc:
        provider.chat_complete(ChatRequest("m", "s", "u"))
    assert exc.value.kind == ProviderError.CONTEXT_OVERFLOW
    assert calls["n"] == 1


def test_classification_table():
    assert classify_http_error(429, "slow down").kind == ProviderError.RATE_LIMITED
    assert classify_http_error(503, "unavailable").kind == ProviderError.TRANSIENT
    assert classify_http_error(404, "nope").kind == ProviderError.FATAL
    assert (
        classify_http_error(400, "Context window exceeded").kind
        == ProviderError.CONTEXT_OVERFLOW
    )


def test_retry_backoff_schedule():
    delays = []
    attempts = {"n": 0}

    def fn():
        attempts["n"] += 1
        raise ProviderError(ProviderError.RATE_LIMITED, "429")

    with pytest.raises(ProviderError):
        with_retry(fn, max_retries=5, sleeper=delays.append, rng=random.Random(0))
    assert attempts["n"] == 6
    # exponential from 250ms, doubling, jitter within ±20%
    for i, d in enumerate(delays):
        nominal = min(0.25 * 2**i, 8.0)
        assert nominal * 0.8 <= d <= nominal * 1.2


def test_retry_cap_at_eight_seconds():
    delays = []

    def fn():
        raise ProviderError(ProviderError.TRANSIENT, "boom")

    with pytest.raises(ProviderError):
        with_retry(fn, max_retries=8, sleeper=delays.append, rng=random.Random(1))
    assert max(delays) <= 8.0 * 1.2


def test_registry_metadata(registry):
    meta = registry.model_metadata("text-embedding-3-small")
    assert meta.embedding_dimension == 1536
    assert registry.has_model("gpt-4o")
    assert not registry.has_model("nonexistent-model")
    assert {"openai", "mock"} <= set(registry.provider_ids)


def test_estimate_request_tokens():
    req = ChatRequest("m", "a" * 8, "b" * 9)
    assert estimate_request_tokens(req) == 2 + 3


# --- mock provider -----------------------------------------------------------------

def test_parse_serialized_tuples_round_trips_all_formats():
    rows = [{"a": "x<y|z", "b": "2"}, {"a": "m&n", "b": "3"}]
    for fmt in SerializationFormat:
        text = serialize_tuples(rows, fmt)
        parsed = parse_serialized_tuples(text)
        assert [i for i, _ in parsed] == [0, 1]
        assert [r["a"] for _, r in parsed] == ["x<y|z", "m&n"]


def test_deterministic_vector_stable_and_distinct():
    a1 = deterministic_vector("m", "hello", 8)
    a2 = deterministic_vector("m", "hello", 8)
    b = deterministic_vector("m", "world", 8)
    assert a1 == a2
    assert a1 != b
    assert len(a1) == 8
    assert all(-1.0 <= v < 1.0 for v in a1)


def test_mock_scripted_queue(registry):
    mock = MockProvider(
        registry,
        scripted=[
            '{"answers": [{"id": 0, "value": "first"}]}',
            ProviderError(ProviderError.FATAL, "boom"),
        ],
        sleeper=lambda s: None,
    )
    req = ChatRequest("mock-chat", "sys", '<tuple id="0"><a>x</a></tuple>')
    assert mock.chat_complete(req).text == '{"answers": [{"id": 0, "value": "first"}]}'
    with pytest.raises(ProviderError):
        mock.chat_complete(req)
    assert mock.chat_call_count == 2


def test_mock_retries_transient_scripted_errors(registry):
    mock = MockProvider(
        registry,
        scripted=[ProviderError(ProviderError.TRANSIENT, "hiccup")],
        sleeper=lambda s: None,
    )
    req = ChatRequest("mock-chat", "sys", '<tuple id="0"><a>x</a></tuple>')
    resp = mock.chat_complete(req)  # retry consumes the default path
    assert json.loads(resp.text)["answers"][0]["id"] == 0
    assert mock.chat_call_count == 2


def test_mock_overflow_batch_limit(registry):
    mock = MockProvider(registry, overflow_batch_limit=2, sleeper=lambda s: None)
    rows = [{"a": str(i)} for i in range(3)]
    req = ChatRequest("mock-chat", "s", serialize_tuples(rows, SerializationFormat.XML))
    with pytest.raises(ProviderError) as exc:
        mock.chat_complete(req)
    assert exc.value.kind == ProviderError.CONTEXT_OVERFLOW


def test_mock_latency_model(registry):
    slept = []
    mock = MockProvider(
        registry, latency_fixed=0.05, latency_per_tuple=0.001, sleeper=slept.append
    )
    rows = [{"a": str(i)} for i in range(10)]
    mock.chat_complete(ChatRequest("mock-chat", "s", serialize_tuples(rows, SerializationFormat.XML)))
    assert slept == [pytest.approx(0.05 + 0.010)]


def test_mock_embeddings_use_registry_dimension(registry):
    mock = MockProvider(registry, sleeper=lambda s: None)
    vectors = mock.embed("text-embedding-3-small", ["a"])
    assert len(vectors[0]) == 1536
    assert len(mock.embed("mock-embed", ["a"])[0]) == 8
