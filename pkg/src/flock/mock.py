"""Deterministic scriptable provider for offline runs and tests.

The mock understands the meta-prompt envelope: it parses the serialized
tuple batch out of the request, inspects the output contract named in the
static prefix, and answers with a well-formed envelope. Behavior is
customizable per function family (``filter_fn``, ``complete_fn``, ...),
errors and canned responses can be scripted as an ordered queue, and a
simple latency model (fixed cost per request plus a per-tuple increment)
makes batching speedups measurable without a network.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import threading
import time
from typing import Callable, Optional, Union

from .errors import ProviderError
from .provider import ChatRequest, ChatResponse, ProviderRegistry, estimate_request_tokens
from .prompting import estimate_tokens

_XML_TUPLE = re.compile(r'<tuple id="(\d+)">(.*?)</tuple>', re.DOTALL)
_XML_CELL = re.compile(r"<(\w+)>(.*?)</\1>", re.DOTALL)
_UNESCAPES = {"&lt;": "<", "&gt;": ">", "&amp;": "&"}


def _xml_unescape(s: str) -> str:
    for k, v in _UNESCAPES.items():
        s = s.replace(k, v)
    return s


def parse_serialized_tuples(text: str) -> list[tuple[int, dict]]:
    """Recover (tuple id, row) pairs from any of the three serializations."""
    stripped = text.strip()
    # JSON array of objects with "_id"
    if stripped.startswith("["):
        try:
            data = json.loads(stripped)
            if isinstance(data, list) and all(isinstance(d, dict) and "_id" in d for d in data):
                return [
                    (d["_id"], {k: v for k, v in d.items() if k != "_id"}) for d in data
                ]
        except json.JSONDecodeError:
            pass
    # XML tuples
    matches = _XML_TUPLE.findall(text)
    if matches:
        out = []
        for tid, body in matches:
            row = {k: _xml_unescape(v) for k, v in _XML_CELL.findall(body)}
            out.append((int(tid), row))
        return out
    # Markdown pipe table
    lines = [ln for ln in text.splitlines() if ln.strip().startswith("|")]
    if len(lines) >= 3:
        header = [c.strip() for c in _split_md_row(lines[0])]
        out = []
        for ln in lines[2:]:
            cells = [c.strip() for c in _split_md_row(ln)]
            if len(cells) != len(header):
                continue
            row = dict(zip(header, cells))
            tid = row.pop("id", None)
            if tid is not None and tid.isdigit():
                out.append((int(tid), row))
        return out
    return []


def _split_md_row(line: str) -> list[str]:
    sentinel = "\x00"
    inner = line.strip().strip("|").replace("\\|", sentinel)
    return [c.replace(sentinel, "|") for c in inner.split("|")]


def deterministic_vector(model_id: str, text: str, dim: int) -> list[float]:
    """Hash-derived embedding: stable across processes, distinct per text."""
    values: list[float] = []
    counter = 0
    while len(values) < dim:
        digest = hashlib.sha256(f"{model_id}\0{text}\0{counter}".encode()).digest()
        for i in range(0, len(digest) - 7, 8):
            (u,) = struct.unpack_from("<Q", digest, i)
            values.append(u / 2**63 - 1.0)  # in [-1, 1)
            if len(values) == dim:
                break
        counter += 1
    return values


def _default_complete(row: dict) -> str:
    return "mock:" + json.dumps(row, sort_keys=True, ensure_ascii=False)


ScriptItem = Union[ProviderError, str, Callable[[ChatRequest], str]]


class MockProvider:
    """Offline stand-in for a chat/embedding provider.

    Deterministic: the same request sequence always yields the same
    responses. ``scripted`` entries are consumed one per chat attempt before
    the default handler runs; a ProviderError entry is raised, a string is
    returned verbatim, a callable is invoked with the request.
    """

    provider_id = "mock"

    def __init__(
        self,
        registry: Optional[ProviderRegistry] = None,
        max_retries: int = 3,
        embedding_dim: int = 8,
        latency_fixed: float = 0.0,
        latency_per_tuple: float = 0.0,
        overflow_batch_limit: Optional[int] = None,
        overflow_token_limit: Optional[int] = None,
        scripted: Optional[list[ScriptItem]] = None,
        complete_fn: Optional[Callable[[dict], str]] = None,
        json_fn: Optional[Callable[[dict], object]] = None,
        filter_fn: Optional[Callable[[dict], bool]] = None,
        reduce_fn: Optional[Callable[[list[dict]], object]] = None,
        rank_fn: Optional[Callable[[list[dict]], list[int]]] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.registry = registry
        self.max_retries = max_retries
        self.embedding_dim = embedding_dim
        self.latency_fixed = latency_fixed
        self.latency_per_tuple = latency_per_tuple
        self.overflow_batch_limit = overflow_batch_limit
        self.overflow_token_limit = overflow_token_limit
        self.scripted = list(scripted or [])
        self.complete_fn = complete_fn or _default_complete
        self.json_fn = json_fn or (lambda row: {"echo": row})
        self.filter_fn = filter_fn or (lambda row: True)
        self.reduce_fn = reduce_fn
        self.rank_fn = rank_fn
        self._sleeper = sleeper
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []
        self.embed_requests: list[tuple[str, list[str]]] = []

    # -- stats ---------------------------------------------------------

    @property
    def chat_call_count(self) -> int:
        return len(self.calls)

    @property
    def embed_call_count(self) -> int:
        return len(self.embed_requests)

    def reset_counts(self) -> None:
        with self._lock:
            self.calls.clear()
            self.embed_requests.clear()

    # -- chat ----------------------------------------------------------

    def chat_complete(self, req: ChatRequest) -> ChatResponse:
        from .provider import with_retry

        return with_retry(lambda: self._chat_once(req), self.max_retries, self._sleeper)

    def _chat_once(self, req: ChatRequest) -> ChatResponse:
        tuples = parse_serialized_tuples(req.user_text)
        self._sleeper(self.latency_fixed + self.latency_per_tuple * max(len(tuples), 1))
        with self._lock:
            self.calls.append(req)
            item = self.scripted.pop(0) if self.scripted else None
        if item is not None:
            if isinstance(item, ProviderError):
                raise item
            text = item(req) if callable(item) else item
            return self._response(req, text)
        if self.overflow_batch_limit is not None and len(tuples) > self.overflow_batch_limit:
            raise ProviderError(
                ProviderError.CONTEXT_OVERFLOW,
                f"batch of {len(tuples)} tuples exceeds mock context window",
            )
        if (
            self.overflow_token_limit is not None
            and estimate_request_tokens(req) > self.overflow_token_limit
        ):
            raise ProviderError(
                ProviderError.CONTEXT_OVERFLOW,
                "estimated tokens exceed mock context window",
            )
        return self._response(req, self._default_answer(req, tuples))

    def _default_answer(self, req: ChatRequest, tuples: list[tuple[int, dict]]) -> str:
        sys = req.system_text
        if "SQL only" in sys:
            # NL-to-SQL request: answer with a trivial query over the first table
            m = re.search(r"CREATE TABLE (\w+)", req.user_text)
            table = m.group(1) if m else "t"
            return f"SELECT * FROM {table} LIMIT 5"
        if '{"ranking"' in sys:
            rows = [row for _, row in tuples]
            order = self.rank_fn(rows) if self.rank_fn else list(range(len(rows)))
            ids = [tuples[i][0] for i in order]
            return json.dumps({"ranking": ids})
        if '{"answer"' in sys:
            rows = [row for _, row in tuples]
            if self.reduce_fn:
                value = self.reduce_fn(rows)
            elif "valid JSON" in sys:
                value = {"tuple_count": len(rows)}
            else:
                value = f"mock reduction of {len(rows)} tuples"
            return json.dumps({"answer": value})
        answers = []
        bool_contract = "true|false" in sys
        json_contract = "valid JSON" in sys
        for tid, row in tuples:
            if bool_contract:
                value: object = bool(self.filter_fn(row))
            elif json_contract:
                value = self.json_fn(row)
            else:
                value = self.complete_fn(row)
            answers.append({"id": tid, "value": value})
        return json.dumps({"answers": answers})

    @staticmethod
    def _response(req: ChatRequest, text: str) -> ChatResponse:
        return ChatResponse(
            text=text,
            prompt_tokens=estimate_request_tokens(req),
            completion_tokens=estimate_tokens(text),
        )

    # -- embeddings ------------------------------------------------------

    def embed(self, model_id: str, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        self._sleeper(self.latency_fixed + self.latency_per_tuple * len(texts))
        with self._lock:
            self.embed_requests.append((model_id, list(texts)))
        dim = self.embedding_dim
        if self.registry is not None and self.registry.has_model(model_id):
            meta = self.registry.model_metadata(model_id)
            if meta.embedding_dimension:
                dim = meta.embedding_dimension
        return [deterministic_vector(model_id, t, dim) for t in texts]
