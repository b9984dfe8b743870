"""Cost-aware inference runtime.

Turns a column of input tuples into LLM outputs: deduplicate, probe the
persistent prediction cache, pack the misses into context-window-sized
batches, dispatch with bounded parallelism, shrink a failing batch by 10%
on context overflow, and fan results back out to the original rows.

Cache identity is per distinct tuple — batch partitioning never affects
which key a prediction lands under, so warming the cache with one batch
size serves every other batch size.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .catalog import ModelResource
from .errors import ProviderError
from .prompting import (
    ContractKind,
    OutputContract,
    RenderedPrompt,
    SerializationFormat,
    build_meta_prompt,
    build_static_prefix,
    estimate_tokens,
    serialize_tuples,
)
from .provider import ChatRequest, ChatResponse

MAX_PARALLEL_BATCHES = 4
EMBED_MAX_BATCH = 512


@dataclass(frozen=True)
class BatchMode:
    """Auto (context-window-aware greedy fill) or Manual(n) fixed size."""

    manual: Optional[int] = None

    def __post_init__(self):
        if self.manual is not None and self.manual < 1:
            raise ValueError("manual batch size must be >= 1")

    @property
    def label(self) -> str:
        return "Auto" if self.manual is None else f"Manual({self.manual})"

    @classmethod
    def parse(cls, text: str) -> "BatchMode":
        t = text.strip()
        if t.lower() == "auto":
            return cls()
        if t.lower().startswith("manual(") and t.endswith(")"):
            return cls(manual=int(t[7:-1]))
        return cls(manual=int(t))


AUTO = BatchMode()


def _identity_parser(value):
    return value, True


@dataclass
class InferenceJob:
    kind: str
    model: ModelResource
    prompt_text: str
    rows: list[dict]
    contract: OutputContract
    format: SerializationFormat = SerializationFormat.XML
    batch_mode: BatchMode = AUTO
    template: Optional[str] = None
    # value_parser(raw) -> (parsed, ok); ok=False asks for one batch retry
    value_parser: Callable = _identity_parser


@dataclass
class BatchPlan:
    batches: list[list[int]]
    budget_tokens: int


@dataclass
class InferenceStats:
    provider_calls: int = 0
    tuples_sent: int = 0
    cache_hits: int = 0
    effective_batch_sizes: list[int] = field(default_factory=list)
    backoff_attempt_sizes: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "provider_calls": self.provider_calls,
            "tuples_sent": self.tuples_sent,
            "cache_hits": self.cache_hits,
            "effective_batch_sizes": self.effective_batch_sizes,
            "backoff_attempt_sizes": self.backoff_attempt_sizes,
            "warnings": self.warnings,
            "wall_time": self.wall_time,
        }


@dataclass
class BatchTrace:
    """Per-batch accounting, merged into InferenceStats in plan order so the
    reported sequences stay deterministic under parallel dispatch."""

    calls: int = 0
    attempt_sizes: list[int] = field(default_factory=list)
    effective_sizes: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def merge_into(self, stats: InferenceStats) -> None:
        stats.provider_calls += self.calls
        stats.backoff_attempt_sizes.extend(self.attempt_sizes)
        stats.effective_batch_sizes.extend(self.effective_sizes)
        stats.warnings.extend(self.warnings)


def canonical_tuple(row: dict) -> str:
    return json.dumps(row, sort_keys=True, ensure_ascii=False, default=str)


def dedup(rows: list[dict]) -> tuple[list[dict], list[int]]:
    """Distinct rows by canonical serialization plus a total back map."""
    seen: dict[str, int] = {}
    distinct: list[dict] = []
    back_map: list[int] = []
    for row in rows:
        key = canonical_tuple(row)
        idx = seen.get(key)
        if idx is None:
            idx = len(distinct)
            seen[key] = idx
            distinct.append(row)
        back_map.append(idx)
    return distinct, back_map


def cache_key(
    provider_id: str,
    model_id: str,
    params: dict,
    kind: str,
    prompt_text: str,
    format: SerializationFormat,
    contract: OutputContract,
    payload: str,
) -> str:
    material = json.dumps(
        {
            "provider": provider_id,
            "model": model_id,
            "params": params,
            "kind": kind,
            "prompt": prompt_text,
            "format": format.value,
            "contract": contract.kind.value,
            "schema_hint": contract.schema_hint,
            "payload": payload,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode()).hexdigest()


class PredictionCache:
    """Append-only on-disk key-value store with an in-memory index.

    One JSON line per entry under ``<dir>/predictions.jsonl``; later entries
    win on key collision. Reads are lock-free on the in-memory dict, writes
    are serialized.
    """

    def __init__(self, directory: Optional[str | Path] = None):
        if directory is None:
            directory = os.environ.get("FLOCK_CACHE_DIR", os.path.join(".flock", "cache"))
        self.directory = Path(directory)
        self.path = self.directory / "predictions.jsonl"
        self._lock = threading.Lock()
        self._index: dict[str, object] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entry = json.loads(line)
                        self._index[entry["key"]] = entry["value"]

    def get(self, key: str, default=None):
        return self._index.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def put(self, key: str, value) -> None:
        with self._lock:
            self._index[key] = value
            self.directory.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps({"key": key, "value": value}, ensure_ascii=False) + "\n")

    def clear(self) -> int:
        with self._lock:
            count = len(self._index)
            self._index.clear()
            if self.path.exists():
                self.path.unlink()
            return count

    def __len__(self) -> int:
        return len(self._index)


_MISS = object()


class InferenceRuntime:
    """Executes inference jobs against a provider map, through the cache."""

    def __init__(
        self,
        providers: dict[str, object],
        cache: Optional[PredictionCache] = None,
        max_parallel: int = MAX_PARALLEL_BATCHES,
    ):
        self.providers = providers
        self.cache = cache if cache is not None else PredictionCache()
        self.max_parallel = max_parallel

    def _provider(self, model: ModelResource):
        if model.provider_id not in self.providers:
            raise ProviderError(
                ProviderError.FATAL, f"no client configured for provider '{model.provider_id}'"
            )
        return self.providers[model.provider_id]

    # -- batch planning --------------------------------------------------

    def _static_prefix(self, job: InferenceJob) -> str:
        schema = list(job.rows[0].keys()) if job.rows else []
        if job.template is not None:
            rendered = build_meta_prompt(
                job.kind, job.prompt_text, [], job.format, job.contract, template=job.template
            )
            return rendered.static_prefix
        return build_static_prefix(job.kind, job.prompt_text, schema, job.format, job.contract)

    def budget_tokens(self, job: InferenceJob) -> int:
        window = job.model.context_window_tokens
        reserve = min(job.model.max_output_tokens, window // 4)
        prefix = self._static_prefix(job)
        return max(1, window - estimate_tokens(prefix) - reserve)

    def plan_batches(self, job: InferenceJob, distinct_rows: list[dict]) -> BatchPlan:
        budget = self.budget_tokens(job)
        if job.batch_mode.manual is not None:
            n = job.batch_mode.manual
            batches = [
                list(range(i, min(i + n, len(distinct_rows))))
                for i in range(0, len(distinct_rows), n)
            ]
            return BatchPlan(batches=batches, budget_tokens=budget)
        batches: list[list[int]] = []
        current: list[int] = []
        used = 0
        for i, row in enumerate(distinct_rows):
            cost = estimate_tokens(serialize_tuples([row], job.format)) + 1
            if current and used + cost > budget:
                batches.append(current)
                current, used = [], 0
            current.append(i)
            used += cost
        if current:
            batches.append(current)
        return BatchPlan(batches=batches, budget_tokens=budget)

    # -- dispatch ----------------------------------------------------------

    def _dispatch_chat(self, job: InferenceJob, rows: list[dict]) -> ChatResponse:
        rendered = build_meta_prompt(
            job.kind, job.prompt_text, rows, job.format, job.contract, template=job.template
        )
        req = ChatRequest(
            model_id=job.model.model_id,
            system_text=rendered.static_prefix,
            user_text=rendered.dynamic_suffix,
            params=dict(job.model.params),
            json_mode=True,
        )
        return self._provider(job.model).chat_complete(req)

    def chat_group(self, job: InferenceJob, rows: list[dict]) -> ChatResponse:
        """One raw chat call over a tuple group (aggregate functions)."""
        return self._dispatch_chat(job, rows)

    @staticmethod
    def _parse_envelope(text: str, n: int) -> Optional[list]:
        """Extract per-id values from {"answers": [...]}; None on bad shape."""
        try:
            data = json.loads(text)
            answers = data["answers"]
            values = [_MISS] * n
            for entry in answers:
                i = entry["id"]
                if isinstance(i, int) and 0 <= i < n:
                    values[i] = entry.get("value")
            return values
        except (json.JSONDecodeError, KeyError, TypeError):
            return None

    def run_batch_with_backoff(
        self, job: InferenceJob, batch_rows: list[dict]
    ) -> tuple[list, "BatchTrace"]:
        """Per-row outputs for one planned batch.

        On context overflow the attempted chunk shrinks to max(1, floor(0.9n))
        and is retried; an overflowing singleton yields NULL for that row.
        A malformed answer envelope (or a value the parser rejects) gets one
        re-dispatch, after which unresolved rows become NULL with a warning.
        """
        trace = BatchTrace()
        outputs: list = [None] * len(batch_rows)
        pos = 0
        size = len(batch_rows)
        while pos < len(batch_rows):
            size = min(size, len(batch_rows) - pos)
            chunk = batch_rows[pos : pos + size]
            values = self._attempt_chunk(job, chunk, trace)
            if values is None:  # context overflow
                if size == 1:
                    trace.warnings.append("singleton tuple exceeds context window; NULL")
                    outputs[pos] = None
                    pos += 1
                else:
                    size = max(1, int(0.9 * size))
                continue
            for i, v in enumerate(values):
                outputs[pos + i] = v
            trace.effective_sizes.append(len(chunk))
            pos += len(chunk)
        return outputs, trace

    def _attempt_chunk(
        self, job: InferenceJob, chunk: list[dict], trace: "BatchTrace"
    ) -> Optional[list]:
        """One chunk through the provider. None signals context overflow."""

        def call() -> Optional[list]:
            trace.calls += 1
            trace.attempt_sizes.append(len(chunk))
            resp = self._dispatch_chat(job, chunk)
            raw = self._parse_envelope(resp.text, len(chunk))
            if raw is None:
                return None
            values = []
            for v in raw:
                if v is _MISS:
                    values.append((None, True, True))  # missing id: NULL, no retry need
                    continue
                parsed, ok = job.value_parser(v)
                values.append((parsed, ok, False))
            return values

        result = None
        for attempt in range(2):
            try:
                result = call()
            except ProviderError as e:
                if e.kind == ProviderError.CONTEXT_OVERFLOW:
                    return None
                raise
            if result is not None and all(ok for _, ok, _ in result):
                out = []
                for parsed, _, missing in result:
                    if missing:
                        trace.warnings.append("answer envelope missing a tuple id; NULL")
                    out.append(parsed)
                return out
            if attempt == 0:
                trace.warnings.append("unparseable response; retrying batch once")
        if result is None:
            trace.warnings.append("response envelope unparseable twice; batch rows NULL")
            return [None] * len(chunk)
        out = []
        for parsed, ok, _ in result:
            out.append(parsed if ok else None)
        trace.warnings.append("some values failed to parse after retry; NULL")
        return out

    # -- full pipeline -----------------------------------------------------

    def get_or_compute(self, job: InferenceJob) -> tuple[list, InferenceStats]:
        t0 = time.perf_counter()
        stats = InferenceStats()
        distinct, back_map = dedup(job.rows)
        results: list = [_MISS] * len(distinct)
        miss_indices: list[int] = []
        for i, row in enumerate(distinct):
            if all(v is None for v in row.values()):
                results[i] = None  # all-NULL tuple: no provider work
                continue
            key = self._tuple_key(job, row)
            cached = self.cache.get(key, _MISS)
            if cached is not _MISS:
                results[i] = cached
                stats.cache_hits += 1
            else:
                miss_indices.append(i)

        if miss_indices:
            miss_rows = [distinct[i] for i in miss_indices]
            plan = self.plan_batches(job, miss_rows)
            stats.tuples_sent = len(miss_rows)

            def run(batch: list[int]):
                return self.run_batch_with_backoff(job, [miss_rows[i] for i in batch])

            batch_results = self._map_batches(run, plan.batches)
            for batch, (outputs, trace) in zip(plan.batches, batch_results):
                trace.merge_into(stats)
                for local, value in zip(batch, outputs):
                    di = miss_indices[local]
                    results[di] = value
                    self.cache.put(self._tuple_key(job, distinct[di]), value)

        aligned = [results[back_map[i]] for i in range(len(job.rows))]
        stats.wall_time = time.perf_counter() - t0
        return aligned, stats

    def _map_batches(self, fn: Callable, batches: list[list[int]]) -> list:
        if len(batches) <= 1 or self.max_parallel <= 1:
            return [fn(b) for b in batches]
        with ThreadPoolExecutor(max_workers=self.max_parallel) as pool:
            return list(pool.map(fn, batches))

    def _tuple_key(self, job: InferenceJob, row: dict) -> str:
        return cache_key(
            job.model.provider_id,
            job.model.model_id,
            job.model.params,
            job.kind,
            job.prompt_text,
            job.format,
            job.contract,
            canonical_tuple(row),
        )

    # -- embeddings ----------------------------------------------------------

    def embed_texts(
        self,
        model: ModelResource,
        texts: list[str],
        max_batch: int = EMBED_MAX_BATCH,
    ) -> tuple[list[Optional[list[float]]], InferenceStats]:
        t0 = time.perf_counter()
        stats = InferenceStats()
        contract = OutputContract(ContractKind.TEXT_PER_TUPLE)
        distinct, back_map = dedup([{"text": t} for t in texts])
        results: list = [_MISS] * len(distinct)
        miss_indices = []
        for i, row in enumerate(distinct):
            if row["text"] is None:
                results[i] = None
                continue
            key = cache_key(
                model.provider_id, model.model_id, model.params,
                "llm_embedding", "", SerializationFormat.JSON, contract,
                canonical_tuple(row),
            )
            cached = self.cache.get(key, _MISS)
            if cached is not _MISS:
                results[i] = cached
                stats.cache_hits += 1
            else:
                miss_indices.append(i)

        if miss_indices:
            stats.tuples_sent = len(miss_indices)
            batches = [
                miss_indices[i : i + max_batch] for i in range(0, len(miss_indices), max_batch)
            ]
            provider = self._provider(model)

            def run(batch: list[int]) -> list:
                return provider.embed(model.model_id, [distinct[i]["text"] for i in batch])

            batch_outputs = self._map_batches(run, batches)
            stats.provider_calls += len(batches)
            for batch, vectors in zip(batches, batch_outputs):
                stats.effective_batch_sizes.append(len(batch))
                for di, vec in zip(batch, vectors):
                    results[di] = vec
                    key = cache_key(
                        model.provider_id, model.model_id, model.params,
                        "llm_embedding", "", SerializationFormat.JSON, contract,
                        canonical_tuple(distinct[di]),
                    )
                    self.cache.put(key, vec)

        aligned = [results[back_map[i]] for i in range(len(texts))]
        stats.wall_time = time.perf_counter() - t0
        return aligned, stats

    # -- group-level calls (aggregates) ---------------------------------------

    def cached_group_call(
        self, job: InferenceJob, compute: Callable[[], object]
    ) -> tuple[object, bool]:
        """Cache one prediction covering a whole tuple group.

        Aggregates reduce a group to a single value, so the cache unit is the
        group: the key hashes every member tuple. Returns (value, was_hit).
        """
        payload = json.dumps([canonical_tuple(r) for r in job.rows], ensure_ascii=False)
        key = cache_key(
            job.model.provider_id, job.model.model_id, job.model.params,
            job.kind, job.prompt_text, job.format, job.contract, payload,
        )
        cached = self.cache.get(key, _MISS)
        if cached is not _MISS:
            return cached, True
        value = compute()
        self.cache.put(key, value)
        return value, False
