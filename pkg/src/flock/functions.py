"""Semantic function semantics: argument resolution, output contracts,
response parsing, and the score-fusion family.

Scalar functions map each input tuple to one value through the inference
runtime; aggregates reduce a tuple group to one value. Model and prompt
arguments come either from the catalog ({'model_name': ...},
{'prompt_name': ...}, optional 'version') or inline ({'model': ...},
{'prompt': ...}).
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass
from typing import Optional

from .catalog import CatalogStore, ModelResource, PromptResource, ResourceKind
from .errors import DomainError, UnknownResource
from .prompting import ContractKind, OutputContract, SerializationFormat
from .provider import ProviderRegistry
from .runtime import AUTO, BatchMode, InferenceJob, InferenceRuntime, InferenceStats

RERANK_WINDOW = 10
RERANK_STRIDE = 5

RRF_K = 60

SCALAR_FUNCTIONS = frozenset(
    {"llm_complete", "llm_complete_json", "llm_filter", "llm_embedding"}
)
AGGREGATE_FUNCTIONS = frozenset(
    {"llm_reduce", "llm_reduce_json", "llm_rerank", "llm_first", "llm_last"}
)
FUSION_FUNCTIONS = frozenset(
    {"fusion", "fusion_rrf", "fusion_combsum", "fusion_combmnz", "fusion_combmed", "fusion_combanz"}
)
SEMANTIC_FUNCTIONS = SCALAR_FUNCTIONS | AGGREGATE_FUNCTIONS

_CONTRACTS = {
    "llm_complete": OutputContract(ContractKind.TEXT_PER_TUPLE),
    "llm_complete_json": OutputContract(ContractKind.JSON_PER_TUPLE),
    "llm_filter": OutputContract(ContractKind.BOOL_PER_TUPLE),
    "llm_reduce": OutputContract(ContractKind.SINGLE_TEXT),
    "llm_reduce_json": OutputContract(ContractKind.SINGLE_JSON),
    "llm_rerank": OutputContract(ContractKind.RANKING),
    "llm_first": OutputContract(ContractKind.RANKING),
    "llm_last": OutputContract(ContractKind.RANKING),
}


# --- value parsers (per-tuple contracts) -------------------------------------

def parse_text_value(value):
    if value is None:
        return None, True
    if isinstance(value, str):
        return value, True
    return json.dumps(value, ensure_ascii=False), True


def parse_bool_value(value):
    """Case-insensitive true/false; anything else is NULL (no retry)."""
    if isinstance(value, bool):
        return value, True
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered == "true":
            return True, True
        if lowered == "false":
            return False, True
    return None, True


def parse_json_value(value):
    """Valid JSON value required; a string must parse. Bad value asks for
    one batch retry before settling on NULL."""
    if value is None:
        return None, True
    if isinstance(value, (dict, list, int, float, bool)):
        return value, True
    if isinstance(value, str):
        try:
            return json.loads(value), True
        except json.JSONDecodeError:
            return None, False
    return None, False


_VALUE_PARSERS = {
    "llm_complete": parse_text_value,
    "llm_complete_json": parse_json_value,
    "llm_filter": parse_bool_value,
}


# --- argument resolution ------------------------------------------------------

@dataclass(frozen=True)
class ResolvedCall:
    model: ModelResource
    prompt_text: str


class FunctionLibrary:
    """Binds semantic-function calls to catalog resources and executes them."""

    def __init__(
        self,
        catalog: CatalogStore,
        registry: ProviderRegistry,
        runtime: InferenceRuntime,
        default_provider: Optional[str] = None,
    ):
        self.catalog = catalog
        self.registry = registry
        self.runtime = runtime
        self.default_provider = default_provider

    def resolve_model(self, spec: dict) -> ModelResource:
        spec = dict(spec)
        if "model_name" in spec:
            name = spec.pop("model_name")
            version = spec.pop("version", None)
            try:
                record = self.catalog.resolve_resource(
                    ResourceKind.MODEL, name, int(version) if version is not None else None
                )
            except Exception as e:
                raise UnknownResource(f"model '{name}' not in catalog: {e}")
            assert isinstance(record, ModelResource)
            if self.default_provider and record.provider_id != self.default_provider:
                record = ModelResource(
                    name=record.name,
                    provider_id=self.default_provider,
                    model_id=record.model_id,
                    context_window_tokens=record.context_window_tokens,
                    max_output_tokens=record.max_output_tokens,
                    params=record.params,
                    version=record.version,
                    scope=record.scope,
                    created_at=record.created_at,
                )
            return record
        if "model" in spec:
            model_id = spec.pop("model")
            meta = self.registry.model_metadata(model_id)
            provider_id = self.default_provider or "openai"
            return ModelResource(
                name=model_id,
                provider_id=provider_id,
                model_id=model_id,
                context_window_tokens=meta.context_window_tokens,
                max_output_tokens=meta.max_output_tokens,
                params=spec,  # leftover keys ride along as generation params
            )
        raise UnknownResource("model spec requires 'model' or 'model_name'")

    def resolve_prompt(self, spec: dict) -> str:
        if "prompt_name" in spec:
            name = spec["prompt_name"]
            version = spec.get("version")
            try:
                record = self.catalog.resolve_resource(
                    ResourceKind.PROMPT, name, int(version) if version is not None else None
                )
            except Exception as e:
                raise UnknownResource(f"prompt '{name}' not in catalog: {e}")
            assert isinstance(record, PromptResource)
            return record.text
        if "prompt" in spec:
            return spec["prompt"]
        raise UnknownResource("prompt spec requires 'prompt' or 'prompt_name'")

    def _job(
        self,
        kind: str,
        config_args: list[dict],
        rows: list[dict],
        format: SerializationFormat,
        batch_mode: BatchMode,
        template: Optional[str],
    ) -> InferenceJob:
        model = self.resolve_model(config_args[0])
        prompt_text = self.resolve_prompt(config_args[1]) if len(config_args) > 1 else ""
        return InferenceJob(
            kind=kind,
            model=model,
            prompt_text=prompt_text,
            rows=rows,
            contract=_CONTRACTS[kind],
            format=format,
            batch_mode=batch_mode,
            template=template,
            value_parser=_VALUE_PARSERS.get(kind, parse_text_value),
        )

    # -- scalar ------------------------------------------------------------

    def run_scalar(
        self,
        name: str,
        config_args: list[dict],
        rows: list[dict],
        format: SerializationFormat = SerializationFormat.XML,
        batch_mode: BatchMode = AUTO,
        template: Optional[str] = None,
    ) -> tuple[list, InferenceStats, InferenceJob]:
        if name == "llm_embedding":
            model = self.resolve_model(config_args[0])
            texts = [self.embedding_input(row) for row in rows]
            values, stats = self.runtime.embed_texts(model, texts)
            job = InferenceJob(
                kind=name, model=model, prompt_text="", rows=rows,
                contract=OutputContract(ContractKind.TEXT_PER_TUPLE),
                format=format, batch_mode=batch_mode,
            )
            return values, stats, job
        job = self._job(name, config_args, rows, format, batch_mode, template)
        values, stats = self.runtime.get_or_compute(job)
        return values, stats, job

    @staticmethod
    def embedding_input(row: dict) -> Optional[str]:
        """Key-sorted, newline-joined tuple values form the embedding text."""
        parts = [row[k] for k in sorted(row)]
        if all(p is None for p in parts):
            return None
        return "\n".join("" if p is None else str(p) for p in parts)

    # -- aggregates ----------------------------------------------------------

    def run_aggregate(
        self,
        name: str,
        config_args: list[dict],
        rows: list[dict],
        format: SerializationFormat = SerializationFormat.XML,
        batch_mode: BatchMode = AUTO,
        template: Optional[str] = None,
    ) -> tuple[object, InferenceStats, InferenceJob]:
        job = self._job(name, config_args, rows, format, batch_mode, template)
        stats = InferenceStats()
        t0 = time.perf_counter()

        if name in ("llm_reduce", "llm_reduce_json"):
            def compute():
                return self._reduce(job, rows, stats)
            value, hit = self.runtime.cached_group_call(job, compute)
        else:  # rerank family
            def compute():
                order = self._rerank_order(job, rows, stats)
                return [rows[i] for i in order]
            ranked, hit = self.runtime.cached_group_call(job, compute)
            if name == "llm_first":
                value = ranked[0] if ranked else None
            elif name == "llm_last":
                value = ranked[-1] if ranked else None
            else:
                value = ranked
        if hit:
            stats.cache_hits += 1
        else:
            stats.tuples_sent = len(rows)
        stats.wall_time = time.perf_counter() - t0
        return value, stats, job

    def _group_chunks(self, job: InferenceJob, rows: list[dict]) -> list[list[dict]]:
        from .prompting import estimate_tokens, serialize_tuples

        budget = self.runtime.budget_tokens(job)
        chunks: list[list[dict]] = []
        current: list[dict] = []
        used = 0
        for row in rows:
            cost = estimate_tokens(serialize_tuples([row], job.format)) + 1
            if current and used + cost > budget:
                chunks.append(current)
                current, used = [], 0
            current.append(row)
            used += cost
        if current:
            chunks.append(current)
        return chunks

    def _single_answer(self, job: InferenceJob, rows: list[dict], stats: InferenceStats):
        """One SINGLE_TEXT/SINGLE_JSON call with a retry on a bad envelope."""
        for attempt in range(2):
            stats.provider_calls += 1
            stats.effective_batch_sizes.append(len(rows))
            resp = self.runtime.chat_group(job, rows)
            try:
                return json.loads(resp.text)["answer"]
            except (json.JSONDecodeError, KeyError, TypeError):
                if attempt == 0:
                    stats.warnings.append("unparseable reduce response; retrying once")
        stats.warnings.append("reduce response unparseable twice; NULL")
        return None

    def _reduce(
        self, job: InferenceJob, rows: list[dict], stats: InferenceStats, depth: int = 0
    ):
        """Hierarchical reduce: oversized groups are chunked to the token
        budget, each chunk reduced, then the partial outputs reduced again.
        The depth cap bounds the recursion when partials stop shrinking."""
        chunks = self._group_chunks(job, rows)
        if len(chunks) <= 1 or depth >= 8:
            return self._single_answer(job, rows, stats)
        partials = [self._single_answer(job, chunk, stats) for chunk in chunks]
        partial_rows = [
            {"partial_result": p if isinstance(p, str) else json.dumps(p, ensure_ascii=False)}
            for p in partials
        ]
        return self._reduce(job, partial_rows, stats, depth + 1)

    def _rank_window(
        self, job: InferenceJob, rows: list[dict], stats: InferenceStats
    ) -> list[int]:
        """Rank one window of tuples; invalid permutation retries once, then
        falls back to input order."""
        n = len(rows)
        for attempt in range(2):
            stats.provider_calls += 1
            stats.effective_batch_sizes.append(n)
            resp = self.runtime.chat_group(job, rows)
            try:
                ranking = json.loads(resp.text)["ranking"]
            except (json.JSONDecodeError, KeyError, TypeError):
                ranking = None
            if (
                isinstance(ranking, list)
                and sorted(ranking) == list(range(n))
            ):
                return ranking
            if attempt == 0:
                stats.warnings.append("invalid ranking permutation; retrying once")
        stats.warnings.append("invalid ranking twice; falling back to input order")
        return list(range(n))

    def _rerank_order(
        self, job: InferenceJob, rows: list[dict], stats: InferenceStats
    ) -> list[int]:
        n = len(rows)
        if n <= RERANK_WINDOW:
            return self._rank_window(job, rows, stats)
        # Sliding window from list tail to head: each pass reranks a window
        # and carries promising tuples upward by the stride overlap.
        order = list(range(n))
        start = n - RERANK_WINDOW
        while True:
            window = order[start : start + RERANK_WINDOW]
            local = self._rank_window(job, [rows[i] for i in window], stats)
            order[start : start + RERANK_WINDOW] = [window[i] for i in local]
            if start == 0:
                break
            start = max(0, start - RERANK_STRIDE)
        return order


# --- score fusion -------------------------------------------------------------

def _non_null(values) -> list[float]:
    return [float(v) for v in values if v is not None]


def fusion_rrf(*ranks, k: int = RRF_K) -> Optional[float]:
    """Reciprocal rank fusion over 1-based ranks; NULL means the item is
    missing from that retriever."""
    present = _non_null(ranks)
    if not present:
        return None
    if any(r < 1 for r in present):
        raise DomainError("RRF ranks are 1-based; got a rank < 1")
    return sum(1.0 / (k + r) for r in present)


def fusion_combsum(*scores) -> Optional[float]:
    present = _non_null(scores)
    if not present:
        return None
    return sum(present)  # NULL contributes 0


def fusion_combmnz(*scores) -> Optional[float]:
    present = _non_null(scores)
    if not present:
        return None
    return sum(present) * sum(1 for s in present if s > 0)


def fusion_combmed(*scores) -> Optional[float]:
    present = _non_null(scores)
    if not present:
        return None
    return statistics.median(present)


def fusion_combanz(*scores) -> Optional[float]:
    present = _non_null(scores)
    if not present:
        return None
    return sum(present) / len(present)


# The generic form takes normalized scores; RRF needs ranks, so it is never
# a silent default and must be called explicitly.
fusion = fusion_combsum

FUSION_IMPLS = {
    "fusion": fusion_combsum,
    "fusion_rrf": fusion_rrf,
    "fusion_combsum": fusion_combsum,
    "fusion_combmnz": fusion_combmnz,
    "fusion_combmed": fusion_combmed,
    "fusion_combanz": fusion_combanz,
}
