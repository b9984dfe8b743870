"""Workspace session: wires the catalog, providers, inference runtime,
tables, and FTS indexes together and executes SQL statements end to end.

A session is rooted at a workspace directory. Resource definitions live in
``<workspace>/.flock/catalog.json`` and the prediction cache in
``<workspace>/.flock/cache`` unless FLOCK_CACHE_DIR points elsewhere.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .ask import generate_ask_sql
from .catalog import CatalogStore, ModelResource, ResourceKind, Scope
from .errors import BindingError, SqlError
from .engine import Executor, OverrideSet, QueryResult, Table, load_csv, plan_to_export
from .functions import FunctionLibrary
from .mock import MockProvider
from .provider import HttpProvider, ProviderRegistry
from .retrieval import build_fts_index
from .runtime import InferenceRuntime, PredictionCache
from .sql import parse
from .sql.ast import (
    Ask, CreateFtsIndex, CreateModel, CreatePrompt, CreateTableFromFile,
    DeleteResource, SelectStatement, UpdateResource,
)
from .sql.planner import PlanNode, Planner


@dataclass
class ExecutionResult:
    """Outcome of one statement. DDL statements carry only a message."""

    sql: str
    message: str = ""
    result: Optional[QueryResult] = None
    plan: Optional[PlanNode] = None
    annotations: dict = field(default_factory=dict)
    wall_time: float = 0.0
    generated_sql: Optional[str] = None  # set for ASK

    @property
    def is_query(self) -> bool:
        return self.result is not None


class EngineSession:
    """One workspace: tables, indexes, catalog, and an inference runtime.

    Statement execution is serialized with a lock; the catalog and cache
    have their own internal locking so reads stay cheap.
    """

    def __init__(
        self,
        workspace: Union[str, Path] = ".",
        provider: str = "mock",
        mock: Optional[MockProvider] = None,
        global_catalog_path: Optional[Union[str, Path]] = None,
        cache_dir: Optional[Union[str, Path]] = None,
    ):
        self.workspace = Path(workspace)
        flock_dir = self.workspace / ".flock"
        self.registry = ProviderRegistry.load()
        self.catalog = CatalogStore(
            flock_dir / "catalog.json", global_path=global_catalog_path
        )
        self.mock = mock or MockProvider(self.registry)
        providers: dict[str, object] = {"mock": self.mock}
        for pid in ("openai", "azure", "ollama"):
            config = self.registry.provider_config(pid)
            key = os.environ.get(config.api_key_env or "", "")
            providers[pid] = HttpProvider(config, api_key=key)
        self.cache = PredictionCache(cache_dir or flock_dir / "cache")
        self.runtime = InferenceRuntime(providers, self.cache)
        self.default_provider = provider if provider != "live" else None
        self.functions = FunctionLibrary(
            self.catalog, self.registry, self.runtime,
            default_provider=self.default_provider,
        )
        self.tables: dict[str, Table] = {}
        self.fts_indexes: dict = {}
        self._lock = threading.Lock()

    # -- table management ------------------------------------------------

    def load_table(self, path: Union[str, Path], name: Optional[str] = None) -> Table:
        table = load_csv(path, table_name=name or Path(path).stem)
        self.tables[table.name] = table
        return table

    def table_schemas(self) -> dict[str, list[str]]:
        return {name: t.column_names for name, t in self.tables.items()}

    # -- execution ----------------------------------------------------------

    def execute_sql(
        self, sql: str, overrides: Optional[OverrideSet] = None
    ) -> ExecutionResult:
        with self._lock:
            stmt = parse(sql)
            return self._dispatch(sql, stmt, overrides)

    def _dispatch(self, sql: str, stmt, overrides) -> ExecutionResult:
        if isinstance(stmt, SelectStatement):
            return self._run_select(sql, stmt, overrides)
        if isinstance(stmt, Ask):
            return self._run_ask(sql, stmt, overrides)
        if isinstance(stmt, CreateModel):
            return self._create_model(sql, stmt)
        if isinstance(stmt, CreatePrompt):
            scope = Scope.GLOBAL if stmt.scope == "GLOBAL" else Scope.LOCAL
            record = self.catalog.create_resource(
                ResourceKind.PROMPT, scope, {"name": stmt.name, "text": stmt.text}
            )
            return ExecutionResult(sql, message=f"prompt '{record.name}' created (v1)")
        if isinstance(stmt, UpdateResource):
            return self._update_resource(sql, stmt)
        if isinstance(stmt, DeleteResource):
            kind = ResourceKind.MODEL if stmt.kind == "MODEL" else ResourceKind.PROMPT
            scope = Scope.GLOBAL if stmt.scope == "GLOBAL" else Scope.LOCAL
            removed = self.catalog.delete_resource(kind, stmt.name, scope)
            return ExecutionResult(
                sql, message=f"removed {removed} version(s) of '{stmt.name}'"
            )
        if isinstance(stmt, CreateTableFromFile):
            path = Path(stmt.path)
            if not path.is_absolute():
                path = self.workspace / path
            table = self.load_table(path, name=stmt.table)
            return ExecutionResult(
                sql, message=f"table '{table.name}' loaded ({table.row_count} rows)"
            )
        if isinstance(stmt, CreateFtsIndex):
            return self._create_fts_index(sql, stmt)
        raise SqlError(f"unsupported statement {type(stmt).__name__}")

    def _run_select(self, sql, stmt, overrides) -> ExecutionResult:
        t0 = time.perf_counter()
        planner = Planner(self.catalog, self.table_schemas())
        plan = planner.plan(stmt)
        executor = Executor(
            self.tables, functions=self.functions, fts_indexes=self.fts_indexes,
            catalog=self.catalog, overrides=overrides,
        )
        result = executor.execute(plan)
        return ExecutionResult(
            sql,
            result=result,
            plan=plan,
            annotations=executor.annotations,
            wall_time=time.perf_counter() - t0,
        )

    def _run_ask(self, sql, stmt: Ask, overrides) -> ExecutionResult:
        t0 = time.perf_counter()
        model = self._ask_model()
        provider = self._provider_for(model)
        generated = generate_ask_sql(
            stmt.question, self.table_schemas(), model, provider
        )
        inner = parse(generated)
        if not isinstance(inner, SelectStatement):
            raise SqlError("ASK must generate a SELECT statement")
        out = self._run_select(generated, inner, overrides)
        # wrap the plan so exports show the NL entry point
        wrapper = PlanNode(
            node_id=max(n.node_id for n in out.plan.walk()) + 1,
            kind="Ask",
            children=(out.plan,),
            props={"question": stmt.question, "generated_sql": generated},
            schema=out.plan.schema,
        )
        return ExecutionResult(
            sql,
            result=out.result,
            plan=wrapper,
            annotations=out.annotations,
            wall_time=time.perf_counter() - t0,
            generated_sql=generated,
        )

    def _ask_model(self) -> ModelResource:
        try:
            record = self.catalog.resolve_resource(ResourceKind.MODEL, "ask-model")
            assert isinstance(record, ModelResource)
            model = record
        except Exception:
            meta = self.registry.model_metadata("mock-chat")
            model = ModelResource(
                name="ask-model", provider_id="mock", model_id="mock-chat",
                context_window_tokens=meta.context_window_tokens,
                max_output_tokens=meta.max_output_tokens,
                params={}, version=1, scope=Scope.LOCAL,
            )
        if self.default_provider:
            model = ModelResource(
                name=model.name, provider_id=self.default_provider,
                model_id=model.model_id,
                context_window_tokens=model.context_window_tokens,
                max_output_tokens=model.max_output_tokens,
                params=model.params, version=model.version, scope=model.scope,
            )
        return model

    def _provider_for(self, model: ModelResource):
        return self.runtime.providers[model.provider_id]

    # -- DDL ----------------------------------------------------------------

    def _create_model(self, sql, stmt: CreateModel) -> ExecutionResult:
        scope = Scope.GLOBAL if stmt.scope == "GLOBAL" else Scope.LOCAL
        params = dict(stmt.params)
        window = params.pop("context_window_tokens", None)
        max_out = params.pop("max_output_tokens", None)
        if (window is None or max_out is None) and self.registry.has_model(stmt.model_id):
            meta = self.registry.model_metadata(stmt.model_id)
            window = window if window is not None else meta.context_window_tokens
            max_out = max_out if max_out is not None else meta.max_output_tokens
        record = self.catalog.create_resource(
            ResourceKind.MODEL, scope, {
                "name": stmt.name,
                "model_id": stmt.model_id,
                "provider_id": stmt.provider,
                "context_window_tokens": window if window is not None else 8192,
                "max_output_tokens": max_out if max_out is not None else 1024,
                "params": params,
            },
        )
        return ExecutionResult(sql, message=f"model '{record.name}' created (v1)")

    def _update_resource(self, sql, stmt: UpdateResource) -> ExecutionResult:
        if stmt.kind == "MODEL":
            args = list(stmt.definition)
            current = self.catalog.resolve_resource(ResourceKind.MODEL, stmt.name)
            assert isinstance(current, ModelResource)
            model_id = args[0] if len(args) > 0 else current.model_id
            provider = args[1] if len(args) > 1 else current.provider_id
            window, max_out = current.context_window_tokens, current.max_output_tokens
            if len(args) > 0 and self.registry.has_model(model_id):
                meta = self.registry.model_metadata(model_id)
                window, max_out = meta.context_window_tokens, meta.max_output_tokens
            record = self.catalog.update_resource(ResourceKind.MODEL, stmt.name, {
                "name": stmt.name, "model_id": model_id, "provider_id": provider,
                "context_window_tokens": window, "max_output_tokens": max_out,
                "params": current.params,
            })
        else:
            text = stmt.definition[0] if stmt.definition else ""
            record = self.catalog.update_resource(
                ResourceKind.PROMPT, stmt.name, {"name": stmt.name, "text": text}
            )
        return ExecutionResult(
            sql, message=f"{stmt.kind.lower()} '{stmt.name}' updated (v{record.version})"
        )

    def _create_fts_index(self, sql, stmt: CreateFtsIndex) -> ExecutionResult:
        table = self.tables.get(stmt.table)
        if table is None:
            raise BindingError(f"unknown table {stmt.table}")
        names = table.column_names
        for col in (stmt.id_column, stmt.text_column):
            if col not in names:
                raise BindingError(f"no column {col} in table {stmt.table}")
        id_idx = names.index(stmt.id_column)
        text_idx = names.index(stmt.text_column)
        ids = table.data[id_idx]
        texts = [t if t is not None else "" for t in table.data[text_idx]]
        self.fts_indexes[stmt.table] = build_fts_index(ids, texts)
        return ExecutionResult(
            sql, message=f"FTS index built on {stmt.table}({stmt.text_column})"
        )

    # -- exports -----------------------------------------------------------

    def export_plan(self, execution: ExecutionResult) -> dict:
        if execution.plan is None:
            raise ValueError("statement produced no plan")
        return plan_to_export(
            execution.plan, execution.annotations, execution.wall_time
        )
