"""HTTP facade over an EngineSession.

Endpoints submit SQL or natural-language questions, export annotated
plans, and rerun a stored query with inspector overrides (batch size,
serialization format, prompt template). Plan exports are kept in an
in-memory LRU store capped at 100 entries.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import (
    FlockError, GenerationFailed, NotFound, ProviderError, SqlError,
    SyntaxError_, UnknownResource,
)
from .prompting import SerializationFormat
from .runtime import BatchMode
from .engine import OverrideSet
from .session import EngineSession, ExecutionResult

PLAN_STORE_CAP = 100


class PlanStore:
    """LRU map from plan_id to the immutable stored run."""

    def __init__(self, cap: int = PLAN_STORE_CAP):
        self.cap = cap
        self._entries: OrderedDict[str, dict] = OrderedDict()
        self._lock = threading.Lock()
        self._next = 0

    def put(self, entry: dict) -> str:
        with self._lock:
            self._next += 1
            plan_id = f"plan-{self._next}"
            self._entries[plan_id] = entry
            while len(self._entries) > self.cap:
                self._entries.popitem(last=False)
            return plan_id

    def get(self, plan_id: str) -> Optional[dict]:
        with self._lock:
            entry = self._entries.get(plan_id)
            if entry is not None:
                self._entries.move_to_end(plan_id)
            return entry


class OverridesBody(BaseModel):
    batch_mode: Optional[str] = None  # "Auto" | "Manual(n)"
    serialization_format: Optional[str] = None  # XML | JSON | MARKDOWN
    prompt_template: Optional[str] = None
    node_ids: Optional[list[int]] = None


class QueryBody(BaseModel):
    sql: str
    overrides: Optional[OverridesBody] = None


class AskBody(BaseModel):
    question: str


def parse_overrides(body: Optional[OverridesBody]) -> Optional[OverrideSet]:
    if body is None:
        return None
    batch_mode = None
    if body.batch_mode is not None:
        batch_mode = BatchMode.parse(body.batch_mode)
    fmt = None
    if body.serialization_format is not None:
        try:
            fmt = SerializationFormat(body.serialization_format.upper())
        except ValueError:
            raise SqlError(
                f"unknown serialization format {body.serialization_format!r}"
            )
    if body.prompt_template is not None:
        from .errors import TemplateError
        from .prompting import validate_template

        names = validate_template(body.prompt_template)
        if "tuples" not in names:
            raise TemplateError("template must include the {{tuples}} placeholder")
    node_ids = frozenset(body.node_ids) if body.node_ids is not None else None
    return OverrideSet(
        batch_mode=batch_mode,
        serialization_format=fmt,
        prompt_template=body.prompt_template,
        node_ids=node_ids,
    )


def _error_payload(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _result_rows(execution: ExecutionResult) -> dict:
    result = execution.result
    return {
        "columns": [{"name": n, "type": t} for n, t in result.columns],
        "rows": result.rows,
        "row_count": len(result.rows),
    }


def create_app(session: EngineSession, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="flock", docs_url=None, redoc_url=None)
    store = PlanStore()
    app.state.session = session
    app.state.plan_store = store

    @app.exception_handler(FlockError)
    async def flock_error_handler(request, exc: FlockError):
        status = 400
        if isinstance(exc, (NotFound, UnknownResource)):
            status = 404
        if isinstance(exc, GenerationFailed):
            status = 422
        payload = _error_payload(exc.code, str(exc))
        if isinstance(exc, SyntaxError_):
            payload["error"]["line"] = exc.line
            payload["error"]["column"] = exc.column
        return JSONResponse(status_code=status, content=payload)

    @app.exception_handler(ProviderError)
    async def provider_error_handler(request, exc: ProviderError):
        return JSONResponse(
            status_code=502, content=_error_payload(exc.kind, str(exc))
        )

    def run_and_store(sql: str, overrides: Optional[OverrideSet]) -> tuple:
        execution = session.execute_sql(sql, overrides=overrides)
        if not execution.is_query:
            return execution, None
        export = session.export_plan(execution)
        plan_id = store.put({
            "sql": sql,
            "generated_sql": execution.generated_sql,
            "export": export,
            "wall_time": execution.wall_time,
            "provider_calls": _total_provider_calls(execution),
            "result": _result_rows(execution),
        })
        return execution, plan_id

    def _total_provider_calls(execution: ExecutionResult) -> int:
        return sum(
            note.get("llm", {}).get("provider_calls", 0)
            for note in execution.annotations.values()
        )

    @app.post("/api/query")
    async def api_query(body: QueryBody):
        if not body.sql.strip():
            return JSONResponse(
                status_code=400,
                content=_error_payload("EMPTY_SQL", "sql must be non-empty"),
            )
        overrides = parse_overrides(body.overrides)
        execution, plan_id = run_and_store(body.sql, overrides)
        if not execution.is_query:
            return {"message": execution.message, "plan_id": None}
        return {
            "plan_id": plan_id,
            "wall_time": execution.wall_time,
            **_result_rows(execution),
        }

    @app.post("/api/ask")
    async def api_ask(body: AskBody):
        if not body.question.strip():
            return JSONResponse(
                status_code=400,
                content=_error_payload("EMPTY_QUESTION", "question must be non-empty"),
            )
        question = body.question.replace("'", "''")
        execution, plan_id = run_and_store(f"ASK '{question}'", None)
        return {
            "generated_sql": execution.generated_sql,
            "plan_id": plan_id,
            "wall_time": execution.wall_time,
            **_result_rows(execution),
        }

    @app.get("/api/plan/{plan_id}")
    async def api_plan(plan_id: str):
        entry = store.get(plan_id)
        if entry is None:
            return JSONResponse(
                status_code=404,
                content=_error_payload("PLAN_NOT_FOUND", f"no plan {plan_id}"),
            )
        return {
            "plan_id": plan_id,
            "sql": entry["sql"],
            "generated_sql": entry["generated_sql"],
            **entry["export"],
        }

    @app.post("/api/plan/{plan_id}/rerun")
    async def api_rerun(plan_id: str, body: OverridesBody):
        entry = store.get(plan_id)
        if entry is None:
            return JSONResponse(
                status_code=404,
                content=_error_payload("PLAN_NOT_FOUND", f"no plan {plan_id}"),
            )
        overrides = parse_overrides(body)
        sql = entry["generated_sql"] or entry["sql"]
        execution, new_plan_id = run_and_store(sql, overrides)
        return {
            "plan_id": new_plan_id,
            "latency_comparison": {
                "before": {
                    "wall_time": entry["wall_time"],
                    "provider_calls": entry["provider_calls"],
                },
                "after": {
                    "wall_time": execution.wall_time,
                    "provider_calls": _total_provider_calls(execution),
                },
            },
            **_result_rows(execution),
        }

    @app.get("/api/tables")
    async def api_tables():
        return {
            "tables": [
                {
                    "name": t.name,
                    "columns": [{"name": n, "type": ty} for n, ty in t.columns],
                    "row_count": t.row_count,
                }
                for t in session.tables.values()
            ]
        }

    @app.get("/api/tables/{name}/preview")
    async def api_preview(name: str, limit: int = 20):
        table = session.tables.get(name)
        if table is None:
            return JSONResponse(
                status_code=404,
                content=_error_payload("TABLE_NOT_FOUND", f"no table {name}"),
            )
        rows = table.rows()[: max(limit, 0)]
        return {
            "name": name,
            "columns": [{"name": n, "type": ty} for n, ty in table.columns],
            "rows": rows,
            "row_count": table.row_count,
        }

    if static_dir is None:
        default_static = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if default_static.is_dir():
            static_dir = str(default_static)
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
