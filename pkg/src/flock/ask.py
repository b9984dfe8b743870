"""Natural-language question to SQL generation.

Builds a prompt from the loaded table schemas, a reference card of the
semantic SQL functions, and the user's question, then asks a chat model
for a single SQL statement. The reply must re-parse and use only known
functions; on a parse failure one retry is made with the error appended.
"""

from __future__ import annotations

import re
from typing import Optional

from .catalog import ModelResource
from .errors import GenerationFailed, SqlError
from .functions import FUSION_FUNCTIONS, SEMANTIC_FUNCTIONS
from .provider import ChatRequest
from .sql import parse
from .sql.ast import FuncCall, SelectStatement, SemanticCall
from .sql.planner import AGG_FUNCS, _children_of

ALLOWED_FUNCTIONS = frozenset(
    SEMANTIC_FUNCTIONS
    | FUSION_FUNCTIONS
    | AGG_FUNCS
    | {"match_bm25", "array_cosine_similarity", "coalesce",
       "abs", "round", "lower", "upper", "length"}
)

_SYSTEM_TEXT = (
    "You translate natural language questions into a single SQL statement "
    "for an engine with LLM-backed functions. Reply with SQL only: no "
    "commentary, no code fences."
)

_REFERENCE_CARD = """\
Available functions (beyond standard SQL):
- llm_complete({'model': m}, {'prompt': p}, {col: expr, ...}) -> text per row
- llm_complete_json({'model': m}, {'prompt': p}, {col: expr, ...}) -> JSON per row
- llm_filter({'model': m}, {'prompt': p}, {col: expr, ...}) -> boolean per row (use in WHERE)
- llm_embedding({'model': m}, {col: expr, ...}) -> embedding vector
- llm_reduce / llm_reduce_json(...) -> one value per group (aggregate)
- llm_rerank(...) -> semantically reordered group (aggregate)
- llm_first / llm_last(...) -> most/least relevant row of a group (aggregate)
- fusion_rrf(r1, r2, ...), fusion_combsum/combmnz/combmed/combanz(s1, s2, ...)
- match_bm25(id_column, 'query text') -> keyword relevance score
- array_cosine_similarity(vec1, vec2) -> cosine similarity

Standard SQL: SELECT, WITH, WHERE, INNER/FULL OUTER JOIN ... ON a = b,
GROUP BY, MAX(x) OVER (), ORDER BY, LIMIT, expr::TYPE casts.
Named models available: use {'model': 'gpt-4o-mini'} unless told otherwise."""


def schema_ddl(schemas: dict[str, list[str]]) -> str:
    lines = []
    for table in sorted(schemas):
        cols = ", ".join(schemas[table])
        lines.append(f"CREATE TABLE {table} ({cols});")
    return "\n".join(lines)


def build_ask_prompt(question: str, schemas: dict[str, list[str]]) -> str:
    return (
        "Tables in the database:\n"
        f"{schema_ddl(schemas)}\n\n"
        f"{_REFERENCE_CARD}\n\n"
        f"Question: {question}\n\n"
        "Write one SQL statement that answers the question."
    )


_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*?)\n?```\s*$", re.DOTALL)


def extract_sql(reply: str) -> str:
    text = reply.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    return text.rstrip(";").strip() + ";" if text else text


def _collect_function_names(expr, out: set) -> None:
    if isinstance(expr, (FuncCall, SemanticCall)):
        out.add(expr.name)
    for child in _children_of(expr):
        _collect_function_names(child, out)


def verify_functions(stmt: SelectStatement) -> None:
    names: set = set()
    for item in stmt.select_items:
        _collect_function_names(item.expr, names)
    if stmt.where is not None:
        _collect_function_names(stmt.where, names)
    for e in stmt.group_by:
        _collect_function_names(e, names)
    for o in stmt.order_by:
        _collect_function_names(o.expr, names)
    for _, cte in stmt.ctes:
        verify_functions(cte)
    unknown = names - ALLOWED_FUNCTIONS
    if unknown:
        raise SqlError(f"unsupported functions: {', '.join(sorted(unknown))}")


def generate_ask_sql(
    question: str,
    schemas: dict[str, list[str]],
    model: ModelResource,
    provider,
    params: Optional[dict] = None,
) -> str:
    if not schemas:
        raise GenerationFailed("no tables loaded; nothing to query")
    prompt = build_ask_prompt(question, schemas)
    last_error: Optional[str] = None
    for _ in range(2):
        user_text = prompt
        if last_error is not None:
            user_text += (
                f"\n\nYour previous attempt failed to parse: {last_error}\n"
                "Reply with one corrected SQL statement."
            )
        response = provider.chat_complete(ChatRequest(
            model_id=model.model_id,
            system_text=_SYSTEM_TEXT,
            user_text=user_text,
            params=dict(params or model.params),
        ))
        sql = extract_sql(response.text)
        try:
            stmt = parse(sql)
            if not isinstance(stmt, SelectStatement):
                raise SqlError("generated statement is not a SELECT")
            verify_functions(stmt)
            return sql
        except SqlError as e:
            last_error = str(e)
    raise GenerationFailed(f"generated SQL failed to parse twice: {last_error}")
