"""Logical plan execution.

SQL semantics for the supported subset: three-valued logic in Filter,
FULL OUTER JOIN padding unmatched rows with NULL, MAX(x) OVER () attaching
the global max to every row, stable sorts (NULL last ascending, first
descending), LIMIT after sort. LLM nodes hand column batches to the
inference runtime and splice results back in input row order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Optional

from ..errors import ExecError
from ..functions import FUSION_IMPLS, FunctionLibrary
from ..prompting import OutputContract, SerializationFormat, build_meta_prompt
from ..retrieval import bm25_match, cosine_similarity
from ..runtime import AUTO, BatchMode
from ..sql.ast import (
    BinaryOp, Cast, ColumnRef, FuncCall, IsNull, Literal, SemanticCall, Star,
    UnaryOp,
)
from ..sql.planner import AGG_FUNCS, PlanNode
from .tables import QueryResult, Table, infer_column_type


@dataclass(frozen=True)
class OverrideSet:
    """Inspector overrides applied to LLM nodes at execution time."""

    batch_mode: Optional[BatchMode] = None
    serialization_format: Optional[SerializationFormat] = None
    prompt_template: Optional[str] = None
    node_ids: Optional[frozenset] = None  # None = every LLM node

    def applies_to(self, node_id: int) -> bool:
        return self.node_ids is None or node_id in self.node_ids


@dataclass
class _Relation:
    schema: tuple
    rows: list[list]

    def envs(self) -> list[dict]:
        return build_envs(self.schema, self.rows)


def build_envs(schema: tuple, rows: list[list]) -> list[dict]:
    counts: dict[str, int] = {}
    for _, name in schema:
        counts[name] = counts.get(name, 0) + 1
    keys: list[list[str]] = []
    for qualifier, name in schema:
        ks = []
        if qualifier:
            ks.append(f"{qualifier}.{name}")
        if counts[name] == 1:
            ks.append(name)
        keys.append(ks)
    envs = []
    for row in rows:
        env: dict = {}
        for ks, value in zip(keys, row):
            for k in ks:
                env[k] = value
        envs.append(env)
    return envs


# --- scalar expression evaluation ---------------------------------------------

_SIMPLE_FUNCS = {
    "abs": lambda x: abs(x),
    "round": lambda x, n=0: round(x, int(n)),
    "lower": lambda s: s.lower(),
    "upper": lambda s: s.upper(),
    "length": lambda s: len(s),
}


def _null_in(args) -> bool:
    return any(a is None for a in args)


def _compare(op: str, left, right):
    if left is None or right is None:
        return None
    try:
        if op == "=":
            return left == right
        if op == "<>":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        if op == ">=":
            return left >= right
    except TypeError:
        raise ExecError(-1, f"cannot compare {type(left).__name__} and {type(right).__name__}")
    raise ExecError(-1, f"unknown comparison {op}")


def eval_expr(expr, env: dict):
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, ColumnRef):
        key = f"{expr.table}.{expr.name}" if expr.table else expr.name
        if key not in env:
            raise ExecError(-1, f"column {key} missing at execution time")
        return env[key]
    if isinstance(expr, BinaryOp):
        if expr.op == "AND":
            left = eval_expr(expr.left, env)
            if left is False:
                return False
            right = eval_expr(expr.right, env)
            if right is False:
                return False
            if left is None or right is None:
                return None
            return True
        if expr.op == "OR":
            left = eval_expr(expr.left, env)
            if left is True:
                return True
            right = eval_expr(expr.right, env)
            if right is True:
                return True
            if left is None or right is None:
                return None
            return False
        left = eval_expr(expr.left, env)
        right = eval_expr(expr.right, env)
        if expr.op in ("=", "<>", "<", "<=", ">", ">="):
            return _compare(expr.op, left, right)
        if left is None or right is None:
            return None
        try:
            if expr.op == "+":
                return left + right
            if expr.op == "-":
                return left - right
            if expr.op == "*":
                return left * right
            if expr.op == "/":
                if right == 0:
                    return None
                return left / right
        except TypeError:
            raise ExecError(-1, f"bad operand types for {expr.op}")
        raise ExecError(-1, f"unknown operator {expr.op}")
    if isinstance(expr, UnaryOp):
        value = eval_expr(expr.operand, env)
        if expr.op == "NOT":
            return None if value is None else (not value)
        return None if value is None else -value
    if isinstance(expr, IsNull):
        value = eval_expr(expr.operand, env)
        return (value is not None) if expr.negated else (value is None)
    if isinstance(expr, Cast):
        return _cast(eval_expr(expr.operand, env), expr.type_name, expr.array_length)
    if isinstance(expr, FuncCall):
        return _eval_func(expr, env)
    if isinstance(expr, SemanticCall):
        raise ExecError(-1, f"{expr.name} was not lifted into a plan node")
    raise ExecError(-1, f"cannot evaluate {type(expr).__name__}")


def _cast(value, type_name: str, array_length: Optional[int]):
    if value is None:
        return None
    try:
        if type_name == "DOUBLE" and array_length is not None:
            if isinstance(value, str):
                parsed = json.loads(value)
            elif isinstance(value, list):
                parsed = value
            else:
                raise ExecError(-1, f"cannot cast {type(value).__name__} to DOUBLE[{array_length}]")
            if not isinstance(parsed, list) or not all(
                isinstance(v, (int, float)) for v in parsed
            ):
                raise ExecError(-1, "array cast requires a numeric JSON array")
            if len(parsed) != array_length:
                raise ExecError(
                    -1, f"array length mismatch: got {len(parsed)}, expected {array_length}"
                )
            return [float(v) for v in parsed]
        if type_name in ("DOUBLE", "FLOAT", "REAL"):
            return float(value)
        if type_name in ("INT", "INTEGER", "BIGINT"):
            return int(float(value)) if isinstance(value, str) else int(value)
        if type_name in ("TEXT", "VARCHAR", "STRING"):
            if isinstance(value, str):
                return value
            return json.dumps(value, ensure_ascii=False) if isinstance(value, (dict, list)) else str(value)
        if type_name == "BOOL":
            if isinstance(value, str):
                return value.strip().lower() == "true"
            return bool(value)
        if type_name == "JSON":
            return json.loads(value) if isinstance(value, str) else value
    except (ValueError, json.JSONDecodeError):
        raise ExecError(-1, f"cannot cast {value!r} to {type_name}")
    raise ExecError(-1, f"unsupported cast target {type_name}")


def _eval_func(expr: FuncCall, env: dict):
    name = expr.name
    if name in FUSION_IMPLS:
        args = [eval_expr(a, env) for a in expr.args]
        return FUSION_IMPLS[name](*args)
    if name == "array_cosine_similarity":
        a = eval_expr(expr.args[0], env)
        b = eval_expr(expr.args[1], env)
        if a is None or b is None:
            return None
        return cosine_similarity(a, b)
    if name == "coalesce":
        for a in expr.args:
            value = eval_expr(a, env)
            if value is not None:
                return value
        return None
    if name in _SIMPLE_FUNCS:
        args = [eval_expr(a, env) for a in expr.args]
        if _null_in(args):
            return None
        return _SIMPLE_FUNCS[name](*args)
    if name in AGG_FUNCS:
        raise ExecError(-1, f"aggregate {name} outside an aggregation context")
    raise ExecError(-1, f"unknown function {name}")


# --- executor --------------------------------------------------------------------


class Executor:
    def __init__(
        self,
        tables: dict[str, Table],
        functions: Optional[FunctionLibrary] = None,
        fts_indexes: Optional[dict] = None,
        catalog=None,
        overrides: Optional[OverrideSet] = None,
    ):
        self.tables = tables
        self.functions = functions
        self.fts_indexes = fts_indexes or {}
        self.catalog = catalog
        self.overrides = overrides
        self.annotations: dict[int, dict] = {}
        self._cte_cache: dict[int, _Relation] = {}

    def execute(self, plan: PlanNode) -> QueryResult:
        self.annotations = {}
        self._cte_cache = {}
        rel = self._exec(plan)
        columns = []
        for i, (_, name) in enumerate(rel.schema):
            values = [row[i] for row in rel.rows]
            columns.append((name, infer_column_type(values)))
        return QueryResult(columns=columns, rows=rel.rows, stats=dict(self.annotations))

    # -- dispatch ----------------------------------------------------------

    def _exec(self, node: PlanNode) -> _Relation:
        t0 = time.perf_counter()
        try:
            method = getattr(self, f"_exec_{node.kind.lower()}")
            rel = method(node)
        except ExecError as e:
            if e.node_id == -1:
                raise ExecError(node.node_id, str(e))
            raise
        note = self.annotations.setdefault(node.node_id, {})
        note["kind"] = node.kind
        note["rows"] = len(rel.rows)
        note.setdefault("wall_time", 0.0)
        note["wall_time"] += time.perf_counter() - t0
        return rel

    # -- leaf nodes ----------------------------------------------------------

    def _exec_scan(self, node: PlanNode) -> _Relation:
        if "function" in node.props:
            return self._introspection(node)
        table_name = node.props.get("table")
        if table_name is None:
            return _Relation(schema=node.schema, rows=[[]])
        table = self.tables.get(table_name)
        if table is None:
            raise ExecError(node.node_id, f"table {table_name} not loaded")
        return _Relation(schema=node.schema, rows=table.rows())

    def _introspection(self, node: PlanNode) -> _Relation:
        from ..catalog import ResourceKind

        fn = node.props["function"]
        rows = []
        if self.catalog is not None:
            if fn == "flock_models":
                for r in self.catalog.list_resources(ResourceKind.MODEL):
                    rows.append([
                        r.name, r.model_id, r.provider_id, r.version, r.scope.value,
                        r.context_window_tokens, r.max_output_tokens,
                    ])
            else:
                for r in self.catalog.list_resources(ResourceKind.PROMPT):
                    rows.append([r.name, r.text, r.version, r.scope.value])
        return _Relation(schema=node.schema, rows=rows)

    def _exec_cteref(self, node: PlanNode) -> _Relation:
        child = node.children[0]
        if child.node_id not in self._cte_cache:
            self._cte_cache[child.node_id] = self._exec(child)
        cached = self._cte_cache[child.node_id]
        return _Relation(schema=node.schema, rows=[list(r) for r in cached.rows])

    # -- relational operators ---------------------------------------------------

    def _exec_join(self, node: PlanNode) -> _Relation:
        left = self._exec(node.children[0])
        right = self._exec(node.children[1])
        kind = node.props["join_kind"]
        if kind == "cross":
            rows = [lr + rr for lr in left.rows for rr in right.rows]
            return _Relation(schema=node.schema, rows=rows)
        left_envs = left.envs()
        right_envs = right.envs()
        left_keys = [eval_expr(node.props["left_key"], env) for env in left_envs]
        right_keys = [eval_expr(node.props["right_key"], env) for env in right_envs]
        by_key: dict = {}
        for i, key in enumerate(right_keys):
            if key is not None:
                by_key.setdefault(key, []).append(i)
        rows = []
        matched_right: set[int] = set()
        left_width = len(left.schema)
        right_width = len(right.schema)
        for i, key in enumerate(left_keys):
            matches = by_key.get(key, []) if key is not None else []
            if matches:
                for j in matches:
                    rows.append(left.rows[i] + right.rows[j])
                    matched_right.add(j)
            elif kind == "full":
                rows.append(left.rows[i] + [None] * right_width)
        if kind == "full":
            for j in range(len(right.rows)):
                if j not in matched_right:
                    rows.append([None] * left_width + right.rows[j])
        return _Relation(schema=node.schema, rows=rows)

    def _exec_filter(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        predicate = node.props["predicate"]
        rows = [
            row
            for row, env in zip(rel.rows, rel.envs())
            if eval_expr(predicate, env) is True
        ]
        return _Relation(schema=node.schema, rows=rows)

    def _exec_window(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        values = [eval_expr(node.props["arg"], env) for env in rel.envs()]
        present = [v for v in values if v is not None]
        peak = max(present) if present else None
        rows = [row + [peak] for row in rel.rows]
        return _Relation(schema=node.schema, rows=rows)

    def _exec_project(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        items = node.props["items"]
        rows = [
            [eval_expr(expr, env) for _, expr in items]
            for env in rel.envs()
        ]
        return _Relation(schema=node.schema, rows=rows)

    def _exec_sort(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        names = [n for _, n in rel.schema]
        rows = list(rel.rows)
        # last key first keeps the multi-key sort stable
        for name, descending in reversed(node.props["keys"]):
            idx = names.index(name)

            def sort_key(row, idx=idx):
                value = row[idx]
                # NULL sorts last ascending / first descending
                return (1, 0) if value is None else (0, value)

            rows.sort(key=sort_key, reverse=descending)
        return _Relation(schema=node.schema, rows=rows)

    def _exec_limit(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        return _Relation(schema=node.schema, rows=rel.rows[: node.props["count"]])

    # -- retrieval ----------------------------------------------------------------

    def _exec_ftsmatch(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        table = node.props["table"]
        index = self.fts_indexes.get(table)
        if index is None:
            raise ExecError(node.node_id, f"no FTS index on table {table}")
        scores = bm25_match(index, node.props["query"])
        rows = []
        for row, env in zip(rel.rows, rel.envs()):
            doc_id = eval_expr(node.props["id_expr"], env)
            rows.append(row + [scores.get(doc_id)])
        return _Relation(schema=node.schema, rows=rows)

    # -- LLM nodes ------------------------------------------------------------------

    def _llm_settings(self, node: PlanNode, call: SemanticCall):
        batch_mode = AUTO
        fmt = SerializationFormat.XML
        template = None
        ov = self.overrides
        if ov is not None and ov.applies_to(node.node_id):
            if ov.batch_mode is not None:
                batch_mode = ov.batch_mode
            if ov.serialization_format is not None:
                fmt = ov.serialization_format
            if ov.prompt_template is not None:
                template = ov.prompt_template
        return batch_mode, fmt, template

    def _record_llm(self, node, call, job, stats, rows_maps, fmt, batch_mode):
        note = self.annotations.setdefault(node.node_id, {})
        preview_rows = rows_maps[: (stats.effective_batch_sizes[0]
                                    if stats.effective_batch_sizes else min(len(rows_maps), 1))]
        if call.name == "llm_embedding":
            prompt_full = "(embedding request: no chat prompt)"
        else:
            prompt_full = build_meta_prompt(
                job.kind, job.prompt_text, preview_rows, fmt, job.contract,
                template=job.template,
            ).full_text
        note["llm"] = {
            "function": call.name,
            "meta_prompt_full": prompt_full,
            "serialization_format": fmt.value,
            "batch_mode": batch_mode.label,
            **stats.to_dict(),
        }

    def _exec_llmscalar(self, node: PlanNode) -> _Relation:
        if self.functions is None:
            raise ExecError(node.node_id, "no function library configured")
        rel = self._exec(node.children[0])
        call: SemanticCall = node.props["call"]
        rows_maps = [
            {label: eval_expr(e, env) for label, e in call.tuple_arg}
            for env in rel.envs()
        ]
        batch_mode, fmt, template = self._llm_settings(node, call)
        if rows_maps:
            values, stats, job = self.functions.run_scalar(
                call.name, list(call.config_args), rows_maps,
                format=fmt, batch_mode=batch_mode, template=template,
            )
        else:
            from ..runtime import InferenceStats

            values, stats = [], InferenceStats()
            job = None
        if job is not None:
            self._record_llm(node, call, job, stats, rows_maps, fmt, batch_mode)
        rows = [row + [v] for row, v in zip(rel.rows, values)]
        return _Relation(schema=node.schema, rows=rows)

    # -- aggregation ------------------------------------------------------------------

    def _exec_aggregate(self, node: PlanNode) -> _Relation:
        return self._aggregate(node)

    def _exec_llmaggregate(self, node: PlanNode) -> _Relation:
        return self._aggregate(node)

    def _aggregate(self, node: PlanNode) -> _Relation:
        rel = self._exec(node.children[0])
        envs = rel.envs()
        group_exprs = node.props["group_by"]
        groups: dict = {}
        order: list = []
        if group_exprs:
            for env in envs:
                key = tuple(self._hashable(eval_expr(g, env)) for g in group_exprs)
                if key not in groups:
                    groups[key] = []
                    order.append(key)
                groups[key].append(env)
        else:
            key = ()
            groups[key] = list(envs)
            order.append(key)
        rows = []
        for key in order:
            group_envs = groups[key]
            row = []
            for name, expr in node.props["items"]:
                row.append(self._eval_agg_item(node, expr, group_envs))
            rows.append(row)
        return _Relation(schema=node.schema, rows=rows)

    @staticmethod
    def _hashable(value):
        if isinstance(value, list):
            return tuple(value)
        if isinstance(value, dict):
            return json.dumps(value, sort_keys=True)
        return value

    def _eval_agg_item(self, node: PlanNode, expr, group_envs: list[dict]):
        if isinstance(expr, FuncCall) and expr.name in AGG_FUNCS and not expr.over_empty:
            return self._eval_plain_aggregate(expr, group_envs)
        if isinstance(expr, SemanticCall) and expr.is_aggregate:
            return self._eval_semantic_aggregate(node, expr, group_envs)
        if isinstance(expr, (BinaryOp, UnaryOp, Cast, IsNull)):
            # mixed expressions: recurse, substituting aggregate results
            rewritten = self._fold_aggregates(node, expr, group_envs)
            env = group_envs[0] if group_envs else {}
            return eval_expr(rewritten, env)
        env = group_envs[0] if group_envs else {}
        return eval_expr(expr, env)

    def _fold_aggregates(self, node, expr, group_envs):
        if isinstance(expr, FuncCall) and expr.name in AGG_FUNCS and not expr.over_empty:
            return Literal(self._eval_plain_aggregate(expr, group_envs))
        if isinstance(expr, SemanticCall) and expr.is_aggregate:
            return Literal(self._eval_semantic_aggregate(node, expr, group_envs))
        if isinstance(expr, BinaryOp):
            return BinaryOp(
                expr.op,
                self._fold_aggregates(node, expr.left, group_envs),
                self._fold_aggregates(node, expr.right, group_envs),
            )
        if isinstance(expr, UnaryOp):
            return UnaryOp(expr.op, self._fold_aggregates(node, expr.operand, group_envs))
        if isinstance(expr, Cast):
            return Cast(
                self._fold_aggregates(node, expr.operand, group_envs),
                expr.type_name, expr.array_length,
            )
        if isinstance(expr, IsNull):
            return IsNull(self._fold_aggregates(node, expr.operand, group_envs), expr.negated)
        return expr

    def _eval_plain_aggregate(self, expr: FuncCall, group_envs: list[dict]):
        if expr.name == "count":
            if expr.args and isinstance(expr.args[0], Star):
                return len(group_envs)
            values = [eval_expr(expr.args[0], env) for env in group_envs]
            return sum(1 for v in values if v is not None)
        values = [eval_expr(expr.args[0], env) for env in group_envs]
        present = [v for v in values if v is not None]
        if not present:
            return None
        if expr.name == "sum":
            return sum(present)
        if expr.name == "avg":
            return sum(present) / len(present)
        if expr.name == "min":
            return min(present)
        if expr.name == "max":
            return max(present)
        raise ExecError(-1, f"unknown aggregate {expr.name}")

    def _eval_semantic_aggregate(self, node: PlanNode, call: SemanticCall, group_envs):
        if self.functions is None:
            raise ExecError(node.node_id, "no function library configured")
        rows_maps = [
            {label: eval_expr(e, env) for label, e in call.tuple_arg}
            for env in group_envs
        ]
        if not rows_maps:
            return None
        batch_mode, fmt, template = self._llm_settings(node, call)
        value, stats, job = self.functions.run_aggregate(
            call.name, list(call.config_args), rows_maps,
            format=fmt, batch_mode=batch_mode, template=template,
        )
        prior = self.annotations.get(node.node_id, {}).get("llm")
        self._record_llm(node, call, job, stats, rows_maps, fmt, batch_mode)
        if prior:  # several groups: accumulate counters
            current = self.annotations[node.node_id]["llm"]
            for k in ("provider_calls", "tuples_sent", "cache_hits"):
                current[k] += prior[k]
            current["effective_batch_sizes"] = (
                prior["effective_batch_sizes"] + current["effective_batch_sizes"]
            )
        return value

    def _exec_ask(self, node: PlanNode) -> _Relation:
        return self._exec(node.children[0])


# --- plan export -----------------------------------------------------------------


def plan_to_export(
    plan: PlanNode,
    annotations: Optional[dict] = None,
    query_wall_time: Optional[float] = None,
) -> dict:
    annotations = annotations or {}

    def export(node: PlanNode) -> dict:
        out: dict = {"node_id": node.node_id, "kind": node.kind}
        label = {}
        for key in ("table", "name", "function", "join_kind", "column", "query"):
            if key in node.props and node.props[key] is not None:
                label[key] = node.props[key]
        if label:
            out["detail"] = label
        note = annotations.get(node.node_id, {})
        if "rows" in note:
            out["rows"] = note["rows"]
            out["wall_time"] = note.get("wall_time")
        if node.kind in ("LlmScalar", "LlmAggregate"):
            call: SemanticCall = node.props["call"]
            llm = note.get("llm")
            if llm is None:
                # not yet executed: static preview with defaults
                from ..functions import _CONTRACTS

                contract = _CONTRACTS.get(call.name, None)
                preview = ""
                if contract is not None and call.name != "llm_embedding":
                    prompt = ""
                    for cfg in call.config_args:
                        prompt = cfg.get("prompt", prompt)
                    schema = [k for k, _ in call.tuple_arg]
                    from ..prompting import build_static_prefix

                    preview = build_static_prefix(
                        call.name, prompt, schema, SerializationFormat.XML, contract
                    )
                llm = {
                    "function": call.name,
                    "meta_prompt_full": preview,
                    "serialization_format": SerializationFormat.XML.value,
                    "batch_mode": "Auto",
                    "effective_batch_sizes": [],
                    "provider_calls": 0,
                    "cache_hits": 0,
                    "wall_time": None,
                }
            out["llm_details"] = llm
        out["children"] = [export(c) for c in node.children]
        return out

    result = {"nodes": export(plan)}
    if query_wall_time is not None:
        result["query_wall_time"] = query_wall_time
    return result
