"""Binder and logical planner.

Turns a parsed SelectStatement into a tree of PlanNodes with stable,
deterministic node ids. Semantic scalar calls are lifted out of
expressions into LlmScalar nodes feeding the consuming operator;
aggregate semantic calls become an LlmAggregate node; ``MAX(x) OVER ()``
becomes a Window node; ``match_bm25`` becomes an FtsMatch node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..catalog import CatalogStore, ResourceKind
from ..errors import BindingError, MisplacedAggregate, UnknownResource
from .ast import (
    BinaryOp, Cast, ColumnRef, FuncCall, IsNull, Literal, MapLiteral,
    OrderItem, SelectStatement, SemanticCall, Star, UnaryOp,
)

AGG_FUNCS = frozenset({"count", "sum", "avg", "min", "max"})

INTROSPECTION_TABLES = {
    "flock_models": ["name", "model_id", "provider_id", "version", "scope",
                     "context_window_tokens", "max_output_tokens"],
    "flock_prompts": ["name", "text", "version", "scope"],
}


@dataclass
class PlanNode:
    node_id: int
    kind: str
    children: tuple
    props: dict
    schema: tuple  # of (qualifier | None, column name)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def _children_of(expr):
    if isinstance(expr, BinaryOp):
        return [expr.left, expr.right]
    if isinstance(expr, UnaryOp):
        return [expr.operand]
    if isinstance(expr, IsNull):
        return [expr.operand]
    if isinstance(expr, Cast):
        return [expr.operand]
    if isinstance(expr, FuncCall):
        return list(expr.args)
    if isinstance(expr, SemanticCall):
        return [v for _, v in expr.tuple_arg]
    if isinstance(expr, MapLiteral):
        return [v for _, v in expr.entries]
    return []


def contains_aggregate(expr) -> bool:
    if isinstance(expr, FuncCall) and expr.name in AGG_FUNCS and not expr.over_empty:
        return True
    if isinstance(expr, SemanticCall) and expr.is_aggregate:
        return True
    return any(contains_aggregate(c) for c in _children_of(expr))


def _rewrite(expr, fn):
    """Bottom-up rewrite; fn may replace any node."""
    if isinstance(expr, BinaryOp):
        expr = BinaryOp(expr.op, _rewrite(expr.left, fn), _rewrite(expr.right, fn))
    elif isinstance(expr, UnaryOp):
        expr = UnaryOp(expr.op, _rewrite(expr.operand, fn))
    elif isinstance(expr, IsNull):
        expr = IsNull(_rewrite(expr.operand, fn), expr.negated)
    elif isinstance(expr, Cast):
        expr = Cast(_rewrite(expr.operand, fn), expr.type_name, expr.array_length)
    elif isinstance(expr, FuncCall):
        expr = FuncCall(expr.name, tuple(_rewrite(a, fn) for a in expr.args), expr.over_empty)
    return fn(expr)


class _Scope:
    """Column resolution over a node schema."""

    def __init__(self, schema: tuple):
        self.schema = schema
        counts: dict[str, int] = {}
        for _, name in schema:
            counts[name] = counts.get(name, 0) + 1
        self.unique_names = {n for n, c in counts.items() if c == 1}
        self.qualified = {(q, n) for q, n in schema}

    def check(self, ref: ColumnRef) -> None:
        if ref.table is not None:
            if (ref.table, ref.name) not in self.qualified:
                raise BindingError(f"unknown column {ref.table}.{ref.name}")
            return
        names = [n for _, n in self.schema]
        if ref.name not in names:
            raise BindingError(f"unknown column {ref.name}")
        if ref.name not in self.unique_names:
            raise BindingError(f"ambiguous column {ref.name}")


class Planner:
    def __init__(self, catalog: Optional[CatalogStore], table_schemas: dict[str, list[str]]):
        self.catalog = catalog
        self.table_schemas = table_schemas
        self._counter = 0

    def _node(self, kind: str, children: list, props: dict, schema: tuple) -> PlanNode:
        node = PlanNode(self._counter, kind, tuple(children), props, schema)
        self._counter += 1
        return node

    def plan(self, stmt: SelectStatement) -> PlanNode:
        node, _ = self._plan_select(stmt, {})
        return node

    # -- select -----------------------------------------------------------

    def _plan_select(self, stmt: SelectStatement, outer_ctes: dict):
        ctes = dict(outer_ctes)
        for name, body in stmt.ctes:
            plan, out_cols = self._plan_select(body, ctes)
            ctes[name] = (plan, out_cols)

        current = self._plan_from(stmt, ctes)

        if stmt.where is not None:
            self._check_expr(stmt.where, _Scope(current.schema), allow_aggregate=False)
            predicate, current = self._lift_scalars(stmt.where, current, stmt)
            current = self._node(
                "Filter", [current], {"predicate": predicate}, current.schema
            )

        has_agg = bool(stmt.group_by) or any(
            contains_aggregate(item.expr) for item in stmt.select_items
        ) or any(contains_aggregate(o.expr) for o in stmt.order_by)

        if has_agg:
            current, out_cols, order_keys = self._plan_aggregate(stmt, current)
        else:
            current, out_cols, order_keys = self._plan_projection(stmt, current)

        if order_keys:
            current = self._node("Sort", [current], {"keys": order_keys}, current.schema)
        if stmt.limit is not None:
            current = self._node("Limit", [current], {"count": stmt.limit}, current.schema)
        visible = [n for _, n in current.schema][: len(out_cols)]
        if len(current.schema) > len(out_cols):
            items = [(n, ColumnRef(n)) for n in visible]
            current = self._node(
                "Project", [current],
                {"items": items, "trim": True},
                tuple((None, n) for n in visible),
            )
        return current, out_cols

    # -- FROM -----------------------------------------------------------------

    def _table_node(self, ref, ctes) -> PlanNode:
        qualifier = ref.alias or ref.name
        if ref.is_function:
            if ref.name not in INTROSPECTION_TABLES:
                raise BindingError(f"unknown table function {ref.name}")
            cols = INTROSPECTION_TABLES[ref.name]
            schema = tuple((qualifier, c) for c in cols)
            return self._node("Scan", [], {"function": ref.name}, schema)
        if ref.name in ctes:
            plan, out_cols = ctes[ref.name]
            schema = tuple((qualifier, c) for c in out_cols)
            return self._node("CteRef", [plan], {"name": ref.name}, schema)
        if ref.name in self.table_schemas:
            schema = tuple((qualifier, c) for c in self.table_schemas[ref.name])
            return self._node("Scan", [], {"table": ref.name}, schema)
        raise BindingError(f"unknown table {ref.name}")

    def _plan_from(self, stmt: SelectStatement, ctes: dict) -> PlanNode:
        if stmt.from_clause is None:
            return self._node("Scan", [], {"table": None}, ())
        current = self._table_node(stmt.from_clause.base, ctes)
        for join in stmt.from_clause.joins:
            right = self._table_node(join.table, ctes)
            schema = current.schema + right.schema
            props: dict = {"join_kind": join.kind}
            if join.kind != "cross":
                _Scope(current.schema).check(join.left_key)
                _Scope(right.schema).check(join.right_key)
                props["left_key"] = join.left_key
                props["right_key"] = join.right_key
            current = self._node("Join", [current, right], props, schema)
        return current

    # -- expression checking ------------------------------------------------

    def _check_expr(self, expr, scope: _Scope, allow_aggregate: bool) -> None:
        if isinstance(expr, ColumnRef):
            scope.check(expr)
            return
        if isinstance(expr, Star):
            raise BindingError("'*' is only allowed as a top-level select item")
        if isinstance(expr, SemanticCall):
            if expr.is_aggregate and not allow_aggregate:
                raise MisplacedAggregate(
                    f"aggregate function {expr.name} is not allowed here"
                )
            self._check_semantic_config(expr)
        if isinstance(expr, FuncCall):
            if expr.name in AGG_FUNCS and not expr.over_empty and not allow_aggregate:
                raise MisplacedAggregate(
                    f"aggregate function {expr.name} is not allowed in WHERE"
                )
            if expr.over_empty and expr.name != "max":
                raise BindingError("only MAX(...) OVER () is supported")
            if expr.name == "count" and expr.args and isinstance(expr.args[0], Star):
                return  # COUNT(*) — nothing further to bind
        for child in _children_of(expr):
            self._check_expr(child, scope, allow_aggregate)

    def _check_semantic_config(self, call: SemanticCall) -> None:
        if self.catalog is None:
            return
        for cfg in call.config_args:
            if "prompt_name" in cfg:
                try:
                    self.catalog.resolve_resource(
                        ResourceKind.PROMPT, cfg["prompt_name"],
                        int(cfg["version"]) if "version" in cfg else None,
                    )
                except Exception:
                    raise UnknownResource(f"prompt '{cfg['prompt_name']}' not in catalog")
            if "model_name" in cfg:
                try:
                    self.catalog.resolve_resource(
                        ResourceKind.MODEL, cfg["model_name"],
                        int(cfg["version"]) if "version" in cfg else None,
                    )
                except Exception:
                    raise UnknownResource(f"model '{cfg['model_name']}' not in catalog")

    # -- lifting scalar side computations -----------------------------------

    def _lift_scalars(self, expr, current: PlanNode, stmt) -> tuple:
        """Replace match_bm25 and scalar llm_* calls in expr with synthetic
        columns computed by FtsMatch / LlmScalar nodes stacked on current."""
        nodes = {"current": current}

        def replace(e):
            if isinstance(e, FuncCall) and e.name == "match_bm25":
                if len(e.args) not in (2, 3) or not isinstance(e.args[1], Literal):
                    raise BindingError("match_bm25 takes (id_column, 'query text')")
                base = stmt.from_clause.base.name if stmt.from_clause else None
                col = f"__fts{self._counter}"
                node = self._node(
                    "FtsMatch", [nodes["current"]],
                    {"table": base, "id_expr": e.args[0], "query": e.args[1].value,
                     "column": col},
                    nodes["current"].schema + ((None, col),),
                )
                nodes["current"] = node
                return ColumnRef(col)
            if isinstance(e, SemanticCall) and not e.is_aggregate:
                col = f"__llm{self._counter}"
                node = self._node(
                    "LlmScalar", [nodes["current"]],
                    {"call": e, "column": col},
                    nodes["current"].schema + ((None, col),),
                )
                nodes["current"] = node
                return ColumnRef(col)
            return e

        rewritten = _rewrite(expr, replace)
        return rewritten, nodes["current"]

    def _lift_windows(self, exprs: list, current: PlanNode) -> tuple:
        """Replace MAX(x) OVER () with columns computed by Window nodes;
        identical window expressions share one node."""
        nodes = {"current": current}
        seen: dict = {}

        def replace(e):
            if isinstance(e, FuncCall) and e.over_empty:
                if e.name != "max" or len(e.args) != 1:
                    raise BindingError("only MAX(expr) OVER () is supported")
                if e in seen:
                    return ColumnRef(seen[e])
                col = f"__win{self._counter}"
                node = self._node(
                    "Window", [nodes["current"]],
                    {"func": "max", "arg": e.args[0], "column": col},
                    nodes["current"].schema + ((None, col),),
                )
                nodes["current"] = node
                seen[e] = col
                return ColumnRef(col)
            return e

        rewritten = [_rewrite(e, replace) for e in exprs]
        return rewritten, nodes["current"]

    # -- projection (non-aggregate) --------------------------------------------

    def _derive_name(self, expr, index: int, used: set) -> str:
        if isinstance(expr, ColumnRef):
            base = expr.name
        elif isinstance(expr, (FuncCall, SemanticCall)):
            base = expr.name
        elif isinstance(expr, Cast):
            return self._derive_name(expr.operand, index, used)
        else:
            base = f"col{index}"
        name = base
        n = 1
        while name in used:
            n += 1
            name = f"{base}_{n}"
        return name

    def _plan_projection(self, stmt: SelectStatement, current: PlanNode):
        scope = _Scope(current.schema)
        # bind-check original expressions (windows/llm calls included)
        for item in stmt.select_items:
            if not isinstance(item.expr, Star):
                self._check_expr(item.expr, scope, allow_aggregate=False)
        for order in stmt.order_by:
            if not self._is_output_ref(order.expr, stmt):
                self._check_expr(order.expr, scope, allow_aggregate=False)

        select_exprs = [item.expr for item in stmt.select_items]
        order_exprs = [o.expr for o in stmt.order_by]
        all_exprs, current = self._lift_windows(select_exprs + order_exprs, current)
        lifted = []
        for e in all_exprs:
            if isinstance(e, Star):
                lifted.append(e)
                continue
            e2, current = self._lift_scalars(e, current, stmt)
            lifted.append(e2)
        select_exprs = lifted[: len(select_exprs)]
        order_exprs = lifted[len(select_exprs):]

        items: list = []
        used: set = set()
        for item, expr in zip(stmt.select_items, select_exprs):
            if isinstance(expr, Star):
                for q, n in current.schema:
                    if n.startswith("__"):
                        continue  # synthetic columns stay hidden
                    if expr.table is not None and q != expr.table:
                        continue
                    name = n if n not in used else f"{q}.{n}"
                    used.add(name)
                    items.append((name, ColumnRef(n, q)))
                continue
            name = item.alias or self._derive_name(item.expr, len(items), used)
            used.add(name)
            items.append((name, expr))
        visible = len(items)
        out_cols = [n for n, _ in items]

        order_keys = []
        for order, expr in zip(stmt.order_by, order_exprs):
            key_name = None
            if isinstance(expr, ColumnRef) and expr.table is None and expr.name in out_cols:
                key_name = expr.name
            else:
                for n, e in items[:visible]:
                    if e == expr:
                        key_name = n
                        break
            if key_name is None:
                key_name = f"__sort{len(items)}"
                items.append((key_name, expr))
            order_keys.append((key_name, order.descending))

        node = self._node(
            "Project", [current], {"items": items, "trim": False},
            tuple((None, n) for n, _ in items),
        )
        return node, out_cols, order_keys

    def _is_output_ref(self, expr, stmt) -> bool:
        if not isinstance(expr, ColumnRef) or expr.table is not None:
            return False
        aliases = {i.alias for i in stmt.select_items if i.alias}
        return expr.name in aliases

    # -- aggregation -------------------------------------------------------------

    def _plan_aggregate(self, stmt: SelectStatement, current: PlanNode):
        scope = _Scope(current.schema)
        for e in stmt.group_by:
            self._check_expr(e, scope, allow_aggregate=False)
        for item in stmt.select_items:
            if isinstance(item.expr, Star):
                raise BindingError("'*' cannot appear in an aggregate query")
            self._check_expr(item.expr, scope, allow_aggregate=True)

        items: list = []
        used: set = set()
        semantic = False
        for i, item in enumerate(stmt.select_items):
            name = item.alias or self._derive_name(item.expr, i, used)
            used.add(name)
            items.append((name, item.expr))
            if self._has_semantic_aggregate(item.expr):
                semantic = True
        visible = len(items)
        out_cols = [n for n, _ in items]

        order_keys = []
        for order in stmt.order_by:
            expr = order.expr
            key_name = None
            if isinstance(expr, ColumnRef) and expr.table is None and expr.name in out_cols:
                key_name = expr.name
            else:
                for n, e in items[:visible]:
                    if e == expr:
                        key_name = n
                        break
            if key_name is None:
                self._check_expr(expr, scope, allow_aggregate=True)
                key_name = f"__sort{len(items)}"
                items.append((key_name, expr))
                if self._has_semantic_aggregate(expr):
                    semantic = True
            order_keys.append((key_name, order.descending))

        kind = "LlmAggregate" if semantic else "Aggregate"
        node = self._node(
            kind, [current],
            {"group_by": list(stmt.group_by), "items": items},
            tuple((None, n) for n, _ in items),
        )
        return node, out_cols, order_keys

    @staticmethod
    def _has_semantic_aggregate(expr) -> bool:
        if isinstance(expr, SemanticCall) and expr.is_aggregate:
            return True
        return any(Planner._has_semantic_aggregate(c) for c in _children_of(expr))


def bind_and_plan(
    stmt: SelectStatement,
    catalog: Optional[CatalogStore],
    table_schemas: dict[str, list[str]],
) -> PlanNode:
    return Planner(catalog, table_schemas).plan(stmt)
