"""AST pretty-printer. pretty_print(parse(q)) reparses to an equal AST."""

from __future__ import annotations

from .ast import (
    Ask, BinaryOp, Cast, ColumnRef, CreateFtsIndex, CreateModel, CreatePrompt,
    CreateTableFromFile, DeleteResource, FromClause, FuncCall, IsNull, Join,
    Literal, MapLiteral, OrderItem, SelectItem, SelectStatement, SemanticCall,
    Star, Statement, TableRef, UnaryOp, UpdateResource,
)


def _quote(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


def _literal(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, str):
        return _quote(value)
    return repr(value)


def print_expr(expr) -> str:
    if isinstance(expr, Literal):
        return _literal(expr.value)
    if isinstance(expr, ColumnRef):
        return f"{expr.table}.{expr.name}" if expr.table else expr.name
    if isinstance(expr, Star):
        return f"{expr.table}.*" if expr.table else "*"
    if isinstance(expr, BinaryOp):
        return f"({print_expr(expr.left)} {expr.op} {print_expr(expr.right)})"
    if isinstance(expr, UnaryOp):
        if expr.op == "NOT":
            return f"(NOT {print_expr(expr.operand)})"
        return f"(-{print_expr(expr.operand)})"
    if isinstance(expr, IsNull):
        middle = "IS NOT NULL" if expr.negated else "IS NULL"
        return f"({print_expr(expr.operand)} {middle})"
    if isinstance(expr, Cast):
        suffix = f"[{expr.array_length}]" if expr.array_length else ""
        return f"{print_expr(expr.operand)}::{expr.type_name}{suffix}"
    if isinstance(expr, MapLiteral):
        inner = ", ".join(f"{_quote(k)}: {print_expr(v)}" for k, v in expr.entries)
        return "{" + inner + "}"
    if isinstance(expr, FuncCall):
        args = ", ".join(print_expr(a) for a in expr.args)
        over = " OVER ()" if expr.over_empty else ""
        return f"{expr.name}({args}){over}"
    if isinstance(expr, SemanticCall):
        parts = []
        for cfg in expr.config_args:
            inner = ", ".join(f"{_quote(k)}: {_literal(v)}" for k, v in cfg.items())
            parts.append("{" + inner + "}")
        tuple_inner = ", ".join(
            f"{_quote(k)}: {print_expr(v)}" for k, v in expr.tuple_arg
        )
        parts.append("{" + tuple_inner + "}")
        return f"{expr.name}({', '.join(parts)})"
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def _print_table_ref(ref: TableRef) -> str:
    text = ref.name + ("()" if ref.is_function else "")
    if ref.alias:
        text += f" AS {ref.alias}"
    return text


def _print_from(fc: FromClause) -> str:
    parts = [_print_table_ref(fc.base)]
    for join in fc.joins:
        if join.kind == "cross":
            parts.append(f", {_print_table_ref(join.table)}")
        else:
            kw = "FULL OUTER JOIN" if join.kind == "full" else "INNER JOIN"
            parts.append(
                f" {kw} {_print_table_ref(join.table)} ON "
                f"{print_expr(join.left_key)} = {print_expr(join.right_key)}"
            )
    return "".join(parts)


def _print_select(stmt: SelectStatement) -> str:
    parts = []
    if stmt.ctes:
        ctes = ", ".join(f"{name} AS ({_print_select(body)})" for name, body in stmt.ctes)
        parts.append(f"WITH {ctes}")
    items = []
    for item in stmt.select_items:
        text = print_expr(item.expr)
        if item.alias:
            text += f" AS {item.alias}"
        items.append(text)
    parts.append("SELECT " + ", ".join(items))
    if stmt.from_clause:
        parts.append("FROM " + _print_from(stmt.from_clause))
    if stmt.where is not None:
        parts.append("WHERE " + print_expr(stmt.where))
    if stmt.group_by:
        parts.append("GROUP BY " + ", ".join(print_expr(e) for e in stmt.group_by))
    if stmt.order_by:
        keys = []
        for item in stmt.order_by:
            keys.append(print_expr(item.expr) + (" DESC" if item.descending else ""))
        parts.append("ORDER BY " + ", ".join(keys))
    if stmt.limit is not None:
        parts.append(f"LIMIT {stmt.limit}")
    return " ".join(parts)


def pretty_print(stmt: Statement) -> str:
    if isinstance(stmt, SelectStatement):
        return _print_select(stmt)
    if isinstance(stmt, CreateModel):
        args = [_quote(stmt.name), _quote(stmt.model_id), _quote(stmt.provider)]
        if stmt.params:
            inner = ", ".join(f"{_quote(k)}: {_literal(v)}" for k, v in stmt.params)
            args.append("{" + inner + "}")
        return f"CREATE {stmt.scope} MODEL({', '.join(args)})"
    if isinstance(stmt, CreatePrompt):
        return f"CREATE {stmt.scope} PROMPT({_quote(stmt.name)}, {_quote(stmt.text)})"
    if isinstance(stmt, UpdateResource):
        args = [_quote(stmt.name)] + [_quote(a) for a in stmt.definition]
        return f"UPDATE {stmt.kind}({', '.join(args)})"
    if isinstance(stmt, DeleteResource):
        return f"DELETE {stmt.scope} {stmt.kind}({_quote(stmt.name)})"
    if isinstance(stmt, CreateTableFromFile):
        return f"CREATE TABLE {stmt.table} AS FROM {_quote(stmt.path)}"
    if isinstance(stmt, CreateFtsIndex):
        return f"CREATE FTS INDEX ON {stmt.table}({stmt.id_column}, {stmt.text_column})"
    if isinstance(stmt, Ask):
        return f"ASK {_quote(stmt.question)}"
    raise TypeError(f"unknown statement node {type(stmt).__name__}")
