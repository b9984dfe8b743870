"""AST node definitions for the supported SQL subset plus the DDL
extensions (MODEL/PROMPT resources, CSV ingestion, FTS index, ASK)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


# --- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: object  # str | int | float | bool | None


@dataclass(frozen=True)
class ColumnRef:
    name: str
    table: Optional[str] = None


@dataclass(frozen=True)
class Star:
    table: Optional[str] = None


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # NOT, -
    operand: "Expr"


@dataclass(frozen=True)
class IsNull:
    operand: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class Cast:
    operand: "Expr"
    type_name: str
    array_length: Optional[int] = None


@dataclass(frozen=True)
class MapLiteral:
    entries: tuple  # tuple of (key: str, Expr)


@dataclass(frozen=True)
class FuncCall:
    name: str
    args: tuple
    over_empty: bool = False  # MAX(expr) OVER ()


@dataclass(frozen=True)
class SemanticCall:
    """An llm_* call: literal config maps plus one tuple-binding map."""

    name: str
    config_args: tuple  # tuple of dict[str, object] (literal values only)
    tuple_arg: tuple  # tuple of (label: str, Expr)
    is_aggregate: bool = False


Expr = Union[
    Literal, ColumnRef, Star, BinaryOp, UnaryOp, IsNull, Cast, MapLiteral,
    FuncCall, SemanticCall,
]


# --- select ------------------------------------------------------------------

@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: Optional[str] = None


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: Optional[str] = None
    is_function: bool = False  # introspection table functions


@dataclass(frozen=True)
class Join:
    kind: str  # 'inner' | 'full' | 'cross'
    table: TableRef
    left_key: Optional[ColumnRef] = None
    right_key: Optional[ColumnRef] = None


@dataclass(frozen=True)
class FromClause:
    base: TableRef
    joins: tuple = ()


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class SelectStatement:
    select_items: tuple
    ctes: tuple = ()  # tuple of (name, SelectStatement)
    from_clause: Optional[FromClause] = None
    where: Optional[Expr] = None
    group_by: tuple = ()
    order_by: tuple = ()
    limit: Optional[int] = None


# --- DDL / commands ----------------------------------------------------------

@dataclass(frozen=True)
class CreateModel:
    name: str
    model_id: str
    provider: str
    scope: str = "LOCAL"
    params: tuple = ()  # tuple of (key, literal value)


@dataclass(frozen=True)
class CreatePrompt:
    name: str
    text: str
    scope: str = "LOCAL"


@dataclass(frozen=True)
class UpdateResource:
    kind: str  # MODEL | PROMPT
    name: str
    definition: tuple  # positional literal args after the name


@dataclass(frozen=True)
class DeleteResource:
    kind: str
    name: str
    scope: str = "LOCAL"


@dataclass(frozen=True)
class CreateTableFromFile:
    table: str
    path: str


@dataclass(frozen=True)
class CreateFtsIndex:
    table: str
    id_column: str
    text_column: str


@dataclass(frozen=True)
class Ask:
    question: str


Statement = Union[
    SelectStatement, CreateModel, CreatePrompt, UpdateResource, DeleteResource,
    CreateTableFromFile, CreateFtsIndex, Ask,
]
