"""Recursive-descent parser for the supported SQL subset.

Keywords are case-insensitive; identifiers are case-sensitive as written.
Every input yields either a Statement or a SyntaxError_ carrying the
source position and an expected-token hint — never a crash.
"""

from __future__ import annotations

from typing import Optional

from ..errors import SyntaxError_
from ..functions import AGGREGATE_FUNCTIONS, SEMANTIC_FUNCTIONS
from .ast import (
    Ask, BinaryOp, Cast, ColumnRef, CreateFtsIndex, CreateModel, CreatePrompt,
    CreateTableFromFile, DeleteResource, Expr, FromClause, FuncCall, IsNull,
    Join, Literal, MapLiteral, OrderItem, SelectItem, SelectStatement,
    SemanticCall, Star, Statement, TableRef, UnaryOp, UpdateResource,
)
from .lexer import KIND_EOF, KIND_IDENT, KIND_NUMBER, KIND_OP, KIND_PUNCT, KIND_STRING, Token, tokenize

_RESERVED = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "LIMIT", "JOIN",
    "INNER", "FULL", "OUTER", "ON", "AS", "AND", "OR", "NOT", "ASC", "DESC",
    "WITH", "IS", "NULL", "OVER", "CROSS",
}

_COMPARISONS = {"=", "<>", "!=", "<", "<=", ">", ">="}


def parse(sql_text: str) -> Statement:
    try:
        tokens = tokenize(sql_text)
        return _Parser(tokens).parse_statement_eof()
    except RecursionError:
        raise SyntaxError_("expression nesting too deep", 1, 1)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers --------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != KIND_EOF:
            self.pos += 1
        return tok

    def error(self, expected: str) -> SyntaxError_:
        tok = self.peek()
        got = tok.text or "end of input"
        return SyntaxError_(f"expected {expected}, got {got!r}", tok.line, tok.column)

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == KIND_IDENT and tok.text.upper() in words

    def match_keyword(self, *words: str) -> Optional[str]:
        if self.at_keyword(*words):
            return self.advance().text.upper()
        return None

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise self.error(word)
        return self.advance()

    def match_punct(self, text: str) -> bool:
        tok = self.peek()
        if tok.kind == KIND_PUNCT and tok.text == text:
            self.advance()
            return True
        return False

    def expect_punct(self, text: str) -> None:
        if not self.match_punct(text):
            raise self.error(f"'{text}'")

    def match_op(self, *ops: str) -> Optional[str]:
        tok = self.peek()
        if tok.kind == KIND_OP and tok.text in ops:
            self.advance()
            return tok.text
        return None

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != KIND_IDENT:
            raise self.error(what)
        return self.advance().text

    def expect_string(self, what: str = "string literal") -> str:
        tok = self.peek()
        if tok.kind != KIND_STRING:
            raise self.error(what)
        return self.advance().value  # type: ignore[return-value]

    def expect_number(self) -> object:
        tok = self.peek()
        if tok.kind != KIND_NUMBER:
            raise self.error("number")
        return self.advance().value

    # -- statements ------------------------------------------------------

    def parse_statement_eof(self) -> Statement:
        stmt = self.parse_statement()
        self.match_punct(";")
        if self.peek().kind != KIND_EOF:
            raise self.error("end of statement")
        return stmt

    def parse_statement(self) -> Statement:
        if self.at_keyword("SELECT", "WITH"):
            return self.parse_select()
        if self.at_keyword("CREATE"):
            return self.parse_create()
        if self.at_keyword("UPDATE"):
            return self.parse_update()
        if self.at_keyword("DELETE"):
            return self.parse_delete()
        if self.at_keyword("ASK"):
            self.advance()
            return Ask(question=self.expect_string("question string"))
        raise self.error("SELECT, WITH, CREATE, UPDATE, DELETE or ASK")

    # -- DDL ---------------------------------------------------------------

    def parse_create(self) -> Statement:
        self.expect_keyword("CREATE")
        scope = self.match_keyword("GLOBAL", "LOCAL") or "LOCAL"
        if self.at_keyword("MODEL"):
            self.advance()
            self.expect_punct("(")
            name = self.expect_string("model name")
            self.expect_punct(",")
            model_id = self.expect_string("model id")
            self.expect_punct(",")
            provider = self.expect_string("provider id")
            params: tuple = ()
            if self.match_punct(","):
                params = self.parse_map_literal_entries()
            self.expect_punct(")")
            return CreateModel(name, model_id, provider, scope, params)
        if self.at_keyword("PROMPT"):
            self.advance()
            self.expect_punct("(")
            name = self.expect_string("prompt name")
            self.expect_punct(",")
            text = self.expect_string("prompt text")
            self.expect_punct(")")
            return CreatePrompt(name, text, scope)
        if self.at_keyword("TABLE"):
            self.advance()
            table = self.expect_ident("table name")
            self.expect_keyword("AS")
            self.expect_keyword("FROM")
            path = self.expect_string("file path")
            return CreateTableFromFile(table, path)
        if self.at_keyword("FTS"):
            self.advance()
            self.expect_keyword("INDEX")
            self.expect_keyword("ON")
            table = self.expect_ident("table name")
            self.expect_punct("(")
            id_col = self.expect_ident("id column")
            self.expect_punct(",")
            text_col = self.expect_ident("text column")
            self.expect_punct(")")
            return CreateFtsIndex(table, id_col, text_col)
        raise self.error("MODEL, PROMPT, TABLE or FTS")

    def parse_update(self) -> Statement:
        self.expect_keyword("UPDATE")
        kind = self.match_keyword("MODEL", "PROMPT")
        if not kind:
            raise self.error("MODEL or PROMPT")
        self.expect_punct("(")
        name = self.expect_string("resource name")
        args = []
        while self.match_punct(","):
            args.append(self.expect_string("definition value"))
        self.expect_punct(")")
        return UpdateResource(kind, name, tuple(args))

    def parse_delete(self) -> Statement:
        self.expect_keyword("DELETE")
        scope = self.match_keyword("GLOBAL", "LOCAL") or "LOCAL"
        kind = self.match_keyword("MODEL", "PROMPT")
        if not kind:
            raise self.error("MODEL or PROMPT")
        self.expect_punct("(")
        name = self.expect_string("resource name")
        self.expect_punct(")")
        return DeleteResource(kind, name, scope)

    # -- SELECT --------------------------------------------------------------

    def parse_select(self) -> SelectStatement:
        ctes = []
        if self.match_keyword("WITH"):
            while True:
                name = self.expect_ident("CTE name")
                self.expect_keyword("AS")
                self.expect_punct("(")
                body = self.parse_select()
                self.expect_punct(")")
                ctes.append((name, body))
                if not self.match_punct(","):
                    break
        self.expect_keyword("SELECT")
        items = [self.parse_select_item()]
        while self.match_punct(","):
            items.append(self.parse_select_item())
        from_clause = None
        if self.match_keyword("FROM"):
            from_clause = self.parse_from()
        where = None
        if self.match_keyword("WHERE"):
            where = self.parse_expr()
        group_by: list[Expr] = []
        if self.match_keyword("GROUP"):
            self.expect_keyword("BY")
            group_by.append(self.parse_expr())
            while self.match_punct(","):
                group_by.append(self.parse_expr())
        order_by: list[OrderItem] = []
        if self.match_keyword("ORDER"):
            self.expect_keyword("BY")
            while True:
                expr = self.parse_expr()
                desc = False
                if self.match_keyword("DESC"):
                    desc = True
                else:
                    self.match_keyword("ASC")
                order_by.append(OrderItem(expr, desc))
                if not self.match_punct(","):
                    break
        limit = None
        if self.match_keyword("LIMIT"):
            value = self.expect_number()
            if not isinstance(value, int) or value < 0:
                raise self.error("non-negative integer LIMIT")
            limit = value
        return SelectStatement(
            select_items=tuple(items),
            ctes=tuple(ctes),
            from_clause=from_clause,
            where=where,
            group_by=tuple(group_by),
            order_by=tuple(order_by),
            limit=limit,
        )

    def parse_select_item(self) -> SelectItem:
        if self.peek().kind == KIND_OP and self.peek().text == "*":
            self.advance()
            return SelectItem(Star())
        if (
            self.peek().kind == KIND_IDENT
            and self.peek(1).text == "."
            and self.peek(2).text == "*"
        ):
            table = self.advance().text
            self.advance()
            self.advance()
            return SelectItem(Star(table=table))
        expr = self.parse_expr()
        alias = None
        if self.match_keyword("AS"):
            alias = self.expect_ident("alias")
        elif self.peek().kind == KIND_IDENT and self.peek().text.upper() not in _RESERVED:
            alias = self.advance().text
        return SelectItem(expr, alias)

    def parse_from(self) -> FromClause:
        base = self.parse_table_ref()
        joins: list[Join] = []
        while True:
            if self.match_punct(","):
                joins.append(Join(kind="cross", table=self.parse_table_ref()))
                continue
            kind = None
            if self.at_keyword("FULL"):
                self.advance()
                self.match_keyword("OUTER")
                self.expect_keyword("JOIN")
                kind = "full"
            elif self.at_keyword("INNER"):
                self.advance()
                self.expect_keyword("JOIN")
                kind = "inner"
            elif self.at_keyword("JOIN"):
                self.advance()
                kind = "inner"
            elif self.at_keyword("CROSS"):
                self.advance()
                self.expect_keyword("JOIN")
                joins.append(Join(kind="cross", table=self.parse_table_ref()))
                continue
            if kind is None:
                break
            table = self.parse_table_ref()
            self.expect_keyword("ON")
            left = self.parse_qualified_ref()
            if not self.match_op("="):
                raise self.error("'=' in join condition")
            right = self.parse_qualified_ref()
            joins.append(Join(kind=kind, table=table, left_key=left, right_key=right))
        return FromClause(base=base, joins=tuple(joins))

    def parse_table_ref(self) -> TableRef:
        name = self.expect_ident("table name")
        is_function = False
        if self.peek().kind == KIND_PUNCT and self.peek().text == "(":
            self.advance()
            self.expect_punct(")")
            is_function = True
        alias = None
        if self.match_keyword("AS"):
            alias = self.expect_ident("alias")
        elif self.peek().kind == KIND_IDENT and self.peek().text.upper() not in _RESERVED:
            alias = self.advance().text
        return TableRef(name=name, alias=alias, is_function=is_function)

    def parse_qualified_ref(self) -> ColumnRef:
        first = self.expect_ident("column reference")
        if self.match_punct("."):
            return ColumnRef(name=self.expect_ident("column name"), table=first)
        return ColumnRef(name=first)

    # -- expressions -----------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.match_keyword("OR"):
            left = BinaryOp("OR", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.match_keyword("AND"):
            left = BinaryOp("AND", left, self.parse_not())
        return left

    def parse_not(self) -> Expr:
        if self.match_keyword("NOT"):
            return UnaryOp("NOT", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        left = self.parse_additive()
        if self.at_keyword("IS"):
            self.advance()
            negated = bool(self.match_keyword("NOT"))
            self.expect_keyword("NULL")
            return IsNull(left, negated)
        op = self.match_op(*_COMPARISONS)
        if op:
            return BinaryOp("<>" if op == "!=" else op, left, self.parse_additive())
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while True:
            op = self.match_op("+", "-")
            if not op:
                return left
            left = BinaryOp(op, left, self.parse_multiplicative())

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while True:
            op = self.match_op("*", "/")
            if not op:
                return left
            left = BinaryOp(op, left, self.parse_unary())

    def parse_unary(self) -> Expr:
        if self.match_op("-"):
            return UnaryOp("-", self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        expr = self.parse_primary()
        while self.match_op("::"):
            type_name = self.expect_ident("type name").upper()
            array_length = None
            if self.match_punct("["):
                length = self.expect_number()
                if not isinstance(length, int) or length < 1:
                    raise self.error("positive array length")
                array_length = length
                self.expect_punct("]")
            expr = Cast(expr, type_name, array_length)
        return expr

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == KIND_STRING:
            return Literal(self.advance().value)
        if tok.kind == KIND_NUMBER:
            return Literal(self.advance().value)
        if tok.kind == KIND_PUNCT and tok.text == "(":
            self.advance()
            expr = self.parse_expr()
            self.expect_punct(")")
            return expr
        if tok.kind == KIND_PUNCT and tok.text == "{":
            return MapLiteral(self.parse_map_literal_entries_expr())
        if tok.kind == KIND_OP and tok.text == "*":
            self.advance()
            return Star()
        if tok.kind == KIND_IDENT:
            upper = tok.text.upper()
            if upper == "NULL":
                self.advance()
                return Literal(None)
            if upper == "TRUE":
                self.advance()
                return Literal(True)
            if upper == "FALSE":
                self.advance()
                return Literal(False)
            name = self.advance().text
            if self.peek().kind == KIND_PUNCT and self.peek().text == "(":
                return self.parse_call(name)
            if self.match_punct("."):
                if self.peek().kind == KIND_OP and self.peek().text == "*":
                    self.advance()
                    return Star(table=name)
                member = self.expect_ident("column name")
                if self.peek().kind == KIND_PUNCT and self.peek().text == "(":
                    # qualified function name (e.g. an FTS pseudo-schema);
                    # the qualifier is dropped and the call parsed normally
                    return self.parse_call(member)
                return ColumnRef(name=member, table=name)
            return ColumnRef(name=name)
        raise self.error("expression")

    def parse_call(self, name: str) -> Expr:
        call_tok = self.peek()
        self.expect_punct("(")
        args: list[Expr] = []
        if not (self.peek().kind == KIND_PUNCT and self.peek().text == ")"):
            args.append(self.parse_call_arg())
            while self.match_punct(","):
                args.append(self.parse_call_arg())
        self.expect_punct(")")
        lowered = name.lower()
        if lowered in SEMANTIC_FUNCTIONS:
            return self.make_semantic_call(lowered, args, call_tok)
        over_empty = False
        if self.at_keyword("OVER"):
            self.advance()
            self.expect_punct("(")
            self.expect_punct(")")
            over_empty = True
        return FuncCall(name=lowered, args=tuple(args), over_empty=over_empty)

    def parse_call_arg(self) -> Expr:
        # named arguments (fields:='content') are accepted and ignored by
        # treating the value as the argument
        if (
            self.peek().kind == KIND_IDENT
            and self.peek(1).kind == KIND_PUNCT
            and self.peek(1).text == ":"
            and self.peek(2).kind == KIND_OP
            and self.peek(2).text == "="
        ):
            self.advance()
            self.advance()
            self.advance()
        return self.parse_expr()

    def make_semantic_call(self, name: str, args: list[Expr], tok: Token) -> SemanticCall:
        expected = 2 if name == "llm_embedding" else 3
        if len(args) != expected:
            raise SyntaxError_(
                f"{name} takes exactly {expected} map arguments, got {len(args)}",
                tok.line, tok.column,
            )
        if not all(isinstance(a, MapLiteral) for a in args):
            raise SyntaxError_(
                f"{name} arguments must be map literals", tok.line, tok.column
            )
        config = []
        for arg in args[:-1]:
            literal_map = {}
            for key, value in arg.entries:  # type: ignore[union-attr]
                if not isinstance(value, Literal):
                    raise SyntaxError_(
                        f"{name} configuration map values must be literals",
                        tok.line, tok.column,
                    )
                literal_map[key] = value.value
            config.append(literal_map)
        tuple_entries = args[-1].entries  # type: ignore[union-attr]
        labels = [k for k, _ in tuple_entries]
        if len(set(labels)) != len(labels):
            raise SyntaxError_(f"duplicate tuple labels in {name}", tok.line, tok.column)
        return SemanticCall(
            name=name,
            config_args=tuple(config),
            tuple_arg=tuple(tuple_entries),
            is_aggregate=name in AGGREGATE_FUNCTIONS,
        )

    # map literal used as an expression: values are full expressions
    def parse_map_literal_entries_expr(self) -> tuple:
        self.expect_punct("{")
        entries = []
        if not (self.peek().kind == KIND_PUNCT and self.peek().text == "}"):
            while True:
                key = self.expect_string("map key string")
                self.expect_punct(":")
                entries.append((key, self.parse_expr()))
                if not self.match_punct(","):
                    break
        self.expect_punct("}")
        return tuple(entries)

    # map literal in DDL argument position: values must be literals
    def parse_map_literal_entries(self) -> tuple:
        entries = []
        for key, value in self.parse_map_literal_entries_expr():
            if not isinstance(value, Literal):
                raise self.error("literal map value")
            entries.append((key, value.value))
        return tuple(entries)
