"""Lexer, parser, and pretty-printer round-trip tests."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flock.errors import SyntaxError_
from flock.sql import parse, pretty_print, tokenize
from flock.sql.ast import (
    Ask, BinaryOp, Cast, ColumnRef, CreateFtsIndex, CreateModel, CreatePrompt,
    CreateTableFromFile, DeleteResource, FuncCall, IsNull, Literal, MapLiteral,
    SelectStatement, SemanticCall, Star, UpdateResource,
)

CORPUS = sorted(Path(__file__).parent.glob("corpus/*.sql"))


def split_statements(text):
    out, buf, in_str = [], [], False
    for ch in text:
        if ch == "'":
            in_str = not in_str
        if ch == ";" and not in_str:
            stmt = "".join(buf).strip()
            if stmt and not all(
                line.strip().startswith("--") or not line.strip()
                for line in stmt.splitlines()
            ):
                out.append(stmt + ";")
            buf = []
        else:
            buf.append(ch)
    return out


# --- lexer ----------------------------------------------------------------------

def test_tokenize_positions_and_kinds():
    toks = tokenize("SELECT x\nFROM t;")
    kinds = [(t.kind, t.text) for t in toks]
    assert kinds == [
        ("ident", "SELECT"), ("ident", "x"), ("ident", "FROM"),
        ("ident", "t"), ("punct", ";"), ("eof", ""),
    ]
    assert (toks[0].line, toks[0].column) == (1, 1)
    assert (toks[2].line, toks[2].column) == (2, 1)


def test_tokenize_string_escapes_and_numbers():
    toks = tokenize("'it''s', 1.5, 42, -3")
    assert toks[0].value == "it's"
    assert toks[2].value == 1.5
    assert toks[4].value == 42


def test_tokenize_operators_and_comments():
    toks = tokenize("a::DOUBLE -- trailing\n<= b <> c")
    texts = [t.text for t in toks if t.kind != "eof"]
    assert texts == ["a", "::", "DOUBLE", "<=", "b", "<>", "c"]


def test_tokenize_unterminated_string():
    with pytest.raises(SyntaxError_):
        tokenize("SELECT 'oops")


def test_tokenize_unexpected_character():
    with pytest.raises(SyntaxError_) as exc:
        tokenize("SELECT @x")
    assert exc.value.column == 8


# --- parser: expressions ----------------------------------------------------------

def q(expr_sql):
    stmt = parse(f"SELECT {expr_sql} FROM t;")
    return stmt.select_items[0].expr


def test_parse_precedence():
    e = q("1 + 2 * 3 = 7 AND NOT x OR y")
    assert isinstance(e, BinaryOp) and e.op == "OR"
    left = e.left
    assert left.op == "AND"
    cmp_ = left.left
    assert cmp_.op == "="
    assert cmp_.left.op == "+"
    assert cmp_.left.right.op == "*"


def test_parse_is_null_and_cast():
    e = q("a.b IS NOT NULL")
    assert isinstance(e, IsNull) and e.negated
    assert e.operand == ColumnRef(table="a", name="b")
    c = q("v::DOUBLE[1536]")
    assert isinstance(c, Cast) and c.type_name == "DOUBLE" and c.array_length == 1536


def test_parse_named_arg_becomes_positional():
    e = q("fts_main_docs.match_bm25(idx, 'joins', fields := 'content')")
    assert isinstance(e, FuncCall)
    assert e.name == "match_bm25"  # qualifier dropped
    assert [type(a) for a in e.args] == [ColumnRef, Literal, Literal]
    assert e.args[2].value == "content"


def test_parse_window_over_empty():
    e = q("MAX(score) OVER ()")
    assert isinstance(e, FuncCall) and e.over_empty


def test_parse_semantic_call_shape():
    e = q(
        "llm_filter({'model_name': 'm'}, {'prompt_name': 'p', 'version': 2},"
        " {'text': content, 'n': 1})"
    )
    assert isinstance(e, SemanticCall) and e.name == "llm_filter"
    assert list(e.config_args) == [
        {"model_name": "m"}, {"prompt_name": "p", "version": 2},
    ]
    assert dict(e.tuple_arg)["text"] == ColumnRef(table=None, name="content")


def test_parse_semantic_call_requires_tuple_of_columns():
    with pytest.raises(SyntaxError_):
        parse("SELECT llm_complete({'model_name': 'm'}) FROM t;")


def test_parse_map_literal_expression():
    e = q("fusion({'a': s1, 'b': s2})")
    assert isinstance(e, FuncCall)
    assert isinstance(e.args[0], MapLiteral)
    assert [k for k, _ in e.args[0].entries] == ["a", "b"]


# --- parser: statements ----------------------------------------------------------

def test_parse_select_clauses():
    stmt = parse(
        "WITH c AS (SELECT a FROM t) "
        "SELECT c.a AS x, COUNT(*) FROM c INNER JOIN u ON c.a = u.a "
        "WHERE c.a > 1 GROUP BY c.a ORDER BY x DESC LIMIT 3;"
    )
    assert isinstance(stmt, SelectStatement)
    assert [name for name, _ in stmt.ctes] == ["c"]
    assert stmt.select_items[0].alias == "x"
    assert stmt.from_clause.joins[0].kind == "inner"
    assert stmt.group_by and stmt.order_by[0].descending
    assert stmt.limit == 3


def test_parse_full_outer_and_cross_join():
    stmt = parse("SELECT * FROM a FULL OUTER JOIN b ON a.k = b.k;")
    assert stmt.from_clause.joins[0].kind == "full"
    stmt = parse("SELECT * FROM a, b;")
    assert stmt.from_clause.joins[0].kind == "cross"


def test_parse_ddl_statements():
    s = parse("CREATE GLOBAL MODEL('m', 'gpt-4o', 'openai');")
    assert isinstance(s, CreateModel) and s.scope == "GLOBAL"
    s = parse("CREATE MODEL('m', 'gpt-4o', 'openai', {'context_window': 100, 'max_output_tokens': 10});")
    assert dict(s.params) == {"context_window": 100, "max_output_tokens": 10}
    s = parse("CREATE LOCAL PROMPT('p', 'text');")
    assert isinstance(s, CreatePrompt) and s.scope == "LOCAL"
    s = parse("UPDATE PROMPT('p', 'new text');")
    assert isinstance(s, UpdateResource) and s.kind == "PROMPT"
    s = parse("DELETE MODEL('m');")
    assert isinstance(s, DeleteResource)
    s = parse("CREATE TABLE docs AS FROM 'docs.csv';")
    assert isinstance(s, CreateTableFromFile) and s.path == "docs.csv"
    s = parse("CREATE FTS INDEX ON docs(idx, content);")
    assert isinstance(s, CreateFtsIndex)
    assert (s.id_column, s.text_column) == ("idx", "content")
    s = parse("ASK 'top banks by sentiment?';")
    assert isinstance(s, Ask) and "banks" in s.question


def test_parse_table_function_and_star():
    stmt = parse("SELECT t.* FROM flock_models() AS t;")
    assert isinstance(stmt.select_items[0].expr, Star)
    assert stmt.from_clause.base.is_function
    assert stmt.from_clause.base.alias == "t"


def test_syntax_error_reports_position():
    with pytest.raises(SyntaxError_) as exc:
        parse("SELECT * FROM t WHERE (")
    assert exc.value.line == 1
    assert exc.value.column >= 23
    assert "expected" in str(exc.value).lower()


def test_trailing_garbage_rejected():
    with pytest.raises(SyntaxError_):
        parse("SELECT 1 FROM t; SELECT 2")


# --- corpus round trips -----------------------------------------------------------

@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.name)
def test_corpus_parses_and_round_trips(path):
    for stmt_sql in split_statements(path.read_text()):
        ast = parse(stmt_sql)
        printed = pretty_print(ast)
        assert parse(printed) == ast


def test_pretty_print_round_trip_examples():
    samples = [
        "SELECT a, b + 1 AS c FROM t WHERE a IS NULL ORDER BY c DESC LIMIT 2;",
        "SELECT * FROM a FULL OUTER JOIN b ON a.k = b.k;",
        "WITH x AS (SELECT 1 AS n FROM t) SELECT n FROM x;",
        "SELECT v::DOUBLE[8] FROM t;",
        "CREATE TABLE d AS FROM 'f.csv';",
        "ASK 'what''s up?';",
    ]
    for sql in samples:
        assert parse(pretty_print(parse(sql))) == parse(sql)


# --- fuzz: lexer/parser never crash with non-SyntaxError -----------------------------

@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="SELECT FROMWHERE()';*,.=<>1x\n", max_size=60))
def test_parser_raises_only_syntax_errors(soup):
    try:
        parse(soup)
    except SyntaxError_:
        pass
