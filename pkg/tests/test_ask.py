"""Natural-language question to SQL: prompt assembly, extraction,
verification, retry."""

import pytest

from flock.ask import (
    ALLOWED_FUNCTIONS, build_ask_prompt, extract_sql, generate_ask_sql,
    schema_ddl, verify_functions,
)
from flock.catalog import ModelResource
from flock.errors import GenerationFailed, SqlError
from flock.mock import MockProvider
from flock.sql import parse

SCHEMAS = {"reviews": ["id", "bank", "review", "stars"], "docs": ["idx", "content"]}

MODEL = ModelResource(
    name="mock-chat", provider_id="mock", model_id="mock-chat",
    context_window_tokens=8192, max_output_tokens=1024, params={},
)


def test_schema_ddl_is_sorted_create_tables():
    ddl = schema_ddl(SCHEMAS)
    lines = ddl.strip().splitlines()
    assert lines[0].startswith("CREATE TABLE docs")
    assert lines[1].startswith("CREATE TABLE reviews")
    assert "bank" in lines[1]


def test_prompt_mentions_schema_and_functions():
    user = build_ask_prompt("best bank?", SCHEMAS)
    assert "CREATE TABLE reviews" in user
    assert "llm_filter" in user
    assert "best bank?" in user


def test_extract_sql_strips_fences_and_adds_semicolon():
    fenced = "```sql\nSELECT * FROM t\n```"
    assert extract_sql(fenced) == "SELECT * FROM t;"
    assert extract_sql("SELECT 1 FROM t;") == "SELECT 1 FROM t;"
    assert extract_sql("  SELECT 2 FROM t ") == "SELECT 2 FROM t;"


def test_verify_functions_accepts_known_set():
    stmt = parse(
        "WITH s AS (SELECT lower(bank) AS b, match_bm25(id, 'x') AS m FROM reviews)"
        " SELECT b, fusion({'a': m, 'b': m}) FROM s;"
    )
    verify_functions(stmt)  # should not raise
    assert "llm_rerank" in ALLOWED_FUNCTIONS


def test_verify_functions_rejects_unknown():
    with pytest.raises(SqlError, match="regexp_matches"):
        verify_functions(parse("SELECT regexp_matches(bank, 'x') FROM reviews;"))


def test_generate_with_default_mock():
    provider = MockProvider()
    sql = generate_ask_sql("what's in docs?", SCHEMAS, MODEL, provider)
    stmt = parse(sql)
    assert stmt is not None
    assert "docs" in sql  # mock targets first table in the DDL listing


def test_generate_retries_once_then_succeeds():
    provider = MockProvider()
    provider.scripted = ["this is not sql", "SELECT bank FROM reviews LIMIT 3;"]
    sql = generate_ask_sql("banks?", SCHEMAS, MODEL, provider)
    assert sql == "SELECT bank FROM reviews LIMIT 3;"
    assert provider.chat_call_count == 2


def test_generate_retry_prompt_includes_parse_error():
    provider = MockProvider()
    provider.scripted = ["garbage &&&", "SELECT 1 FROM reviews;"]
    generate_ask_sql("q", SCHEMAS, MODEL, provider)
    second = provider.calls[-1]
    assert "previous attempt" in second.user_text


def test_generate_fails_after_two_bad_attempts():
    provider = MockProvider()
    provider.scripted = ["nope", "still nope"]
    with pytest.raises(GenerationFailed):
        generate_ask_sql("q", SCHEMAS, MODEL, provider)
    assert provider.chat_call_count == 2


def test_generate_rejects_non_select():
    provider = MockProvider()
    provider.scripted = ["DELETE MODEL('m');", "DELETE MODEL('m');"]
    with pytest.raises(GenerationFailed):
        generate_ask_sql("q", SCHEMAS, MODEL, provider)


def test_generate_rejects_disallowed_function():
    provider = MockProvider()
    provider.scripted = [
        "SELECT regexp_matches(bank, 'x') FROM reviews;",
        "SELECT bank FROM reviews;",
    ]
    sql = generate_ask_sql("q", SCHEMAS, MODEL, provider)
    assert sql == "SELECT bank FROM reviews;"
