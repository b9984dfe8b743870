"""Tuple serialization, meta-prompt construction, prefix stability, and
template rendering."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flock.errors import HeterogeneousRows, TemplateError
from flock.prompting import (
    ContractKind, OutputContract, SerializationFormat, build_meta_prompt,
    build_static_prefix, estimate_tokens, render_template, serialize_tuples,
    validate_template,
)

TEXT = OutputContract(ContractKind.TEXT_PER_TUPLE)


def test_estimate_tokens_quarter_characters_rounded_up():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2
    assert estimate_tokens("x" * 4001) == 1001


@settings(max_examples=100)
@given(st.text(max_size=2000))
def test_estimate_tokens_formula(text):
    assert estimate_tokens(text) == math.ceil(len(text) / 4)


def test_xml_serialization_escapes_and_indexes():
    out = serialize_tuples(
        [{"a": "x<y", "b": 1}, {"a": "m&n", "b": None}], SerializationFormat.XML
    )
    lines = out.splitlines()
    assert lines[0] == '<tuple id="0"><a>x&lt;y</a><b>1</b></tuple>'
    assert lines[1] == '<tuple id="1"><a>m&amp;n</a><b></b></tuple>'


def test_json_serialization_has_id_field():
    out = serialize_tuples([{"a": "x"}, {"a": "y"}], SerializationFormat.JSON)
    data = json.loads(out)
    assert data == [{"_id": 0, "a": "x"}, {"_id": 1, "a": "y"}]


def test_markdown_serialization_escapes_pipes():
    out = serialize_tuples([{"a": "x|y"}], SerializationFormat.MARKDOWN)
    lines = out.splitlines()
    assert lines[0] == "| id | a |"
    assert "x\\|y" in lines[2]


def test_heterogeneous_rows_rejected():
    with pytest.raises(HeterogeneousRows):
        serialize_tuples([{"a": 1}, {"b": 2}], SerializationFormat.XML)


def test_prefix_depends_only_on_declared_inputs():
    """Byte-identical prefix across batch contents, sizes, and runs."""
    schema = ["title", "abstract"]
    reference = build_static_prefix(
        "llm_filter", "is it relevant?", schema, SerializationFormat.XML, TEXT
    )
    for rows in ([], [{"title": "a", "abstract": "b"}],
                 [{"title": str(i), "abstract": "x" * i} for i in range(50)]):
        rendered = build_meta_prompt(
            "llm_filter", "is it relevant?", rows or [], SerializationFormat.XML, TEXT
        )
        if rows:
            assert rendered.static_prefix == reference
    again = build_static_prefix(
        "llm_filter", "is it relevant?", schema, SerializationFormat.XML, TEXT
    )
    assert again == reference


def test_prefix_changes_with_each_declared_input():
    base = build_static_prefix("llm_filter", "p", ["a"], SerializationFormat.XML, TEXT)
    assert base != build_static_prefix("llm_complete", "p", ["a"], SerializationFormat.XML, TEXT)
    assert base != build_static_prefix("llm_filter", "q", ["a"], SerializationFormat.XML, TEXT)
    assert base != build_static_prefix("llm_filter", "p", ["b"], SerializationFormat.XML, TEXT)
    assert base != build_static_prefix("llm_filter", "p", ["a"], SerializationFormat.JSON, TEXT)
    assert base != build_static_prefix(
        "llm_filter", "p", ["a"], SerializationFormat.XML,
        OutputContract(ContractKind.BOOL_PER_TUPLE),
    )


def test_meta_prompt_token_estimate_covers_both_parts():
    rows = [{"a": "hello"}]
    rendered = build_meta_prompt("llm_complete", "p", rows, SerializationFormat.XML, TEXT)
    expected = estimate_tokens(rendered.static_prefix + "\n" + rendered.dynamic_suffix)
    assert rendered.estimated_tokens == expected
    assert rendered.full_text.startswith(rendered.static_prefix)
    assert rendered.full_text.endswith(rendered.dynamic_suffix)


def test_contract_text_embedded_per_kind():
    ranking = build_static_prefix(
        "llm_rerank", "p", ["a"], SerializationFormat.XML,
        OutputContract(ContractKind.RANKING),
    )
    assert '{"ranking"' in ranking
    single = build_static_prefix(
        "llm_reduce", "p", ["a"], SerializationFormat.XML,
        OutputContract(ContractKind.SINGLE_TEXT),
    )
    assert '{"answer"' in single
    hinted = build_static_prefix(
        "llm_complete_json", "p", ["a"], SerializationFormat.XML,
        OutputContract(ContractKind.JSON_PER_TUPLE, schema_hint='{"k": "v"}'),
    )
    assert '{"k": "v"}' in hinted


def test_template_override_replaces_layout():
    template = "INSTRUCTION: {{user_prompt}}\nDATA:\n{{tuples}}\nRULES: {{contract}}"
    rendered = build_meta_prompt(
        "llm_complete", "shorten", [{"a": "x"}], SerializationFormat.XML, TEXT,
        template=template,
    )
    assert rendered.full_text.startswith("INSTRUCTION: shorten")
    assert '<tuple id="0">' in rendered.full_text
    # prefix stops where the serialized tuples begin
    assert rendered.static_prefix.endswith("DATA:\n")


def test_template_validation():
    assert validate_template("{{user_prompt}} {{tuples}}") == ["user_prompt", "tuples"]
    with pytest.raises(TemplateError):
        validate_template("{{nope}}")
    with pytest.raises(TemplateError):
        build_meta_prompt(
            "llm_complete", "p", [{"a": 1}], SerializationFormat.XML, TEXT,
            template="{{bogus}}",
        )


def test_render_template_substitutes_all():
    out = render_template("A={{user_prompt}} B={{contract}}", {
        "user_prompt": "u", "tuples": "t", "contract": "c",
    })
    assert out == "A=u B=c"
