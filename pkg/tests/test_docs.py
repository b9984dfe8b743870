"""The frozen prefix template in docs/meta-prompt.md must match the code."""

from pathlib import Path

from flock.prompting import (
    ContractKind, OutputContract, SerializationFormat, build_static_prefix,
)

DOC = Path(__file__).parents[1] / "docs" / "meta-prompt.md"


def test_reference_prefix_snapshot():
    rendered = build_static_prefix(
        "llm_filter", "<INSTRUCTION>", ["a", "b"], SerializationFormat.XML,
        OutputContract(ContractKind.BOOL_PER_TUPLE),
    )
    assert rendered in DOC.read_text()


def test_template_skeleton_lines_present():
    doc = DOC.read_text()
    rendered = build_static_prefix(
        "llm_complete", "p", ["x"], SerializationFormat.JSON,
        OutputContract(ContractKind.TEXT_PER_TUPLE),
    )
    for frozen_line in (
        "You are a precise data-processing assistant embedded in a SQL engine.",
        "Output nothing besides that JSON object.",
        "Input tuples follow.",
    ):
        assert frozen_line in doc
        assert frozen_line in rendered
