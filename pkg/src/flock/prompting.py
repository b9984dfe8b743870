"""Meta-prompt construction and tuple serialization.

A rendered prompt is split into a static prefix (instructions, the user's
prompt, the output contract, format rules) and a dynamic suffix (the
serialized tuple batch). The prefix depends only on the function kind,
the user prompt, the tuple schema, the serialization format, and the
output contract — never on tuple values or batch size — so an inference
server can reuse cached attention state across batches.

The prefix template text is frozen in docs/meta-prompt.md and
snapshot-tested.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import HeterogeneousRows, TemplateError


class SerializationFormat(str, Enum):
    XML = "XML"  # default
    JSON = "JSON"
    MARKDOWN = "MARKDOWN"


class ContractKind(str, Enum):
    TEXT_PER_TUPLE = "TEXT_PER_TUPLE"
    JSON_PER_TUPLE = "JSON_PER_TUPLE"
    BOOL_PER_TUPLE = "BOOL_PER_TUPLE"
    SINGLE_TEXT = "SINGLE_TEXT"
    SINGLE_JSON = "SINGLE_JSON"
    RANKING = "RANKING"


@dataclass(frozen=True)
class OutputContract:
    kind: ContractKind
    schema_hint: Optional[str] = None

    @property
    def per_tuple(self) -> bool:
        return self.kind in (
            ContractKind.TEXT_PER_TUPLE,
            ContractKind.JSON_PER_TUPLE,
            ContractKind.BOOL_PER_TUPLE,
        )


@dataclass(frozen=True)
class RenderedPrompt:
    static_prefix: str
    dynamic_suffix: str
    estimated_tokens: int

    @property
    def full_text(self) -> str:
        return self.static_prefix + "\n" + self.dynamic_suffix


def estimate_tokens(text: str) -> int:
    """Rough token count: one token per 4 characters, rounded up."""
    return math.ceil(len(text) / 4)


# --- tuple serialization ----------------------------------------------------

_XML_ESCAPES = {"&": "&amp;", "<": "&lt;", ">": "&gt;"}


def _xml_escape(s: str) -> str:
    return re.sub(r"[&<>]", lambda m: _XML_ESCAPES[m.group(0)], s)


def _md_escape(s: str) -> str:
    return s.replace("|", "\\|").replace("\n", " ")


def _as_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def _check_keys(rows: list[dict]) -> list[str]:
    if not rows:
        return []
    keys = list(rows[0].keys())
    expected = set(keys)
    for i, row in enumerate(rows[1:], start=1):
        if set(row.keys()) != expected:
            raise HeterogeneousRows(f"row {i} keys differ from row 0")
    return keys


def serialize_tuples(rows: list[dict], format: SerializationFormat) -> str:
    """Serialize a batch of tuples with 0-based batch-local indices."""
    keys = _check_keys(rows)
    if format == SerializationFormat.XML:
        parts = []
        for i, row in enumerate(rows):
            cells = "".join(
                f"<{k}>{_xml_escape(_as_text(row[k]))}</{k}>" for k in keys
            )
            parts.append(f'<tuple id="{i}">{cells}</tuple>')
        return "\n".join(parts)
    if format == SerializationFormat.JSON:
        return json.dumps(
            [{"_id": i, **{k: row[k] for k in keys}} for i, row in enumerate(rows)],
            ensure_ascii=False,
        )
    header = "| id | " + " | ".join(keys) + " |"
    sep = "|" + "---|" * (len(keys) + 1)
    lines = [header, sep]
    for i, row in enumerate(rows):
        lines.append(
            f"| {i} | " + " | ".join(_md_escape(_as_text(row[k])) for k in keys) + " |"
        )
    return "\n".join(lines)


# --- meta-prompt -------------------------------------------------------------

_TASK_FRAMING = {
    "llm_complete": "For each input tuple, produce the text the instruction asks for.",
    "llm_complete_json": "For each input tuple, produce the JSON value the instruction asks for.",
    "llm_filter": "For each input tuple, decide whether it satisfies the condition.",
    "llm_reduce": "Combine ALL input tuples into one output as the instruction asks.",
    "llm_reduce_json": "Combine ALL input tuples into one JSON output as the instruction asks.",
    "llm_rerank": "Rank ALL input tuples from most to least relevant to the instruction.",
    "ask": "Answer using the provided context.",
}

_FORMAT_DOCS = {
    SerializationFormat.XML: (
        'Tuples are serialized as XML: each row is a <tuple id="N"> element whose '
        "children are its column values."
    ),
    SerializationFormat.JSON: (
        "Tuples are serialized as a JSON array of objects; the \"_id\" field of each "
        "object is its tuple id."
    ),
    SerializationFormat.MARKDOWN: (
        "Tuples are serialized as a Markdown pipe table; the first column, id, is the "
        "tuple id."
    ),
}


def _contract_text(contract: OutputContract) -> str:
    k = contract.kind
    if k == ContractKind.TEXT_PER_TUPLE:
        body = (
            'Respond with exactly one JSON object {"answers": [{"id": <tuple id>, '
            '"value": <text>}, ...]} containing one entry per tuple id.'
        )
    elif k == ContractKind.JSON_PER_TUPLE:
        body = (
            'Respond with exactly one JSON object {"answers": [{"id": <tuple id>, '
            '"value": <json>}, ...]} containing one entry per tuple id; each value '
            "must itself be valid JSON."
        )
    elif k == ContractKind.BOOL_PER_TUPLE:
        body = (
            'Respond with exactly one JSON object {"answers": [{"id": <tuple id>, '
            '"value": true|false}, ...]} containing one entry per tuple id; values '
            "are drawn from {true, false}."
        )
    elif k == ContractKind.SINGLE_TEXT:
        body = 'Respond with exactly one JSON object {"answer": <text>} covering all tuples.'
    elif k == ContractKind.SINGLE_JSON:
        body = (
            'Respond with exactly one JSON object {"answer": <json>} covering all '
            "tuples; the answer must itself be valid JSON."
        )
    else:  # RANKING
        body = (
            'Respond with exactly one JSON object {"ranking": [<tuple id>, ...]} '
            "listing every tuple id exactly once, most relevant first."
        )
    if contract.schema_hint:
        body += f" The value must conform to this schema: {contract.schema_hint}"
    return body


def build_static_prefix(
    kind: str,
    user_prompt: str,
    schema: list[str],
    format: SerializationFormat,
    contract: OutputContract,
) -> str:
    framing = _TASK_FRAMING.get(kind, _TASK_FRAMING["llm_complete"])
    return (
        "You are a precise data-processing assistant embedded in a SQL engine.\n"
        f"Task: {framing}\n"
        f"Instruction: {user_prompt}\n"
        f"Tuple columns: {', '.join(schema)}\n"
        f"Input format: {_FORMAT_DOCS[format]}\n"
        f"Output contract: {_contract_text(contract)}\n"
        "Output nothing besides that JSON object.\n"
        "Input tuples follow."
    )


def build_meta_prompt(
    kind: str,
    user_prompt: str,
    rows: list[dict],
    format: SerializationFormat,
    contract: OutputContract,
    template: Optional[str] = None,
) -> RenderedPrompt:
    """Compose the full prompt for one batch.

    ``template`` optionally replaces the built-in prefix+suffix layout; it is
    rendered with ``{{user_prompt}}``, ``{{tuples}}`` and ``{{contract}}``
    placeholders (a template collapses the prefix/suffix split — everything
    before ``{{tuples}}`` becomes the prefix).
    """
    schema = _check_keys(rows)
    suffix = serialize_tuples(rows, format)
    if template is not None:
        rendered = render_template(
            template,
            {
                "user_prompt": user_prompt,
                "tuples": suffix,
                "contract": _contract_text(contract),
            },
        )
        head, sep, tail = rendered.partition(suffix)
        prefix = head if sep else rendered
        suffix = sep + tail if sep else ""
        return RenderedPrompt(prefix, suffix, estimate_tokens(rendered))
    prefix = build_static_prefix(kind, user_prompt, schema, format, contract)
    return RenderedPrompt(prefix, suffix, estimate_tokens(prefix + "\n" + suffix))


_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")
ALLOWED_PLACEHOLDERS = frozenset({"user_prompt", "tuples", "contract"})


def validate_template(template: str) -> list[str]:
    names = _PLACEHOLDER.findall(template)
    unknown = [n for n in names if n not in ALLOWED_PLACEHOLDERS]
    if unknown:
        raise TemplateError(f"unknown placeholders: {', '.join(sorted(set(unknown)))}")
    return names


def render_template(template: str, values: dict) -> str:
    validate_template(template)
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)
