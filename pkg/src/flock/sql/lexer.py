"""SQL lexer.

Tokens keep their raw source slice and position, so joining token texts
with the original whitespace reproduces the input exactly. Keywords are
not distinguished here; the parser matches identifiers case-insensitively
against keywords, leaving identifiers case-sensitive as written.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import SyntaxError_

KIND_IDENT = "ident"
KIND_STRING = "string"
KIND_NUMBER = "number"
KIND_OP = "op"
KIND_PUNCT = "punct"
KIND_EOF = "eof"

_OPERATORS = ("::", "<=", ">=", "<>", "!=", "=", "<", ">", "+", "-", "*", "/")
_PUNCT = "(){},.;:[]"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int
    value: object = None  # unescaped string / numeric payload

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.column})"


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(sql)

    def advance(text: str):
        nonlocal line, col
        for ch in text:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1

    while i < n:
        ch = sql[i]
        if ch in " \t\r\n":
            advance(ch)
            i += 1
            continue
        if ch == "-" and sql.startswith("--", i):
            end = sql.find("\n", i)
            if end == -1:
                end = n
            advance(sql[i:end])
            i = end
            continue
        start_line, start_col = line, col
        if ch == "'":
            j = i + 1
            parts = []
            while True:
                if j >= n:
                    raise SyntaxError_("unterminated string literal", start_line, start_col)
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":  # '' escape
                        parts.append("'")
                        j += 2
                        continue
                    break
                parts.append(sql[j])
                j += 1
            text = sql[i : j + 1]
            tokens.append(Token(KIND_STRING, text, start_line, start_col, "".join(parts)))
            advance(text)
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (sql[j].isdigit() or (sql[j] == "." and not seen_dot)):
                if sql[j] == ".":
                    # '..' or '.ident' should not fold into the number
                    if j + 1 >= n or not sql[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            if j < n and sql[j] in "eE":
                k = j + 1
                if k < n and sql[k] in "+-":
                    k += 1
                if k < n and sql[k].isdigit():
                    while k < n and sql[k].isdigit():
                        k += 1
                    j = k
                    seen_dot = True
            text = sql[i:j]
            value = float(text) if seen_dot or "." in text else int(text)
            tokens.append(Token(KIND_NUMBER, text, start_line, start_col, value))
            advance(text)
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            text = sql[i:j]
            tokens.append(Token(KIND_IDENT, text, start_line, start_col))
            advance(text)
            i = j
            continue
        matched: Optional[str] = None
        for op in _OPERATORS:
            if sql.startswith(op, i):
                matched = op
                break
        if matched:
            tokens.append(Token(KIND_OP, matched, start_line, start_col))
            advance(matched)
            i += len(matched)
            continue
        if ch in _PUNCT:
            tokens.append(Token(KIND_PUNCT, ch, start_line, start_col))
            advance(ch)
            i += 1
            continue
        raise SyntaxError_(f"unexpected character {ch!r}", start_line, start_col)

    tokens.append(Token(KIND_EOF, "", line, col))
    return tokens
