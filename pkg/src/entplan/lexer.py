"""Token stream shared by the rule-file parser and the query parser.

Tokens: WORD, NUMBER, STRING ("..." with backslash escapes), PERIOD
(2010Q3), VARIABLE (?Name), NEWLINE (only when requested), and
single/double character operators.  Unknown characters raise LexError with
the character offset, which keeps every parser built on this total: any
byte string either tokenizes or reports a position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EntplanError
from .periods import Period

WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")
NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")
PERIOD_RE = re.compile(r"\d{4}[Qq][1-4](?![0-9A-Za-z])")
VARIABLE_RE = re.compile(r"\?[A-Za-z_][A-Za-z0-9_]*")
TWO_CHAR_OPS = ("<=", ">=", "!=")
ONE_CHAR_OPS = "()<>=,+-*/.:?"


class LexError(EntplanError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at offset {position}")


@dataclass(frozen=True)
class Token:
    kind: str      # WORD | NUMBER | STRING | PERIOD | VARIABLE | NEWLINE | OP | EOF
    text: str
    value: object  # parsed value for NUMBER/STRING/PERIOD, lowercased text for WORD
    pos: int


def tokenize(text: str, keep_newlines: bool = False) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            if keep_newlines:
                tokens.append(Token("NEWLINE", "\n", None, i))
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == '"':
            value, end = _read_string(text, i)
            tokens.append(Token("STRING", text[i:end], value, i))
            i = end
            continue
        m = PERIOD_RE.match(text, i)
        if m:
            tokens.append(Token("PERIOD", m.group(), Period.parse(m.group()), i))
            i = m.end()
            continue
        m = NUMBER_RE.match(text, i)
        if m:
            raw = m.group()
            value = float(raw) if "." in raw else int(raw)
            tokens.append(Token("NUMBER", raw, value, i))
            i = m.end()
            continue
        m = VARIABLE_RE.match(text, i)
        if m:
            tokens.append(Token("VARIABLE", m.group(), m.group()[1:], i))
            i = m.end()
            continue
        m = WORD_RE.match(text, i)
        if m:
            tokens.append(Token("WORD", m.group(), m.group().lower(), i))
            i = m.end()
            continue
        if text[i:i + 2] in TWO_CHAR_OPS:
            tokens.append(Token("OP", text[i:i + 2], None, i))
            i += 2
            continue
        if ch in ONE_CHAR_OPS:
            tokens.append(Token("OP", ch, None, i))
            i += 1
            continue
        raise LexError(f"unexpected character {ch!r}", i)
    tokens.append(Token("EOF", "", None, n))
    return tokens


def _read_string(text: str, start: int) -> tuple[str, int]:
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\n":
            break
        out.append(ch)
        i += 1
    raise LexError("unterminated string", start)
