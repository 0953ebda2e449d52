"""Controlled management query language.

A deterministic grammar (docs/query_grammar.md) replaces free natural
language.  Keywords are case-insensitive and whitespace does not matter;
goods, organization, and class names are kept verbatim and resolved
against the dataset later, at answer time.

Canonical forms, one per intent:

    why did cost increase in 2010Q2?
    what is profit of ACME in 2010Q2?
    how to increase income in 2010Q3?
    what characteristics are most essential for TN20A?
    what quality complaints are there for TN20A?
    what else buyers can conclude a bargain for TN20A?
    what characteristics are best suited to budget class in 2010?
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EntplanError
from .lexer import LexError, Token, tokenize
from .periods import Period

INTENTS = ("cause-analysis", "metric-lookup", "recommendation",
           "characteristic-ranking", "complaint-listing",
           "bargain-prospecting", "best-characteristics")
METRICS = ("profit", "cost", "sales", "cash-flow", "accounts-receivable", "income")
DIRECTIONS = ("increase", "decrease")
TOPICS = ("quality", "service", "delivery", "price")

_METRIC_WORDS = {"cash-flow": "cash flow", "accounts-receivable": "accounts receivable"}
_DIRECTION_FORMS = {"increase": "increase", "increased": "increase",
                    "decrease": "decrease", "decreased": "decrease"}


class ParseError(EntplanError):
    def __init__(self, position: int, expected: tuple[str, ...], found: str):
        self.position = position
        self.expected = tuple(expected)
        self.found = found
        want = " or ".join(expected) if expected else "end of input"
        super().__init__(f"expected {want} at offset {position}, found {found!r}")


class QueryError(EntplanError):
    """Invalid AST handed to render()."""


@dataclass(frozen=True)
class QueryAST:
    intent: str
    subject: str | None = None       # metric, goods reference, or goods class
    direction: str | None = None
    scope: str = "own"               # "own" or an organization reference
    topic: str | None = None
    period: Period | None = None

    def __post_init__(self):
        if self.intent not in INTENTS:
            raise QueryError(f"unknown intent {self.intent!r}")
        need_period = self.intent in ("cause-analysis", "metric-lookup",
                                      "recommendation", "best-characteristics")
        if need_period and self.period is None:
            raise QueryError(f"{self.intent} requires a period")
        if self.intent in ("cause-analysis", "recommendation") and \
                (self.subject not in METRICS or self.direction not in DIRECTIONS):
            raise QueryError(f"{self.intent} requires a metric and a direction")
        if self.intent == "metric-lookup" and self.subject not in METRICS:
            raise QueryError("metric-lookup requires a metric")
        if self.intent in ("characteristic-ranking", "complaint-listing",
                           "bargain-prospecting", "best-characteristics") \
                and not self.subject:
            raise QueryError(f"{self.intent} requires a subject")
        if self.topic is not None and self.topic not in TOPICS:
            raise QueryError(f"unknown complaint topic {self.topic!r}")


class _Stream:
    def __init__(self, tokens: list[Token], length: int):
        self.tokens = tokens
        self.i = 0
        self.length = length

    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.tokens) - 1)
        return self.tokens[j]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def fail(self, *expected: str) -> ParseError:
        tok = self.peek()
        found = tok.text if tok.kind != "EOF" else "end of input"
        return ParseError(tok.pos, expected, found)

    def word(self, *expected: str) -> str:
        tok = self.peek()
        if tok.kind == "WORD" and (not expected or tok.value in expected):
            self.next()
            return tok.value
        raise self.fail(*(expected or ("a word",)))

    def try_word(self, *options: str) -> str | None:
        tok = self.peek()
        if tok.kind == "WORD" and tok.value in options:
            self.next()
            return tok.value
        return None

    def finish(self) -> None:
        if self.peek().kind == "OP" and self.peek().text == "?":
            self.next()
        tok = self.peek()
        if tok.kind != "EOF":
            raise self.fail("end of question")


def parse(text: str) -> QueryAST:
    """Parse a management question; raises ParseError with the offset and
    the expected tokens on any malformed input."""
    try:
        tokens = tokenize(text)
    except LexError as exc:
        raise ParseError(exc.position, ("a recognized token",), "invalid input") from None
    s = _Stream(tokens, len(text))
    lead = s.try_word("why", "what", "how")
    if lead is None:
        raise s.fail("why", "what", "how")
    if lead == "why":
        ast = _parse_why(s)
    elif lead == "how":
        ast = _parse_how(s)
    else:
        ast = _parse_what(s)
    s.finish()
    return ast


def _parse_period(s: _Stream) -> Period:
    tok = s.peek()
    if tok.kind == "PERIOD":
        s.next()
        return tok.value
    if tok.kind == "NUMBER" and isinstance(tok.value, int) and 1000 <= tok.value <= 9999:
        s.next()
        return Period(tok.value)
    raise s.fail("a period like 2010Q2 or 2010")


def _parse_metric(s: _Stream) -> str:
    tok = s.peek()
    if tok.kind != "WORD":
        raise s.fail(*METRICS)
    if tok.value == "cash":
        s.next()
        s.word("flow")
        return "cash-flow"
    if tok.value == "accounts":
        s.next()
        s.word("receivable")
        return "accounts-receivable"
    if tok.value in METRICS:
        s.next()
        return tok.value
    raise s.fail(*METRICS)


def _parse_direction(s: _Stream) -> str:
    tok = s.peek()
    if tok.kind == "WORD" and tok.value in _DIRECTION_FORMS:
        s.next()
        return _DIRECTION_FORMS[tok.value]
    raise s.fail("increase", "decrease")


def _entity(s: _Stream, stop_words: tuple[str, ...]) -> str:
    """Verbatim name tokens up to a keyword boundary, '?' or end."""
    parts = []
    while True:
        tok = s.peek()
        if tok.kind in ("WORD", "NUMBER", "PERIOD"):
            if tok.kind == "WORD" and tok.value in stop_words:
                break
            parts.append(tok.text)
            s.next()
            continue
        break
    if not parts:
        raise s.fail("a name")
    return " ".join(parts)


def _parse_why(s: _Stream) -> QueryAST:
    s.try_word("did", "is", "are", "was", "were")
    metric = _parse_metric(s)
    direction = _parse_direction(s)
    s.word("in")
    period = _parse_period(s)
    return QueryAST("cause-analysis", subject=metric, direction=direction,
                    period=period)


def _parse_how(s: _Stream) -> QueryAST:
    s.word("to")
    direction = _parse_direction(s)
    s.try_word("the")
    metric = _parse_metric(s)
    s.word("in")
    period = _parse_period(s)
    return QueryAST("recommendation", subject=metric, direction=direction,
                    period=period)


def _parse_what(s: _Stream) -> QueryAST:
    tok = s.peek()
    if tok.kind != "WORD":
        raise s.fail("causes", "characteristics", "is", "are", "else",
                     "complaints", *TOPICS)
    if tok.value == "causes":
        s.next()
        s.word("are")
        s.word("there")
        s.word("for")
        direction = _parse_direction(s)
        s.word("of")
        metric = _parse_metric(s)
        s.word("in")
        return QueryAST("cause-analysis", subject=metric, direction=direction,
                        period=_parse_period(s))
    if tok.value == "characteristics":
        s.next()
        s.word("are")
        if s.try_word("best"):
            s.word("suited")
            s.word("to")
            entity = _entity(s, stop_words=("of", "class"))
            if s.try_word("of"):
                entity = _entity(s, stop_words=("class",))
            s.word("class")
            s.word("in")
            return QueryAST("best-characteristics", subject=entity,
                            period=_parse_period(s))
        s.try_word("the")
        s.word("most")
        s.word("essential")
        s.word("for")
        return QueryAST("characteristic-ranking",
                        subject=_entity(s, stop_words=()))
    if tok.value == "else":
        s.next()
        s.word("buyers")
        s.word("can")
        s.word("conclude")
        s.word("a")
        s.word("bargain")
        s.word("for")
        return QueryAST("bargain-prospecting", subject=_entity(s, stop_words=()))
    if tok.value in TOPICS or tok.value == "complaints":
        topic = None
        if tok.value in TOPICS:
            topic = tok.value
            s.next()
        s.word("complaints")
        s.word("are")
        s.word("there")
        s.word("for")
        return QueryAST("complaint-listing", topic=topic,
                        subject=_entity(s, stop_words=()))
    if tok.value in ("is", "are"):
        s.next()
        metric = _parse_metric(s)
        scope = "own"
        if s.try_word("of"):
            scope = _entity(s, stop_words=("in",))
        s.word("in")
        return QueryAST("metric-lookup", subject=metric, scope=scope,
                        period=_parse_period(s))
    raise s.fail("causes", "characteristics", "is", "are", "else",
                 "complaints", *TOPICS)


def render(ast: QueryAST) -> str:
    """Canonical question text; parse(render(ast)) == ast."""
    metric = _METRIC_WORDS.get(ast.subject, ast.subject)
    if ast.intent == "cause-analysis":
        return f"why did {metric} {ast.direction} in {ast.period}?"
    if ast.intent == "recommendation":
        return f"how to {ast.direction} {metric} in {ast.period}?"
    if ast.intent == "metric-lookup":
        if ast.scope == "own":
            return f"what is {metric} in {ast.period}?"
        return f"what is {metric} of {ast.scope} in {ast.period}?"
    if ast.intent == "characteristic-ranking":
        return f"what characteristics are most essential for {ast.subject}?"
    if ast.intent == "complaint-listing":
        if ast.topic:
            return f"what {ast.topic} complaints are there for {ast.subject}?"
        return f"what complaints are there for {ast.subject}?"
    if ast.intent == "bargain-prospecting":
        return f"what else buyers can conclude a bargain for {ast.subject}?"
    if ast.intent == "best-characteristics":
        return f"what characteristics are best suited to {ast.subject} class in {ast.period}?"
    raise QueryError(f"cannot render intent {ast.intent!r}")
