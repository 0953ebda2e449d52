"""Parser for the rule file format.

One rule per block::

    const share_threshold = 0.5

    rule income_region_expansion
    head recommend(income, ?T, region_expansion, ?G)
    when period(?T)
    when share(?G, ?T) as ?S
    when ?S < share_threshold
    explain "the {G} holds a small market share"
    end

Words starting with ``?`` are variables; lowercase words are string
constants unless declared with ``const``; ``table.column`` inside a
built-in call names an aggregate source, and ``key = value`` entries are
row filters.  Conditions may compare arithmetic over terms and built-in
calls.  The token stream is the same lexer the query language uses.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import EntplanError
from ..lexer import LexError, Token, tokenize
from .builtins import BUILTIN_NAMES
from .engine import (Atom, BinOp, Call, ColumnRef, Comparison, Rule, RuleSet,
                     Var, validate_rules)

_COMP_OPS = ("<", "<=", "=", "!=", ">=", ">")


class RuleParseError(EntplanError):
    def __init__(self, message: str, position: int = 0):
        self.position = position
        super().__init__(f"{message} (offset {position})")


class _Parser:
    def __init__(self, tokens: list[Token], consts: dict):
        self.tokens = tokens
        self.i = 0
        self.consts = consts

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def expect_op(self, text: str) -> Token:
        tok = self.next()
        if tok.kind != "OP" or tok.text != text:
            raise RuleParseError(f"expected {text!r}, found {tok.text!r}", tok.pos)
        return tok

    def at_end(self) -> bool:
        return self.peek().kind == "EOF"

    # -- terms and expressions ------------------------------------------------

    def term(self):
        tok = self.next()
        if tok.kind == "VARIABLE":
            return Var(tok.value)
        if tok.kind == "NUMBER":
            return float(tok.value)
        if tok.kind == "STRING":
            return tok.value
        if tok.kind == "PERIOD":
            return tok.value
        if tok.kind == "OP" and tok.text == "-":
            num = self.next()
            if num.kind != "NUMBER":
                raise RuleParseError("expected a number after '-'", num.pos)
            return -float(num.value)
        if tok.kind == "WORD":
            if tok.text in self.consts:
                return self.consts[tok.text]
            return tok.text
        raise RuleParseError(f"unexpected token {tok.text!r}", tok.pos)

    def primary(self):
        tok = self.peek()
        if tok.kind == "OP" and tok.text == "(":
            self.next()
            inner = self.expr()
            self.expect_op(")")
            return inner
        if tok.kind == "WORD" and self._next_is_open_paren():
            if tok.text in BUILTIN_NAMES:
                return self.call()
            raise RuleParseError(
                f"predicate {tok.text!r} cannot appear inside an expression", tok.pos)
        return self.term()

    def _next_is_open_paren(self) -> bool:
        nxt = self.tokens[self.i + 1]
        return nxt.kind == "OP" and nxt.text == "("

    def mul(self):
        node = self.primary()
        while self.peek().kind == "OP" and self.peek().text in ("*", "/"):
            op = self.next().text
            node = BinOp(op, node, self.primary())
        return node

    def expr(self):
        node = self.mul()
        while self.peek().kind == "OP" and self.peek().text in ("+", "-"):
            op = self.next().text
            node = BinOp(op, node, self.mul())
        return node

    # -- atoms and calls --------------------------------------------------------

    def atom(self) -> Atom:
        name = self.next()
        if name.kind != "WORD":
            raise RuleParseError("expected a predicate name", name.pos)
        self.expect_op("(")
        args = []
        if not (self.peek().kind == "OP" and self.peek().text == ")"):
            args.append(self.term())
            while self.peek().kind == "OP" and self.peek().text == ",":
                self.next()
                args.append(self.term())
        self.expect_op(")")
        return Atom(name.text, tuple(args))

    def call(self) -> Call:
        name = self.next().text
        self.expect_op("(")
        args: list = []
        filters: list = []
        while not (self.peek().kind == "OP" and self.peek().text == ")"):
            if args or filters:
                self.expect_op(",")
            tok = self.peek()
            after = self.tokens[self.i + 1]
            if tok.kind == "WORD" and after.kind == "OP" and after.text == "=":
                self.next()
                self.next()
                filters.append((tok.value, self.expr()))
            elif tok.kind == "WORD" and after.kind == "OP" and after.text == ".":
                table = self.next().value
                self.next()
                column = self.next()
                if column.kind != "WORD":
                    raise RuleParseError("expected a column name", column.pos)
                args.append(ColumnRef(table, column.value))
            else:
                args.append(self.expr())
        self.expect_op(")")
        return Call(name, tuple(args), tuple(filters))

    def condition(self):
        """One `when` element: an atom, a boolean/binding call, or a comparison."""
        tok = self.peek()
        if tok.kind == "WORD" and self._next_is_open_paren() \
                and tok.text not in BUILTIN_NAMES:
            return self.atom()
        left = self.expr()
        nxt = self.peek()
        if nxt.kind == "OP" and nxt.text in _COMP_OPS:
            op = self.next().text
            right = self.expr()
            return Comparison(op, left, right)
        if isinstance(left, Call):
            if nxt.kind == "WORD" and nxt.value == "as":
                self.next()
                var = self.next()
                if var.kind != "VARIABLE":
                    raise RuleParseError("expected a ?variable after 'as'", var.pos)
                return Call(left.func, left.args, left.filters, Var(var.value))
            return left
        raise RuleParseError("expected a condition", nxt.pos)


def parse_rules(text: str, validate: bool = True) -> RuleSet:
    try:
        tokens = [t for t in tokenize(text, keep_newlines=True)]
    except LexError as exc:
        raise RuleParseError(str(exc), exc.position) from None

    lines: list[list[Token]] = [[]]
    for tok in tokens:
        if tok.kind == "NEWLINE":
            if lines[-1]:
                lines.append([])
        elif tok.kind == "EOF":
            break
        else:
            lines[-1].append(tok)
    if lines and not lines[-1]:
        lines.pop()

    consts: dict = {}
    rules: list[Rule] = []
    current: dict | None = None
    seen_ids: set[str] = set()

    def line_parser(toks: list[Token]) -> _Parser:
        return _Parser(toks + [Token("EOF", "", None, toks[-1].pos if toks else 0)],
                       consts)

    for toks in lines:
        head_tok = toks[0]
        if head_tok.kind != "WORD":
            raise RuleParseError(f"unexpected {head_tok.text!r}", head_tok.pos)
        keyword = head_tok.value
        rest = toks[1:]
        p = line_parser(rest)
        if keyword == "const":
            if current is not None:
                raise RuleParseError("const declarations go outside rule blocks",
                                     head_tok.pos)
            name = p.next()
            if name.kind != "WORD":
                raise RuleParseError("expected a constant name", name.pos)
            p.expect_op("=")
            consts[name.value] = p.term()
        elif keyword == "rule":
            if current is not None:
                raise RuleParseError("missing 'end' before new rule", head_tok.pos)
            name = p.next()
            if name.kind != "WORD":
                raise RuleParseError("expected a rule name", name.pos)
            if name.text in seen_ids:
                raise RuleParseError(f"duplicate rule id {name.text!r}", name.pos)
            seen_ids.add(name.text)
            current = {"id": name.text, "head": None, "body": [],
                       "explain": [], "group": ""}
        elif current is None:
            raise RuleParseError(f"unexpected {keyword!r} outside a rule block",
                                 head_tok.pos)
        elif keyword == "head":
            current["head"] = p.atom()
        elif keyword == "when":
            current["body"].append(p.condition())
        elif keyword == "explain":
            tok = p.next()
            if tok.kind != "STRING":
                raise RuleParseError("expected a quoted template", tok.pos)
            current["explain"].append(tok.value)
        elif keyword == "group":
            tok = p.next()
            if tok.kind != "WORD":
                raise RuleParseError("expected a group name", tok.pos)
            current["group"] = tok.value
        elif keyword == "end":
            if current["head"] is None:
                raise RuleParseError(f"rule {current['id']!r} has no head",
                                     head_tok.pos)
            rules.append(Rule(current["id"], current["head"],
                              tuple(current["body"]),
                              tuple(current["explain"]), current["group"]))
            current = None
        else:
            raise RuleParseError(f"unknown keyword {keyword!r}", head_tok.pos)
        if not p.at_end():
            leftover = p.peek()
            raise RuleParseError(f"trailing input {leftover.text!r}", leftover.pos)
    if current is not None:
        raise RuleParseError(f"rule {current['id']!r} is missing 'end'", 0)

    ruleset = RuleSet(tuple(rules))
    if validate:
        validate_rules(ruleset.rules, BUILTIN_NAMES)
    return ruleset


def load_rules(path: str | Path, validate: bool = True) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"), validate=validate)
