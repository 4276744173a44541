"""Recursive-descent parser for the rule language.

Grammar (keywords are case-insensitive)::

    rule    := "if" cond "then" body ["else" body]
             | cond "=>" outcome ["else" outcome]
    body    := outcome | rule
    cond    := conj {"or" conj}
    conj    := atom {"and" atom}
    atom    := "not" atom | "(" cond ")" | cmp | textpred
    cmp     := feature op number          op := < <= > >= == !=
    textpred:= ("contains" | "matches") "(" string ")"
    outcome := "0" | "1" | "negative" | "positive" | "abstain"

An omitted else-branch means the rule abstains. ``else`` binds to the
nearest ``if``; the canonical serializer always writes the else-branch
explicitly, so serialized rules are never ambiguous.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from .errors import RuleSyntaxError, RuleValidationError
from .nodes import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_NODES,
    And,
    Branch,
    CmpOp,
    Comparison,
    Contains,
    Leaf,
    Matches,
    Not,
    Or,
    RuleAst,
    Verdict,
    compile_pattern,
    validate,
)

MAX_SOURCE_BYTES = 64 * 1024

KEYWORDS = frozenset(
    ["if", "then", "else", "and", "or", "not", "contains", "matches",
     "positive", "negative", "abstain"]
)

_OPS = {"<": CmpOp.LT, "<=": CmpOp.LE, ">": CmpOp.GT, ">=": CmpOp.GE,
        "==": CmpOp.EQ, "!=": CmpOp.NE}

_INDEXED_FEATURE = re.compile(r"^x(\d+)$")
_NUMBER = re.compile(r"-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class ParserConfig:
    """Limits and feature-name table applied while parsing."""

    max_depth: int = DEFAULT_MAX_DEPTH
    max_nodes: int = DEFAULT_MAX_NODES
    feature_names: Mapping[str, int] | None = None


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER STRING OP ARROW LPAREN RPAREN EOF
    text: str
    line: int
    column: int

    def is_keyword(self, word: str) -> bool:
        return self.kind == "IDENT" and self.text.lower() == word


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, pos = 1, 1, 0
    n = len(text)

    def err(message: str, at_line: int | None = None, at_col: int | None = None):
        raise RuleSyntaxError(message, at_line or line, at_col or col)

    while pos < n:
        ch = text[pos]
        if ch == "\n":
            pos += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            pos += 1
            col += 1
            continue
        start_line, start_col = line, col
        if ch == "(":
            tokens.append(Token("LPAREN", "(", line, col))
            pos += 1
            col += 1
            continue
        if ch == ")":
            tokens.append(Token("RPAREN", ")", line, col))
            pos += 1
            col += 1
            continue
        if ch == '"':
            pos += 1
            col += 1
            parts: list[str] = []
            while True:
                if pos >= n or text[pos] == "\n":
                    err("unterminated string literal", start_line, start_col)
                c = text[pos]
                if c == '"':
                    pos += 1
                    col += 1
                    break
                if c == "\\":
                    if pos + 1 >= n:
                        err("unterminated string literal", start_line, start_col)
                    esc = text[pos + 1]
                    if esc not in _ESCAPES:
                        err(f"invalid escape sequence \\{esc}")
                    parts.append(_ESCAPES[esc])
                    pos += 2
                    col += 2
                else:
                    parts.append(c)
                    pos += 1
                    col += 1
            tokens.append(Token("STRING", "".join(parts), start_line, start_col))
            continue
        two = text[pos:pos + 2]
        if two == "=>":
            tokens.append(Token("ARROW", "=>", line, col))
            pos += 2
            col += 2
            continue
        if two in ("<=", ">=", "==", "!="):
            tokens.append(Token("OP", two, line, col))
            pos += 2
            col += 2
            continue
        if ch in "<>":
            tokens.append(Token("OP", ch, line, col))
            pos += 1
            col += 1
            continue
        m = _NUMBER.match(text, pos)
        if m and (ch.isdigit() or ch == "." or ch == "-"):
            tokens.append(Token("NUMBER", m.group(), line, col))
            col += m.end() - pos
            pos = m.end()
            continue
        m = _IDENT.match(text, pos)
        if m:
            tokens.append(Token("IDENT", m.group(), line, col))
            col += m.end() - pos
            pos = m.end()
            continue
        err(f"unexpected character {ch!r}")
    tokens.append(Token("EOF", "", line, col))
    return tokens


@dataclass
class _Parser:
    tokens: list[Token]
    config: ParserConfig
    pos: int = field(default=0)

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise RuleSyntaxError(message, tok.line, tok.column)

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if not tok.is_keyword(word):
            self.error(f"expected '{word}'")
        return self.advance()

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.error(f"expected {what}")
        return self.advance()

    # rule := outcome | "if" cond "then" body ["else" body]
    #       | cond "=>" outcome ["else" outcome]
    # The bare-outcome form covers degenerate single-leaf rules.
    def rule(self) -> RuleAst:
        if self._starts_outcome(self.peek()):
            return self.outcome()
        if self.peek().is_keyword("if"):
            self.advance()
            cond = self.cond()
            self.expect_keyword("then")
            then = self.body()
            if self.peek().is_keyword("else"):
                self.advance()
                otherwise = self.body()
            else:
                otherwise = Leaf(Verdict.ABSTAIN)
            return Branch(cond, then, otherwise)
        cond = self.cond()
        if self.peek().kind != "ARROW":
            self.error("expected '=>'")
        self.advance()
        then = self.outcome()
        if self.peek().is_keyword("else"):
            self.advance()
            otherwise = self.outcome()
        else:
            otherwise = Leaf(Verdict.ABSTAIN)
        return Branch(cond, then, otherwise)

    def body(self) -> RuleAst:
        tok = self.peek()
        if self._starts_outcome(tok):
            return self.outcome()
        # "(if ...)" is a parenthesized nested rule, not a condition group.
        if tok.kind == "LPAREN" and self.tokens[self.pos + 1].is_keyword("if"):
            self.advance()
            inner = self.rule()
            self.expect("RPAREN", "')'")
            return inner
        return self.rule()

    @staticmethod
    def _starts_outcome(tok: Token) -> bool:
        if tok.kind == "NUMBER":
            return True
        return tok.kind == "IDENT" and tok.text.lower() in ("positive", "negative", "abstain")

    def outcome(self) -> Leaf:
        tok = self.peek()
        if tok.kind == "NUMBER":
            if tok.text == "0":
                self.advance()
                return Leaf(Verdict.CLASS0)
            if tok.text == "1":
                self.advance()
                return Leaf(Verdict.CLASS1)
            self.error("expected outcome: 0, 1, negative, positive, or abstain")
        if tok.kind == "IDENT":
            word = tok.text.lower()
            if word == "positive":
                self.advance()
                return Leaf(Verdict.CLASS1)
            if word == "negative":
                self.advance()
                return Leaf(Verdict.CLASS0)
            if word == "abstain":
                self.advance()
                return Leaf(Verdict.ABSTAIN)
        self.error("expected outcome: 0, 1, negative, positive, or abstain")

    def cond(self) -> RuleAst:
        terms = [self.conj()]
        while self.peek().is_keyword("or"):
            self.advance()
            terms.append(self.conj())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def conj(self) -> RuleAst:
        terms = [self.atom()]
        while self.peek().is_keyword("and"):
            self.advance()
            terms.append(self.atom())
        return terms[0] if len(terms) == 1 else And(tuple(terms))

    def atom(self) -> RuleAst:
        tok = self.peek()
        if tok.is_keyword("not"):
            self.advance()
            return Not(self.atom())
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.cond()
            self.expect("RPAREN", "')'")
            return inner
        if tok.is_keyword("contains") or tok.is_keyword("matches"):
            self.advance()
            self.expect("LPAREN", "'('")
            lit = self.expect("STRING", "string literal")
            self.expect("RPAREN", "')'")
            if tok.is_keyword("contains"):
                return Contains(lit.text)
            try:
                compile_pattern(lit.text)
            except RuleValidationError as exc:
                raise RuleValidationError(str(exc), lit.line, lit.column) from None
            return Matches(lit.text)
        if tok.kind == "IDENT":
            if tok.text.lower() in KEYWORDS:
                self.error(f"unexpected keyword '{tok.text}'")
            self.advance()
            feature, name = self._resolve_feature(tok)
            op_tok = self.expect("OP", "comparison operator")
            num_tok = self.expect("NUMBER", "number")
            return Comparison(feature, _OPS[op_tok.text], float(num_tok.text), name)
        self.error("expected a condition")

    def _resolve_feature(self, tok: Token) -> tuple[int, str | None]:
        m = _INDEXED_FEATURE.match(tok.text)
        if m:
            return int(m.group(1)), None
        names = self.config.feature_names
        if names is not None and tok.text in names:
            return names[tok.text], tok.text
        raise RuleValidationError(f"unknown feature name {tok.text!r}", tok.line, tok.column)


def parse(text: str, config: ParserConfig | None = None) -> RuleAst:
    """Parse rule source text into a validated AST."""
    config = config or ParserConfig()
    if not text or not text.strip():
        raise RuleSyntaxError("rule text is empty", 1, 1)
    if len(text.encode("utf-8")) > MAX_SOURCE_BYTES:
        raise RuleSyntaxError(f"rule text exceeds {MAX_SOURCE_BYTES} bytes", 1, 1)
    parser = _Parser(_tokenize(text), config)
    ast = parser.rule()
    trailing = parser.peek()
    if trailing.kind != "EOF":
        parser.error("unexpected trailing input", trailing)
    return validate(ast, config.max_depth, config.max_nodes)
