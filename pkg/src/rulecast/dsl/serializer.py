"""Canonical single-line text form for rule ASTs.

``parse(serialize(ast))`` reproduces ``ast`` exactly: the serializer always
writes the if/then/else form with an explicit else-branch, parenthesizes by
operator precedence, and prints numbers in shortest round-trip form.
"""

from __future__ import annotations

import math

from .nodes import And, Branch, Comparison, Contains, Leaf, Matches, Not, Or, RuleAst, Verdict

_PREC_TOP, _PREC_OR, _PREC_AND, _PREC_NOT = 0, 1, 2, 3

_LEAF_TEXT = {Verdict.CLASS0: "0", Verdict.CLASS1: "1", Verdict.ABSTAIN: "abstain"}

_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def format_number(value: float) -> str:
    if math.isfinite(value) and value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def _escape(text: str) -> str:
    return "".join(_STRING_ESCAPES.get(ch, ch) for ch in text)


def _cond(node: RuleAst, parent_prec: int) -> str:
    if isinstance(node, Or):
        text = " or ".join(_cond(c, _PREC_OR) for c in node.children)
        prec = _PREC_OR
    elif isinstance(node, And):
        text = " and ".join(_cond(c, _PREC_AND) for c in node.children)
        prec = _PREC_AND
    elif isinstance(node, Not):
        text = f"not {_cond(node.child, _PREC_NOT)}"
        prec = _PREC_NOT
    elif isinstance(node, Comparison):
        name = node.name if node.name is not None else f"x{node.feature}"
        return f"{name} {node.op.value} {format_number(node.value)}"
    elif isinstance(node, Contains):
        return f'contains("{_escape(node.literal)}")'
    elif isinstance(node, Matches):
        return f'matches("{_escape(node.pattern)}")'
    else:
        raise TypeError(f"not a condition node: {type(node).__name__}")
    # <= keeps parens around same-precedence nesting (e.g. an Or inside an
    # Or) so the parsed tree is structurally identical, not just equivalent.
    if prec <= parent_prec:
        return f"({text})"
    return text


def serialize(ast: RuleAst) -> str:
    """Render an AST as canonical rule text."""
    if isinstance(ast, Leaf):
        return _LEAF_TEXT[ast.verdict]
    if isinstance(ast, Branch):
        cond = _cond(ast.condition, _PREC_TOP)
        return f"if {cond} then {serialize(ast.then)} else {serialize(ast.otherwise)}"
    raise TypeError(f"cannot serialize bare condition node {type(ast).__name__} as a rule")
