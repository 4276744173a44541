"""AST node types and structural invariants for decision rules.

A rule is a shallow decision tree: branch conditions are boolean predicates
over numeric features and raw text, and every path ends in a class leaf or
an abstention. Nodes are frozen dataclasses, so a finished AST is immutable
and safe to share across threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Union

from .errors import RuleValidationError


class Verdict(Enum):
    """Outcome of applying a rule to one sample."""

    CLASS0 = "class0"
    CLASS1 = "class1"
    ABSTAIN = "abstain"

    @property
    def signed(self) -> int:
        """Vote value: class 1 -> +1, class 0 -> -1, abstain -> 0."""
        if self is Verdict.CLASS1:
            return 1
        if self is Verdict.CLASS0:
            return -1
        return 0

    @classmethod
    def from_label(cls, label: int) -> "Verdict":
        if label not in (0, 1):
            raise ValueError(f"class label must be 0 or 1, got {label!r}")
        return cls.CLASS1 if label == 1 else cls.CLASS0


class CmpOp(Enum):
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="
    EQ = "=="
    NE = "!="


@dataclass(frozen=True)
class Comparison:
    """Numeric test ``feature <op> value``.

    ``name`` preserves a user-facing feature alias for serialization; the
    canonical spelling of feature *i* is ``x<i>``.
    """

    feature: int
    op: CmpOp
    value: float
    name: str | None = None


@dataclass(frozen=True)
class Contains:
    """Case-insensitive substring test against the sample's raw text."""

    literal: str


@dataclass(frozen=True)
class Matches:
    """Regex search (not full match) against the lowercased raw text."""

    pattern: str


@dataclass(frozen=True)
class And:
    children: tuple["RuleAst", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["RuleAst", ...]


@dataclass(frozen=True)
class Not:
    child: "RuleAst"


@dataclass(frozen=True)
class Leaf:
    verdict: Verdict


@dataclass(frozen=True)
class Branch:
    condition: "RuleAst"
    then: "RuleAst"
    otherwise: "RuleAst"


RuleAst = Union[Comparison, Contains, Matches, And, Or, Not, Leaf, Branch]

CONDITION_NODES = (Comparison, Contains, Matches, And, Or, Not)

DEFAULT_MAX_DEPTH = 8
DEFAULT_MAX_NODES = 64

# Backreferences (and named-group references) are excluded from the accepted
# regex dialect: untrusted patterns must not enable catastrophic backtracking.
_BACKREF_RE = re.compile(r"\\[1-9]|\(\?P=")


@lru_cache(maxsize=1024)
def compile_pattern(pattern: str) -> re.Pattern:
    """Compile a regex literal, rejecting constructs outside the dialect."""
    if _BACKREF_RE.search(pattern):
        raise RuleValidationError(f"backreferences are not supported in regex {pattern!r}")
    try:
        return re.compile(pattern)
    except re.error as exc:
        raise RuleValidationError(f"invalid regex {pattern!r}: {exc}") from None


def rule_depth(ast: RuleAst) -> int:
    """Branch levels along the deepest path; a bare leaf has depth 0."""
    if isinstance(ast, Branch):
        return 1 + max(rule_depth(ast.then), rule_depth(ast.otherwise))
    return 0


def node_count(ast: RuleAst) -> int:
    if isinstance(ast, Branch):
        return 1 + node_count(ast.condition) + node_count(ast.then) + node_count(ast.otherwise)
    if isinstance(ast, (And, Or)):
        return 1 + sum(node_count(c) for c in ast.children)
    if isinstance(ast, Not):
        return 1 + node_count(ast.child)
    return 1


def _check_condition(node: RuleAst) -> None:
    if isinstance(node, (Leaf, Branch)):
        raise RuleValidationError("branch conditions must not contain leaves or branches")
    if isinstance(node, (And, Or)):
        if not node.children:
            raise RuleValidationError("and/or must have at least one operand")
        for child in node.children:
            _check_condition(child)
    elif isinstance(node, Not):
        _check_condition(node.child)
    elif isinstance(node, Comparison):
        if node.feature < 0:
            raise RuleValidationError(f"feature index must be nonnegative, got {node.feature}")
        if not math.isfinite(node.value):
            raise RuleValidationError("comparison constants must be finite")
    elif isinstance(node, Matches):
        compile_pattern(node.pattern)
    elif not isinstance(node, Contains):
        raise RuleValidationError(f"unknown condition node {type(node).__name__}")


def validate(
    ast: RuleAst,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> RuleAst:
    """Check all structural invariants; returns the AST unchanged."""

    def check_rule(node: RuleAst) -> None:
        if isinstance(node, Leaf):
            return
        if isinstance(node, Branch):
            _check_condition(node.condition)
            check_rule(node.then)
            check_rule(node.otherwise)
            return
        raise RuleValidationError(
            f"a rule must end in leaves; found bare {type(node).__name__} in rule position"
        )

    check_rule(ast)
    depth = rule_depth(ast)
    if depth > max_depth:
        raise RuleValidationError(f"rule depth {depth} exceeds the limit of {max_depth}")
    count = node_count(ast)
    if count > max_nodes:
        raise RuleValidationError(f"rule has {count} nodes, more than the limit of {max_nodes}")
    return ast
