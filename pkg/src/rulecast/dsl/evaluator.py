"""Evaluate rule ASTs against samples.

Evaluation is pure: the same (ast, sample) pair always yields the same
verdict, and nothing is mutated. Text predicates are case-insensitive
(substring match on lowercased text; regex search on lowercased text).
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .errors import EvaluationError
from .nodes import (
    And,
    Branch,
    Comparison,
    Contains,
    Leaf,
    Matches,
    Not,
    Or,
    RuleAst,
    Verdict,
    compile_pattern,
)

if TYPE_CHECKING:  # pragma: no cover
    from ..data import Sample

_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _condition_holds(node: RuleAst, sample: "Sample") -> bool:
    if isinstance(node, And):
        return all(_condition_holds(c, sample) for c in node.children)
    if isinstance(node, Or):
        return any(_condition_holds(c, sample) for c in node.children)
    if isinstance(node, Not):
        return not _condition_holds(node.child, sample)
    if isinstance(node, Comparison):
        features = sample.features
        if features is None or node.feature >= len(features):
            raise EvaluationError(
                f"feature index {node.feature} out of range for sample {sample.id!r}"
            )
        return _CMP[node.op.value](float(features[node.feature]), node.value)
    if isinstance(node, (Contains, Matches)):
        if sample.text is None:
            raise EvaluationError(
                f"text predicate applied to sample {sample.id!r} without text"
            )
        text = sample.text.lower()
        if isinstance(node, Contains):
            return node.literal.lower() in text
        return compile_pattern(node.pattern).search(text) is not None
    raise EvaluationError(f"unexpected node in condition position: {type(node).__name__}")


def evaluate(ast: RuleAst, sample: "Sample") -> Verdict:
    """Walk the rule tree and return its verdict on the sample."""
    node = ast
    while isinstance(node, Branch):
        node = node.then if _condition_holds(node.condition, sample) else node.otherwise
    if isinstance(node, Leaf):
        return node.verdict
    raise EvaluationError(f"rule does not terminate in a leaf: {type(node).__name__}")


def signed_vote(ast: RuleAst, sample: "Sample") -> int:
    """Map the verdict to a vote: class 1 -> +1, class 0 -> -1, abstain -> 0."""
    return evaluate(ast, sample).signed
