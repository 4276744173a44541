"""Rule language: AST, parser, canonical serializer, and evaluator."""

from .errors import EvaluationError, RuleError, RuleSyntaxError, RuleValidationError
from .evaluator import evaluate, signed_vote
from .nodes import (
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
    node_count,
    rule_depth,
    validate,
)
from .parser import ParserConfig, parse
from .rulelog import FeedbackRule, format_rule_line, read_rule_log, write_rule_log
from .serializer import serialize

__all__ = [
    "And",
    "Branch",
    "CmpOp",
    "Comparison",
    "Contains",
    "EvaluationError",
    "FeedbackRule",
    "Leaf",
    "Matches",
    "Not",
    "Or",
    "ParserConfig",
    "RuleAst",
    "RuleError",
    "RuleSyntaxError",
    "RuleValidationError",
    "Verdict",
    "evaluate",
    "format_rule_line",
    "node_count",
    "parse",
    "read_rule_log",
    "rule_depth",
    "serialize",
    "signed_vote",
    "validate",
    "write_rule_log",
]
