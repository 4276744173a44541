"""Exceptions raised by the rule language."""


class RuleError(Exception):
    """Base class for rule-language failures."""


class RuleSyntaxError(RuleError):
    """Rule text does not match the grammar."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class RuleValidationError(RuleError):
    """Structurally invalid rule: bad nesting, limits, regex, or features.

    ``line``/``column`` are set when the offending construct has a known
    source position (e.g. an invalid regex literal during parsing).
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class EvaluationError(RuleError):
    """Rule cannot be applied to the given sample."""
