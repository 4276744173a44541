"""Feedback rules and the on-disk rule log.

A rule log is a UTF-8 text file with one rule per line:
``rule_id<TAB>author_id<TAB>anchor<TAB>rule text``. An empty anchor field
means the rule was not elicited on a specific sample. The log is
append-only by convention; ``created_at`` is the line index on load.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .nodes import RuleAst
from .parser import ParserConfig, parse
from .serializer import serialize


@dataclass(frozen=True)
class FeedbackRule:
    """One elicited decision rule plus its provenance."""

    rule: RuleAst
    rule_id: str
    author_id: str
    anchor: str | None = None
    created_at: int = 0


def _check_field(value: str, what: str) -> str:
    if "\t" in value or "\n" in value:
        raise ValueError(f"{what} must not contain tabs or newlines: {value!r}")
    return value


def format_rule_line(rule: FeedbackRule) -> str:
    rule_id = _check_field(rule.rule_id, "rule_id")
    author = _check_field(rule.author_id, "author_id")
    anchor = _check_field(rule.anchor or "", "anchor")
    return f"{rule_id}\t{author}\t{anchor}\t{serialize(rule.rule)}"


def write_rule_log(rules: Iterable[FeedbackRule], path: str | Path) -> None:
    lines = [format_rule_line(r) for r in rules]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_rule_log(path: str | Path, config: ParserConfig | None = None) -> list[FeedbackRule]:
    rules: list[FeedbackRule] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 3)
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
        rule_id, author, anchor, source = parts
        rules.append(
            FeedbackRule(
                rule=parse(source, config),
                rule_id=rule_id,
                author_id=author,
                anchor=anchor or None,
                created_at=len(rules),
            )
        )
    return rules
