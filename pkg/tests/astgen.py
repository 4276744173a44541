"""Random rule-AST and sample generators for property tests.

Generated ASTs satisfy every structural invariant (condition-only branch
conditions, leaves at termini, depth and node limits), and generated
samples always carry both a 5-dim feature vector and text so any rule can
be evaluated against any sample.
"""

import random

import numpy as np

from rulecast.data import Sample
from rulecast.dsl import (
    And,
    Branch,
    CmpOp,
    Comparison,
    Contains,
    Leaf,
    Matches,
    Not,
    Or,
    Verdict,
)

N_FEATURES = 5

WORDS = [
    "great", "watch", "funny", "broke", "caffè", 'say "hi"', "tab\there",
    "new\nline", "back\\slash", "the best", "dull", "Ünïcode",
]

PATTERNS = [
    "great", "wat+ch", "(good|bad)", "^the", "end$", "[0-9]+", "a.?b",
    "it('s|is ) the best", "loved? (it|this)", "colou?r",
]

TEXT_TOKENS = [
    "a", "great", "watch", "the", "best", "it's", "funny", "dull", "bad",
    "good", "caffè", "end", "123", "movie", "colour", "loved", "this",
]


def random_condition(rnd: random.Random, budget: int) -> tuple:
    """Return (node, nodes_used); budget bounds the subtree size."""
    choices = ["cmp", "contains", "matches"]
    if budget >= 3:
        choices += ["and", "or", "not"]
    kind = rnd.choice(choices)
    if kind == "cmp":
        value = rnd.choice([
            float(rnd.randint(-5, 9)),
            round(rnd.uniform(-4.0, 8.0), 3),
            0.5,
            -1.25,
        ])
        return Comparison(rnd.randrange(N_FEATURES), rnd.choice(list(CmpOp)), value), 1
    if kind == "contains":
        return Contains(rnd.choice(WORDS)), 1
    if kind == "matches":
        return Matches(rnd.choice(PATTERNS)), 1
    if kind == "not":
        child, used = random_condition(rnd, budget - 1)
        return Not(child), used + 1
    arity = rnd.randint(2, 3)
    children, total = [], 1
    for _ in range(arity):
        child, used = random_condition(rnd, max(1, (budget - total) // arity))
        children.append(child)
        total += used
    node = And(tuple(children)) if kind == "and" else Or(tuple(children))
    return node, total


def random_leaf(rnd: random.Random) -> Leaf:
    return Leaf(rnd.choice([Verdict.CLASS0, Verdict.CLASS1, Verdict.ABSTAIN]))


def random_rule(rnd: random.Random, max_depth: int = 4) -> tuple:
    if max_depth == 0 or rnd.random() < 0.3:
        return random_leaf(rnd), 1
    cond, cond_used = random_condition(rnd, 6)
    then, then_used = random_rule(rnd, max_depth - 1)
    otherwise, else_used = random_rule(rnd, max_depth - 1)
    return Branch(cond, then, otherwise), 1 + cond_used + then_used + else_used


def random_ast(rnd: random.Random, max_depth: int = 4):
    from rulecast.dsl import node_count

    while True:
        node, _ = random_rule(rnd, max_depth)
        if node_count(node) <= 64:
            return node


def random_sample(rnd: random.Random, ident: str) -> Sample:
    features = np.array([rnd.uniform(-5, 10) for _ in range(N_FEATURES)])
    n_tokens = rnd.randint(0, 8)
    text = " ".join(rnd.choice(TEXT_TOKENS) for _ in range(n_tokens))
    return Sample(id=ident, features=features, text=text)
