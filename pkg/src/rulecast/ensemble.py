"""Feedback ensemble and the mixture classifier.

The feedback score squashes a weighted sum of rule votes:

    C_feedback(x) = sigmoid(sum_i f_i(x) * sim(anchor_i, x) * theta_i)

with f_i(x) in {-1, 0, +1}. The deployed classifier is the convex mixture

    C(x) = alpha * C_hist(x) + (1 - alpha) * C_feedback(x)

trained with BCE loss; both parameter blocks share the common factor
(1-y)/(1-C) - y/C, scaled by alpha (historical weights) or 1-alpha (rule
weights). Instances are immutable snapshots: training and rule insertion
return new objects, so concurrent readers always see a consistent model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, Sample, rng_from_seed
from .dsl import FeedbackRule, ParserConfig, read_rule_log, signed_vote, write_rule_log
from .models import (
    LinearModel,
    TrainConfig,
    predict_proba,
    predict_proba_matrix,
    sigmoid,
    train_logistic,
)


@dataclass(frozen=True)
class SimilarityConfig:
    """How much a rule's vote counts on samples away from its anchor."""

    kind: str = "constant"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "rbf"):
            raise ValueError(f"unknown similarity kind {self.kind!r}")
        if self.kind == "rbf" and (self.bandwidth is None or self.bandwidth <= 0):
            raise ValueError("rbf similarity requires bandwidth > 0")

    @staticmethod
    def constant() -> "SimilarityConfig":
        return SimilarityConfig(kind="constant")

    @staticmethod
    def rbf(bandwidth: float) -> "SimilarityConfig":
        return SimilarityConfig(kind="rbf", bandwidth=bandwidth)


@dataclass(frozen=True)
class FeedbackEnsemble:
    rules: tuple[FeedbackRule, ...]
    weights: np.ndarray
    similarity: SimilarityConfig
    anchors: tuple[np.ndarray | None, ...]

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)
        if arr.shape != (len(self.rules),):
            raise ValueError("weights length must equal the number of rules")
        if not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        if len(self.anchors) != len(self.rules):
            raise ValueError("anchors length must equal the number of rules")

    @classmethod
    def empty(cls, similarity: SimilarityConfig | None = None) -> "FeedbackEnsemble":
        return cls(
            rules=(),
            weights=np.zeros(0),
            similarity=similarity or SimilarityConfig.constant(),
            anchors=(),
        )

    def __len__(self) -> int:
        return len(self.rules)


def add_rule(
    ens: FeedbackEnsemble,
    rule: FeedbackRule,
    init_weight: float = 1.0,
    anchor_features: np.ndarray | None = None,
) -> FeedbackEnsemble:
    """Append a rule with its initial trust weight; existing weights are
    untouched."""
    if any(r.rule_id == rule.rule_id for r in ens.rules):
        raise ValueError(f"duplicate rule_id {rule.rule_id!r}")
    return FeedbackEnsemble(
        rules=ens.rules + (rule,),
        weights=np.append(ens.weights, float(init_weight)),
        similarity=ens.similarity,
        anchors=ens.anchors + (anchor_features,),
    )


def _similarity(ens: FeedbackEnsemble, rule_index: int, sample: Sample) -> float:
    if ens.similarity.kind == "constant":
        return 1.0
    anchor = ens.anchors[rule_index]
    if anchor is None:
        raise ValueError(
            f"rule {ens.rules[rule_index].rule_id!r} has no anchor features; "
            "rbf similarity needs one"
        )
    if sample.features is None:
        raise ValueError(f"sample {sample.id!r} has no features for rbf similarity")
    delta = sample.features - anchor
    bw = ens.similarity.bandwidth
    return float(np.exp(-float(delta @ delta) / (2.0 * bw * bw)))


def vote_vector(ens: FeedbackEnsemble, sample: Sample) -> np.ndarray:
    """Per-rule contribution f_i(x) * sim(anchor_i, x)."""
    votes = np.zeros(len(ens))
    for i, rule in enumerate(ens.rules):
        v = signed_vote(rule.rule, sample)
        if v != 0:
            votes[i] = v * _similarity(ens, i, sample)
    return votes


def vote_matrix(ens: FeedbackEnsemble, samples: Sequence[Sample]) -> np.ndarray:
    """(n_samples, n_rules) matrix of signed, similarity-scaled votes."""
    out = np.zeros((len(samples), len(ens)))
    for j, sample in enumerate(samples):
        out[j] = vote_vector(ens, sample)
    return out


def preactivation(ens: FeedbackEnsemble, sample: Sample) -> float:
    return float(vote_vector(ens, sample) @ ens.weights)


def feedback_score(ens: FeedbackEnsemble, sample: Sample) -> float:
    """sigmoid of the weighted vote sum; 0.5 when no rule fires."""
    return float(sigmoid(preactivation(ens, sample)))


@dataclass(frozen=True)
class MixtureClassifier:
    alpha: float
    hist: LinearModel
    feedback: FeedbackEnsemble
    hist_frozen: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def mixture_predict(m: MixtureClassifier, sample: Sample) -> float:
    # alpha * h + (1-alpha) * f reproduces each component bitwise at the
    # endpoints (1.0*h + 0.0*f == h for finite f).
    return m.alpha * predict_proba(m.hist, sample) + (1.0 - m.alpha) * feedback_score(
        m.feedback, sample
    )


def mixture_predict_batch(m: MixtureClassifier, samples: Sequence[Sample]) -> np.ndarray:
    X = np.asarray([s.features for s in samples], dtype=np.float64)
    hist_p = predict_proba_matrix(m.hist, X)
    fb = sigmoid(vote_matrix(m.feedback, samples) @ m.feedback.weights)
    return m.alpha * hist_p + (1.0 - m.alpha) * fb


def loss_bce(m: MixtureClassifier, sample: Sample, clamp_eps: float = 1e-7) -> float:
    """Binary cross-entropy of the mixture output, clamped away from 0/1."""
    if sample.label is None:
        raise ValueError(f"sample {sample.id!r} is unlabeled")
    c = min(max(mixture_predict(m, sample), clamp_eps), 1.0 - clamp_eps)
    y = sample.label
    return float(-y * np.log(c) - (1 - y) * np.log(1.0 - c))


@dataclass(frozen=True)
class MixtureGrad:
    hist_weights: np.ndarray
    hist_bias: float
    theta: np.ndarray


def grad(m: MixtureClassifier, sample: Sample, clamp_eps: float = 1e-7) -> MixtureGrad:
    """Analytic BCE gradient for both parameter blocks.

    dL/d(theta_hist) = alpha     * dC_h/d(theta_hist) * g
    dL/d(theta_f)    = (1-alpha) * dC_f/d(theta_f)    * g
    with g = (1-y)/(1-C) - y/C evaluated on the clamped mixture output.
    """
    if sample.label is None:
        raise ValueError(f"sample {sample.id!r} is unlabeled")
    x = sample.features
    h = float(sigmoid(float(x @ m.hist.weights) + m.hist.bias))
    votes = vote_vector(m.feedback, sample)
    s = float(sigmoid(float(votes @ m.feedback.weights)))
    c = m.alpha * h + (1.0 - m.alpha) * s
    c = min(max(c, clamp_eps), 1.0 - clamp_eps)
    y = sample.label
    g = (1 - y) / (1.0 - c) - y / c
    hist_factor = m.alpha * h * (1.0 - h) * g
    theta_grad = (1.0 - m.alpha) * s * (1.0 - s) * g * votes
    return MixtureGrad(
        hist_weights=hist_factor * x,
        hist_bias=hist_factor,
        theta=theta_grad,
    )


def train_mixture(
    m: MixtureClassifier,
    feedback_data: Dataset,
    config: TrainConfig | None = None,
) -> MixtureClassifier:
    """Mini-batch SGD on the mixture BCE over the feedback samples.

    With hist_frozen only the rule weights move; otherwise both blocks are
    updated. Deterministic under (inputs, config.seed).
    """
    config = config or TrainConfig()
    if len(feedback_data) == 0:
        raise ValueError("feedback data must not be empty")
    samples = feedback_data.samples
    X = feedback_data.feature_matrix()
    y = feedback_data.label_vector().astype(np.float64)
    V = vote_matrix(m.feedback, samples)  # rules are fixed during training
    theta = m.feedback.weights.copy()
    w = m.hist.weights.copy()
    b = m.hist.bias
    alpha = m.alpha
    eps = config.clamp_eps
    rng = rng_from_seed(config.seed)
    n = len(samples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, Vb, yb = X[idx], V[idx], y[idx]
            h = sigmoid(Xb @ w + b)
            s = sigmoid(Vb @ theta)
            c = np.clip(alpha * h + (1.0 - alpha) * s, eps, 1.0 - eps)
            g = (1.0 - yb) / (1.0 - c) - yb / c
            theta_grad = (1.0 - alpha) * Vb.T @ (g * s * (1.0 - s)) / len(idx)
            theta -= config.learning_rate * theta_grad
            if not m.hist_frozen:
                hist_factor = alpha * g * h * (1.0 - h)
                w -= config.learning_rate * (Xb.T @ hist_factor / len(idx))
                b -= config.learning_rate * float(np.mean(hist_factor))
    new_hist = m.hist if m.hist_frozen else LinearModel(weights=w, bias=b)
    new_feedback = replace(m.feedback, weights=theta)
    return replace(m, hist=new_hist, feedback=new_feedback)


def retrain_on_labels(feedback_data: Dataset, config: TrainConfig | None = None) -> LinearModel:
    """Label-feedback baseline: refit the historical model from scratch on
    the feedback samples alone."""
    return train_logistic(feedback_data, config)


# --- persistence --------------------------------------------------------

def save_ensemble(ens: FeedbackEnsemble, rules_path: str | Path, weights_path: str | Path) -> None:
    """Rule log plus a parallel text file of weights (one per line).

    Anchor feature vectors are not part of this format; sessions that use
    rbf similarity must re-resolve anchors from their datasets.
    """
    write_rule_log(ens.rules, rules_path)
    Path(weights_path).write_text(
        "".join(f"{float(wi)!r}\n" for wi in ens.weights), encoding="utf-8"
    )


def load_ensemble(
    rules_path: str | Path,
    weights_path: str | Path,
    similarity: SimilarityConfig | None = None,
    parser_config: ParserConfig | None = None,
    anchors: Iterable[np.ndarray | None] | None = None,
) -> FeedbackEnsemble:
    rules = tuple(read_rule_log(rules_path, parser_config))
    lines = [ln for ln in Path(weights_path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    weights = np.array([float(ln) for ln in lines])
    anchor_tuple = tuple(anchors) if anchors is not None else (None,) * len(rules)
    return FeedbackEnsemble(
        rules=rules,
        weights=weights,
        similarity=similarity or SimilarityConfig.constant(),
        anchors=anchor_tuple,
    )
