"""Simulated experts, the lifelong feedback loop, and evaluation metrics.

An expert is a shallow CART tree fitted to the fraction of the pooled data
the expert has "experienced". Queried on a sample it either returns its
current tree as a rule (when the tree classifies the sample correctly) or
first absorbs the sample into its experience, refits, and returns the new
tree. The loop runs: predict on a test batch, select observable samples,
collect one rule per observable sample, retrain the mixture on the
accumulated feedback samples, and report metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, Sample, concat, derive_seed, mix, rng_from_seed
from .dsl import FeedbackRule
from .ensemble import (
    FeedbackEnsemble,
    MixtureClassifier,
    SimilarityConfig,
    add_rule,
    mixture_predict_batch,
    train_mixture,
)
from .models import (
    DecisionTree,
    LinearModel,
    TrainConfig,
    fit_cart,
    train_logistic,
    tree_predict,
    tree_to_rule,
)

EXPERIENCE_MODES = ("fraction-of-mixture", "fraction-of-distributions")


@dataclass(frozen=True)
class ExpertProfile:
    """How capable one simulated expert is: rule complexity (depth) and the
    share of the pooled data they have seen (experience)."""

    depth: int
    experience: float
    experience_mode: str = "fraction-of-mixture"
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.01 <= self.experience <= 1.0:
            raise ValueError("experience must lie in [0.01, 1]")
        if self.experience_mode not in EXPERIENCE_MODES:
            raise ValueError(f"unknown experience mode {self.experience_mode!r}")


@dataclass
class SimulatedExpert:
    profile: ExpertProfile
    expert_id: str
    experience: list[Sample]
    tree: DecisionTree
    feedback_count: int = 0


def sample_experts(n: int, seed: int) -> list[ExpertProfile]:
    """Depths uniform on {1,2,3,4}; experience ~ N(0.3, 0.05^2) clamped to
    [0.01, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_from_seed(seed)
    depths = rng.integers(1, 5, size=n)
    experiences = np.clip(rng.normal(0.3, 0.05, size=n), 0.01, 1.0)
    return [
        ExpertProfile(
            depth=int(depths[i]),
            experience=float(experiences[i]),
            seed=derive_seed(seed, i),
        )
        for i in range(n)
    ]


def _ensure_two_classes(drawn: list[Sample], pool: Dataset) -> list[Sample]:
    # Floor contract: at least two samples, one per class when the pool
    # allows it; top-ups scan the pool in dataset order for determinism.
    have_ids = {s.id for s in drawn}
    for _ in range(2):
        if len(drawn) >= 2 and len({s.label for s in drawn}) >= 2:
            break
        labels = {s.label for s in drawn}
        missing = None
        if len(labels) == 1:
            missing = 1 - next(iter(labels))
        for s in pool.samples:
            if s.id in have_ids:
                continue
            if missing is None or s.label == missing:
                drawn.append(s)
                have_ids.add(s.id)
                break
        else:
            break
    return drawn


def init_expert(
    profile: ExpertProfile,
    mixture_pool: Dataset,
    expert_id: str = "expert-0",
    components: Sequence[Dataset] | None = None,
) -> SimulatedExpert:
    """Draw the expert's experience and fit its tree at the profile depth."""
    if profile.experience_mode == "fraction-of-distributions":
        if not components:
            raise ValueError("fraction-of-distributions mode needs component datasets")
        k = max(1, round(profile.experience * len(components)))
        rng = rng_from_seed(profile.seed)
        chosen = sorted(rng.permutation(len(components))[:k].tolist())
        drawn = [s for i in chosen for s in components[i].samples]
        pool = mixture_pool
    else:
        drawn = list(mix(mixture_pool, None, profile.experience, profile.seed).samples)
        pool = mixture_pool
    drawn = _ensure_two_classes(drawn, pool)
    experience = Dataset(samples=tuple(drawn), dimension=mixture_pool.dimension)
    tree = fit_cart(experience, max_depth=profile.depth)
    return SimulatedExpert(profile=profile, expert_id=expert_id, experience=drawn, tree=tree)


def expert_feedback(expert: SimulatedExpert, sample: Sample, created_at: int = 0) -> FeedbackRule:
    """Query one expert on a labeled sample.

    If the expert's tree already classifies the sample correctly the
    current tree is returned as the rule; otherwise the sample joins the
    expert's experience and the tree is refitted at the same depth first.
    """
    if sample.label is None:
        raise ValueError(f"sample {sample.id!r} is unlabeled")
    if tree_predict(expert.tree, sample.features) != sample.label:
        expert.experience.append(sample)
        data = Dataset(samples=tuple(expert.experience), dimension=len(sample.features))
        expert.tree = fit_cart(data, max_depth=expert.profile.depth)
    rule_id = f"{expert.expert_id}-r{expert.feedback_count:04d}"
    expert.feedback_count += 1
    return FeedbackRule(
        rule=tree_to_rule(expert.tree),
        rule_id=rule_id,
        author_id=expert.expert_id,
        anchor=sample.id,
        created_at=created_at,
    )


def predicted_classes(probs: np.ndarray) -> np.ndarray:
    """Threshold at 0.5; a probability of exactly 0.5 predicts class 0."""
    return (np.asarray(probs) > 0.5).astype(np.int64)


def select_observable(
    batch: Dataset,
    probs: np.ndarray,
    policy: str = "misclassified",
    k: int | None = None,
    seed: int = 0,
) -> list[str]:
    """Pick the sample ids the expert gets to review, in dataset order."""
    labels = batch.label_vector()
    if policy == "misclassified":
        wrong = predicted_classes(probs) != labels
        return [s.id for s, w in zip(batch.samples, wrong) if w]
    if policy == "all":
        return batch.ids()
    if policy == "random":
        if k is None or k > len(batch):
            raise ValueError(f"random policy needs k <= batch size, got {k}")
        rng = rng_from_seed(seed)
        chosen = set(rng.permutation(len(batch))[:k].tolist())
        return [s.id for i, s in enumerate(batch.samples) if i in chosen]
    raise ValueError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class MetricsReport:
    round_index: int
    alpha: float
    n_feedback: int
    accuracy_train_distr: float
    accuracy_test_distr: float
    accuracy_combined: float
    se_train_distr: float
    se_test_distr: float
    se_combined: float

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "alpha": self.alpha,
            "n_feedback": self.n_feedback,
            "accuracy_train_distr": self.accuracy_train_distr,
            "accuracy_test_distr": self.accuracy_test_distr,
            "accuracy_combined": self.accuracy_combined,
            "se_train_distr": self.se_train_distr,
            "se_test_distr": self.se_test_distr,
            "se_combined": self.se_combined,
        }


DEFAULT_BOOTSTRAP_RESAMPLES = 40


def bootstrap_se(correct: np.ndarray, rng: np.random.Generator, n_boot: int) -> float:
    """Standard error of the accuracy from n_boot resamples with replacement."""
    n = len(correct)
    accs = np.empty(n_boot)
    for i in range(n_boot):
        accs[i] = float(np.mean(correct[rng.integers(0, n, size=n)]))
    return float(np.std(accs, ddof=1))


def evaluate(
    model: MixtureClassifier,
    train_distr: Dataset,
    test_distr: Dataset,
    *,
    n_feedback: int = 0,
    round_index: int = 0,
    alpha: float | None = None,
    bootstrap_seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES,
) -> MetricsReport:
    """Accuracy on each distribution and on their union, with bootstrap
    standard errors from ``n_boot`` resamples."""
    if len(train_distr) == 0 or len(test_distr) == 0:
        raise ValueError("evaluation sets must be nonempty")
    correct = {}
    for name, ds in (("train", train_distr), ("test", test_distr)):
        probs = mixture_predict_batch(model, ds.samples)
        correct[name] = (predicted_classes(probs) == ds.label_vector()).astype(np.float64)
    combined = np.concatenate([correct["train"], correct["test"]])
    rng = rng_from_seed(derive_seed(bootstrap_seed, round_index))
    return MetricsReport(
        round_index=round_index,
        alpha=model.alpha if alpha is None else alpha,
        n_feedback=n_feedback,
        accuracy_train_distr=float(np.mean(correct["train"])),
        accuracy_test_distr=float(np.mean(correct["test"])),
        accuracy_combined=float(np.mean(combined)),
        se_train_distr=bootstrap_se(correct["train"], rng, n_boot),
        se_test_distr=bootstrap_se(correct["test"], rng, n_boot),
        se_combined=bootstrap_se(combined, rng, n_boot),
    )


@dataclass(frozen=True)
class LoopConfig:
    """Settings for one lifelong-loop run."""

    alpha: float = 0.5
    hist_frozen: bool = True
    policy: str = "misclassified"
    routing: str = "round-robin"  # round-robin | all
    feedback_mode: str = "rules"  # rules | labels | none
    random_k: int | None = None
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig.constant)
    train: TrainConfig = field(default_factory=TrainConfig)
    # The label-feedback refit needs enough regularization and steps that the
    # boundary does not keep a spurious slope along directions the feedback
    # batch leaves unconstrained (the shifted batch pins only one region).
    labels_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=1000, l2=0.02))
    seed: int = 0
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES

    def __post_init__(self):
        if self.routing not in ("round-robin", "all"):
            raise ValueError(f"unknown routing {self.routing!r}")
        if self.feedback_mode not in ("rules", "labels", "none"):
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")


@dataclass
class LoopResult:
    mixture: MixtureClassifier
    reports: list[MetricsReport]
    feedback_samples: list[Sample]
    n_feedback: int


def run_lifelong_loop(
    hist_model: LinearModel,
    experts: list[SimulatedExpert],
    batches: Sequence[Dataset],
    train_distr: Dataset,
    test_distr: Dataset,
    config: LoopConfig | None = None,
) -> LoopResult:
    """Run the predict / elicit-on-mistakes / self-improve cycle over the
    test batches; deterministic under the configured seeds."""
    config = config or LoopConfig()
    if len(batches) == 0:
        raise ValueError("need at least one test batch")
    mixture = MixtureClassifier(
        alpha=config.alpha,
        hist=hist_model,
        feedback=FeedbackEnsemble.empty(config.similarity),
        hist_frozen=config.hist_frozen,
    )
    feedback_samples: list[Sample] = []
    feedback_ids: set[str] = set()
    reports: list[MetricsReport] = []
    routing_counter = 0
    n_feedback = 0
    for round_index, batch in enumerate(batches):
        probs = mixture_predict_batch(mixture, batch.samples)
        observable = select_observable(
            batch, probs, config.policy, k=config.random_k,
            seed=derive_seed(config.seed, 7, round_index),
        )
        by_id = {s.id: s for s in batch.samples}
        observed = [by_id[i] for i in observable]
        if config.feedback_mode == "rules" and experts and observed:
            ensemble = mixture.feedback
            for sample in observed:
                if config.routing == "round-robin":
                    queried = [experts[routing_counter % len(experts)]]
                    routing_counter += 1
                else:
                    queried = experts
                for expert in queried:
                    rule = expert_feedback(expert, sample, created_at=n_feedback)
                    n_feedback += 1
                    ensemble = add_rule(ensemble, rule, anchor_features=sample.features)
                if sample.id not in feedback_ids:
                    feedback_ids.add(sample.id)
                    feedback_samples.append(sample)
            mixture = replace(mixture, feedback=ensemble)
            if feedback_samples:
                data = Dataset(samples=tuple(feedback_samples), dimension=train_distr.dimension)
                mixture = train_mixture(mixture, data, config.train)
        elif config.feedback_mode == "labels" and observed:
            for sample in observed:
                if sample.id not in feedback_ids:
                    feedback_ids.add(sample.id)
                    feedback_samples.append(sample)
            n_feedback += len(observed)
            labels = {s.label for s in feedback_samples}
            if len(labels) >= 2:
                data = Dataset(samples=tuple(feedback_samples), dimension=train_distr.dimension)
                new_hist = train_logistic(data, config.labels_train)
                mixture = replace(mixture, hist=new_hist)
        reports.append(
            evaluate(
                mixture,
                train_distr,
                test_distr,
                n_feedback=n_feedback,
                round_index=round_index,
                bootstrap_seed=derive_seed(config.seed, 11),
                n_boot=config.n_boot,
            )
        )
    return LoopResult(
        mixture=mixture,
        reports=reports,
        feedback_samples=feedback_samples,
        n_feedback=n_feedback,
    )


def alpha_sweep(
    hist_model: LinearModel,
    feedback: FeedbackEnsemble,
    feedback_data: Dataset | None,
    train_distr: Dataset,
    test_distr: Dataset,
    alphas: Iterable[float],
    *,
    hist_frozen: bool = True,
    train: TrainConfig | None = None,
    retrain_per_alpha: bool = True,
    n_feedback: int = 0,
    bootstrap_seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP_RESAMPLES,
) -> list[MetricsReport]:
    """Evaluate the same rule set at several mixing weights.

    By default the rule weights are retrained from their initial values at
    each alpha (alpha scales the gradient of every parameter block, so the
    trained weights are alpha-dependent)."""
    reports = []
    for i, alpha in enumerate(alphas):
        m = MixtureClassifier(
            alpha=float(alpha), hist=hist_model, feedback=feedback, hist_frozen=hist_frozen
        )
        if retrain_per_alpha and feedback_data is not None and len(feedback) > 0 \
                and len(feedback_data) > 0:
            m = train_mixture(m, feedback_data, train)
        reports.append(
            evaluate(
                m,
                train_distr,
                test_distr,
                n_feedback=n_feedback,
                round_index=i,
                alpha=float(alpha),
                bootstrap_seed=derive_seed(bootstrap_seed, 13, i),
                n_boot=n_boot,
            )
        )
    return reports


def make_expert_pool(train_distr: Dataset, test_distr: Dataset) -> Dataset:
    """The pooled mixture of both distributions that experts learn from."""
    return concat(train_distr, test_distr, "mixed")


def build_experts(
    n: int,
    seed: int,
    pool: Dataset,
    components: Sequence[Dataset] | None = None,
) -> list[SimulatedExpert]:
    profiles = sample_experts(n, seed)
    return [
        init_expert(p, pool, expert_id=f"expert-{i:02d}", components=components)
        for i, p in enumerate(profiles)
    ]
