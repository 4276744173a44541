import math
import random

import numpy as np
import pytest

from rulecast.data import Dataset, Sample
from rulecast.dsl import FeedbackRule, parse
from rulecast.ensemble import (
    FeedbackEnsemble,
    MixtureClassifier,
    SimilarityConfig,
    add_rule,
    feedback_score,
    grad,
    load_ensemble,
    loss_bce,
    mixture_predict,
    mixture_predict_batch,
    save_ensemble,
    train_mixture,
    vote_vector,
)
from rulecast.models import LinearModel, TrainConfig, predict_proba


def rule(text, rule_id="r0", anchor=None):
    return FeedbackRule(parse(text), rule_id=rule_id, author_id="t", anchor=anchor)


def make_ensemble(*specs, similarity=None):
    ens = FeedbackEnsemble.empty(similarity)
    for i, (text, weight) in enumerate(specs):
        ens = add_rule(ens, rule(text, rule_id=f"r{i}"), init_weight=weight)
    return ens


def sample(features, label=None, text=None, ident="s"):
    return Sample(id=ident, features=np.asarray(features, dtype=float), text=text, label=label)


# --- feedback score -----------------------------------------------------------

def test_empty_ensemble_scores_half():
    assert feedback_score(FeedbackEnsemble.empty(), sample([0.0])) == 0.5


def test_single_rule_score():
    ens = make_ensemble(("x0 < 1 => 1", 1.0))
    assert feedback_score(ens, sample([0.0])) == pytest.approx(0.7310585786300049, abs=1e-12)


def test_abstaining_rule_contributes_nothing():
    ens = make_ensemble(("x0 > 5 => 1", 3.0))
    assert feedback_score(ens, sample([0.0])) == 0.5


def test_rbf_similarity_scales_votes():
    ens = FeedbackEnsemble.empty(SimilarityConfig.rbf(bandwidth=1.0))
    anchor = np.array([0.0, 0.0])
    ens = add_rule(ens, rule("x0 < 10 => 1"), init_weight=1.0, anchor_features=anchor)
    x = sample([2.0, 0.0])
    expected_sim = math.exp(-4.0 / 2.0)
    assert vote_vector(ens, x)[0] == pytest.approx(expected_sim)
    near = feedback_score(ens, sample([0.0, 0.0]))
    far = feedback_score(ens, x)
    assert near > far > 0.5


def test_rbf_requires_anchor():
    ens = FeedbackEnsemble.empty(SimilarityConfig.rbf(bandwidth=1.0))
    ens = add_rule(ens, rule("x0 < 10 => 1"), anchor_features=None)
    with pytest.raises(ValueError, match="anchor"):
        feedback_score(ens, sample([0.0, 0.0]))


def test_permutation_invariance():
    rnd = random.Random(55)
    specs = [(f"x0 < {i} => {i % 2}", rnd.uniform(-2, 2)) for i in range(6)]
    ens = make_ensemble(*specs)
    x = sample([3.2])
    base = feedback_score(ens, x)
    order = list(range(6))
    rnd.shuffle(order)
    shuffled = FeedbackEnsemble(
        rules=tuple(ens.rules[i] for i in order),
        weights=ens.weights[order],
        similarity=ens.similarity,
        anchors=tuple(ens.anchors[i] for i in order),
    )
    assert feedback_score(shuffled, x) == pytest.approx(base, abs=1e-15)


# --- add_rule -------------------------------------------------------------------

def test_add_rule_appends_with_default_weight():
    ens = add_rule(FeedbackEnsemble.empty(), rule("x0 < 1 => 1"))
    assert len(ens) == 1
    assert ens.weights.tolist() == [1.0]


def test_add_rule_rejects_duplicate_id():
    ens = add_rule(FeedbackEnsemble.empty(), rule("x0 < 1 => 1", rule_id="dup"))
    with pytest.raises(ValueError, match="duplicate"):
        add_rule(ens, rule("x0 < 2 => 0", rule_id="dup"))


def test_adding_abstaining_rule_preserves_predictions():
    hist = LinearModel(weights=np.array([1.0]), bias=0.0)
    ens = make_ensemble(("x0 < 1 => 1", 0.7))
    m = MixtureClassifier(0.4, hist, ens)
    xs = [sample([v], ident=f"s{v}") for v in (-2.0, 0.0, 3.0)]
    before = [mixture_predict(m, x) for x in xs]
    ens2 = add_rule(ens, rule("x0 > 100 => 1", rule_id="never"), init_weight=5.0)
    m2 = MixtureClassifier(0.4, hist, ens2)
    after = [mixture_predict(m2, x) for x in xs]
    assert before == after


# --- mixture ---------------------------------------------------------------------

def test_mixture_endpoints_bitwise():
    hist = LinearModel(weights=np.array([0.8, -0.3]), bias=0.1)
    ens = make_ensemble(("x0 < 1 => 1", 0.9), ("x1 > 0 => 0", 1.4))
    x = sample([0.3, 0.6])
    assert mixture_predict(MixtureClassifier(1.0, hist, ens), x) == predict_proba(hist, x)
    assert mixture_predict(MixtureClassifier(0.0, hist, ens), x) == feedback_score(ens, x)


def test_mixture_hand_value():
    # 0.5 * 0.9 + 0.5 * 0.5 = 0.7
    hist = LinearModel(weights=np.array([0.0]), bias=math.log(9.0))  # sigmoid = 0.9
    m = MixtureClassifier(0.5, hist, FeedbackEnsemble.empty())
    assert mixture_predict(m, sample([0.0])) == pytest.approx(0.7, abs=1e-12)


def test_mixture_batch_matches_single():
    hist = LinearModel(weights=np.array([0.8, -0.3]), bias=0.1)
    ens = make_ensemble(("x0 < 1 => 1", 0.9), ("x1 > 0 => 0", 1.4))
    xs = [sample([0.3, 0.6], ident="a"), sample([2.0, -1.0], ident="b")]
    batch = mixture_predict_batch(MixtureClassifier(0.25, hist, ens), xs)
    singles = [mixture_predict(MixtureClassifier(0.25, hist, ens), x) for x in xs]
    assert batch.tolist() == pytest.approx(singles, abs=1e-15)


# --- loss ------------------------------------------------------------------------

def test_loss_at_half_is_ln2():
    hist = LinearModel(weights=np.array([0.0]), bias=0.0)
    m = MixtureClassifier(1.0, hist, FeedbackEnsemble.empty())
    for label in (0, 1):
        assert loss_bce(m, sample([0.0], label=label)) == pytest.approx(math.log(2), abs=1e-12)


def test_loss_vanishes_when_confident_and_correct():
    hist = LinearModel(weights=np.array([0.0]), bias=30.0)
    m = MixtureClassifier(1.0, hist, FeedbackEnsemble.empty())
    # clamp_eps bounds the loss away from exactly zero
    assert loss_bce(m, sample([0.0], label=1)) < 1e-6
    assert loss_bce(m, sample([0.0], label=0)) > 10


def test_loss_nonnegative_random(rng):
    for _ in range(50):
        hist = LinearModel(weights=rng.normal(size=2), bias=float(rng.normal()))
        ens = make_ensemble(("x0 < 0.5 => 1", float(rng.normal())))
        m = MixtureClassifier(float(rng.uniform()), hist, ens)
        x = sample(rng.normal(size=2), label=int(rng.integers(0, 2)))
        assert loss_bce(m, x) >= 0.0


# --- gradients ---------------------------------------------------------------------

RULE_POOL = [
    "x0 < 0.5 => 1",
    "x1 > -0.2 => 0",
    "if x0 <= 0 then 1 else 0",
    "x0 > 2 => 1",  # often abstains
    "x1 < 0.1 and x0 > -1 => 0",
]


def random_config(rnd, alpha=None, similarity=None):
    d = 2
    hist = LinearModel(
        weights=np.array([rnd.gauss(0, 1) for _ in range(d)]), bias=rnd.gauss(0, 1)
    )
    ens = FeedbackEnsemble.empty(similarity)
    n_rules = rnd.randint(1, 4)
    for i in range(n_rules):
        anchor = np.array([rnd.gauss(0, 1), rnd.gauss(0, 1)])
        ens = add_rule(
            ens,
            rule(rnd.choice(RULE_POOL), rule_id=f"r{i}"),
            init_weight=rnd.gauss(0, 1),
            anchor_features=anchor,
        )
    if alpha is None:
        alpha = rnd.choice([0.0, 0.25, 0.5, 0.75, 1.0])
    m = MixtureClassifier(alpha, hist, ens, hist_frozen=rnd.random() < 0.5)
    x = sample([rnd.gauss(0, 1), rnd.gauss(0, 1)], label=rnd.randint(0, 1))
    return m, x


def relative_close(analytic, fd, tol=1e-4):
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8) < tol or (
        abs(analytic) < 1e-10 and abs(fd) < 1e-10
    )


def fd_gradients(m, x, h=1e-5):
    import dataclasses

    def loss_with(weights=None, bias=None, theta=None):
        hist = m.hist if weights is None and bias is None else LinearModel(
            weights=m.hist.weights if weights is None else weights,
            bias=m.hist.bias if bias is None else bias,
        )
        feedback = m.feedback if theta is None else dataclasses.replace(
            m.feedback, weights=theta
        )
        return loss_bce(dataclasses.replace(m, hist=hist, feedback=feedback), x)

    grads_w = np.zeros_like(m.hist.weights)
    for j in range(len(grads_w)):
        wp, wm = m.hist.weights.copy(), m.hist.weights.copy()
        wp[j] += h
        wm[j] -= h
        grads_w[j] = (loss_with(weights=wp) - loss_with(weights=wm)) / (2 * h)
    grad_b = (loss_with(bias=m.hist.bias + h) - loss_with(bias=m.hist.bias - h)) / (2 * h)
    grads_t = np.zeros_like(m.feedback.weights)
    for i in range(len(grads_t)):
        tp, tm = m.feedback.weights.copy(), m.feedback.weights.copy()
        tp[i] += h
        tm[i] -= h
        grads_t[i] = (loss_with(theta=tp) - loss_with(theta=tm)) / (2 * h)
    return grads_w, grad_b, grads_t


def test_gradient_matches_finite_differences():
    rnd = random.Random(424242)
    checked = 0
    while checked < 100:
        m, x = random_config(rnd)
        c = mixture_predict(m, x)
        if not 0.01 < c < 0.99:  # keep clear of the clamp for clean differences
            continue
        analytic = grad(m, x)
        fd_w, fd_b, fd_t = fd_gradients(m, x)
        for a, f in zip(analytic.hist_weights, fd_w):
            assert relative_close(a, f)
        assert relative_close(analytic.hist_bias, fd_b)
        for a, f in zip(analytic.theta, fd_t):
            assert relative_close(a, f)
        checked += 1


def test_gradient_matches_finite_differences_rbf():
    rnd = random.Random(99)
    checked = 0
    while checked < 20:
        m, x = random_config(rnd, similarity=SimilarityConfig.rbf(bandwidth=1.5))
        if not 0.01 < mixture_predict(m, x) < 0.99:
            continue
        analytic = grad(m, x)
        _, _, fd_t = fd_gradients(m, x)
        for a, f in zip(analytic.theta, fd_t):
            assert relative_close(a, f)
        checked += 1


def test_gradient_zero_for_abstaining_rule():
    ens = make_ensemble(("x0 > 100 => 1", 1.0), ("x0 < 100 => 1", 1.0))
    hist = LinearModel(weights=np.array([0.5]), bias=0.0)
    m = MixtureClassifier(0.5, hist, ens)
    g = grad(m, sample([0.0], label=1))
    assert g.theta[0] == 0.0
    assert g.theta[1] != 0.0


def test_gradient_alpha_one_freezes_theta():
    ens = make_ensemble(("x0 < 100 => 1", 1.0))
    hist = LinearModel(weights=np.array([0.5]), bias=0.0)
    m = MixtureClassifier(1.0, hist, ens)
    g = grad(m, sample([0.0], label=1))
    assert np.all(g.theta == 0.0)
    assert g.hist_bias != 0.0


# --- training ----------------------------------------------------------------------

def feedback_set(n=24):
    # One rule classifies these perfectly: x0 < 0 is class 1.
    samples = []
    for i in range(n):
        v = -1.0 - i * 0.1 if i % 2 == 0 else 1.0 + i * 0.1
        samples.append(sample([v], label=1 if v < 0 else 0, ident=f"f{i}"))
    return Dataset.from_samples(samples)


def test_train_mixture_frozen_hist_is_bitwise_identical():
    hist = LinearModel(weights=np.array([0.3]), bias=-0.2)
    ens = make_ensemble(("x0 < 0 => 1", 1.0))
    m = MixtureClassifier(0.5, hist, ens, hist_frozen=True)
    trained = train_mixture(m, feedback_set(), TrainConfig(epochs=20))
    assert trained.hist is hist
    assert np.array_equal(trained.hist.weights, hist.weights)
    assert trained.hist.bias == hist.bias
    assert not np.array_equal(trained.feedback.weights, ens.weights)


def test_train_mixture_updates_hist_when_not_frozen():
    hist = LinearModel(weights=np.array([0.3]), bias=-0.2)
    ens = make_ensemble(("x0 < 0 => 1", 1.0))
    m = MixtureClassifier(0.5, hist, ens, hist_frozen=False)
    trained = train_mixture(m, feedback_set(), TrainConfig(epochs=20))
    assert not np.array_equal(trained.hist.weights, hist.weights)


def test_perfect_rule_weight_grows_monotonically():
    hist = LinearModel(weights=np.array([0.0]), bias=0.0)
    ens = make_ensemble(("x0 < 0 => 1", 1.0))
    data = feedback_set()
    previous = 1.0
    m = MixtureClassifier(0.0, hist, ens, hist_frozen=True)
    for _ in range(6):
        m = train_mixture(m, data, TrainConfig(epochs=10, seed=3))
        current = float(m.feedback.weights[0])
        assert current > previous
        previous = current
    probs = mixture_predict_batch(m, data.samples)
    labels = data.label_vector()
    assert np.mean((probs > 0.5).astype(int) == labels) == 1.0


def test_train_mixture_deterministic():
    hist = LinearModel(weights=np.array([0.3]), bias=-0.2)
    ens = make_ensemble(("x0 < 0 => 1", 1.0), ("x0 > 0 => 0", 0.5))
    m = MixtureClassifier(0.5, hist, ens, hist_frozen=False)
    a = train_mixture(m, feedback_set(), TrainConfig(epochs=15, seed=9))
    b = train_mixture(m, feedback_set(), TrainConfig(epochs=15, seed=9))
    assert np.array_equal(a.feedback.weights, b.feedback.weights)
    assert np.array_equal(a.hist.weights, b.hist.weights)


def test_train_mixture_rejects_empty_data():
    hist = LinearModel(weights=np.array([0.3]), bias=-0.2)
    m = MixtureClassifier(0.5, hist, FeedbackEnsemble.empty())
    with pytest.raises(ValueError, match="empty"):
        train_mixture(m, Dataset(samples=(), dimension=1))


# --- persistence ----------------------------------------------------------------------

def test_ensemble_persistence_roundtrip(tmp_path):
    ens = make_ensemble(("x0 < 0 => 1", 1.25), ('contains("funny") => positive', -0.5))
    save_ensemble(ens, tmp_path / "rules.log", tmp_path / "weights.txt")
    loaded = load_ensemble(tmp_path / "rules.log", tmp_path / "weights.txt")
    assert [r.rule for r in loaded.rules] == [r.rule for r in ens.rules]
    assert np.array_equal(loaded.weights, ens.weights)
