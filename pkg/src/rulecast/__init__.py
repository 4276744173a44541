"""rulecast: elicit expert decision rules and mix them into a classifier.

Core pieces: a rule DSL (``rulecast.dsl``), datasets and generators
(``rulecast.data``), the logistic/CART models (``rulecast.models``), the
rule-feedback ensemble and alpha-mixture (``rulecast.ensemble``), simulated
experts and the lifelong loop (``rulecast.simulation``), reproducible
experiments (``rulecast.experiments``), and the HTTP elicitation service
(``rulecast.service``).
"""

from .data import Dataset, Sample, SwitchingGaussianSpec, generate_switching, mix
from .dsl import FeedbackRule, Verdict, evaluate, parse, serialize, signed_vote
from .ensemble import (
    FeedbackEnsemble,
    MixtureClassifier,
    SimilarityConfig,
    add_rule,
    feedback_score,
    grad,
    loss_bce,
    mixture_predict,
    train_mixture,
)
from .models import (
    DecisionTree,
    LinearModel,
    TrainConfig,
    fit_cart,
    predict_proba,
    train_logistic,
    tree_to_rule,
)
from .simulation import (
    ExpertProfile,
    LoopConfig,
    MetricsReport,
    SimulatedExpert,
    alpha_sweep,
    evaluate as evaluate_model,
    expert_feedback,
    init_expert,
    run_lifelong_loop,
    sample_experts,
    select_observable,
)

__version__ = "0.1.0"
