"""Pydantic request/response models for the elicitation API.

Field names here are the wire contract; API.md in the repository root
documents them for clients.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class DatasetRef(BaseModel):
    """Where a session's data comes from.

    kind="switching" generates the synthetic switching-Gaussian task from
    the inline spec fields; kind="tsv" loads label<TAB>payload files.
    """

    kind: str = "switching"
    # switching options
    n_per_cluster: int = 100
    data_seed: int = 0
    # tsv options
    train_path: str | None = None
    test_path: str | None = None


class CreateSessionRequest(BaseModel):
    dataset: DatasetRef = Field(default_factory=DatasetRef)
    alpha: float = 0.5
    hist_frozen: bool = True
    policy: str = "misclassified"
    seed: int = 0
    epochs: int = 200
    learning_rate: float = 0.1
    batch_size: int = 32
    l2: float = 1e-4


class CreateSessionResponse(BaseModel):
    session_id: str


class QueueItem(BaseModel):
    sample_id: str
    features: list[float] | None = None
    text: str | None = None
    true_label: int
    predicted_probability: float


class QueueResponse(BaseModel):
    session_id: str
    total: int
    items: list[QueueItem]


class FeedbackRequest(BaseModel):
    sample_id: str
    rule_text: str
    author_id: str = "anonymous"


class FeedbackResponse(BaseModel):
    rule_id: str
    parse_status: str = "ok"
    verdict: str
    canonical_text: str
    warning: str | None = None


class MetricsEntry(BaseModel):
    round: int
    alpha: float
    n_feedback: int
    accuracy_train_distr: float
    accuracy_test_distr: float
    accuracy_combined: float
    se_train_distr: float
    se_test_distr: float
    se_combined: float


class MetricsResponse(BaseModel):
    session_id: str
    history: list[MetricsEntry]
    what_if: MetricsEntry | None = None


class RuleInfo(BaseModel):
    rule_id: str
    author_id: str
    anchor: str | None
    text: str
    weight: float
    created_at: int


class RulesResponse(BaseModel):
    session_id: str
    rules: list[RuleInfo]


class ApiError(BaseModel):
    code: str
    message: str
    location: dict | None = None
