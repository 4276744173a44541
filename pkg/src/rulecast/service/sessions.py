"""Session state for live elicitation.

A session owns immutable datasets, the current mixture snapshot, the rule
log, and an append-only metrics history. Reads see a consistent snapshot;
writes (feedback, retrain) are serialized per session by a lock, and a
retrain that is already running rejects a second one instead of queueing.

Sessions persist to a state directory: the historical model uses the
binary checkpoint format, the ensemble uses the rule-log + weight-vector
format, and the manifest records the dataset reference so data is
regenerated (deterministically) on load.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data import Dataset, SwitchingGaussianSpec, generate_switching, load_tsv
from ..dsl import (
    FeedbackRule,
    RuleError,
    evaluate,
    parse,
    serialize,
)
from ..ensemble import (
    FeedbackEnsemble,
    MixtureClassifier,
    add_rule,
    load_ensemble,
    mixture_predict_batch,
    save_ensemble,
    train_mixture,
)
from ..models import LinearModel, TrainConfig, load_model, save_model, train_logistic
from ..simulation import MetricsReport, evaluate as evaluate_metrics, predicted_classes

from .schemas import CreateSessionRequest, DatasetRef


class SessionError(Exception):
    def __init__(self, status: int, code: str, message: str, location: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.location = location


@dataclass
class Session:
    session_id: str
    request: CreateSessionRequest
    train_distr: Dataset
    test_distr: Dataset
    mixture: MixtureClassifier
    queue_ids: list[str] = field(default_factory=list)
    feedback_ids: list[str] = field(default_factory=list)
    history: list[MetricsReport] = field(default_factory=list)
    rule_counter: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def sample_by_id(self, sample_id: str):
        for ds in (self.test_distr, self.train_distr):
            for s in ds.samples:
                if s.id == sample_id:
                    return s
        return None


def _train_config(req: CreateSessionRequest) -> TrainConfig:
    return TrainConfig(
        learning_rate=req.learning_rate,
        epochs=req.epochs,
        batch_size=req.batch_size,
        l2=req.l2,
        seed=req.seed,
    )


def _load_datasets(ref: DatasetRef) -> tuple[Dataset, Dataset]:
    if ref.kind == "switching":
        spec = SwitchingGaussianSpec(n_per_cluster=ref.n_per_cluster, seed=ref.data_seed)
        return generate_switching(spec)
    if ref.kind == "tsv":
        if not ref.train_path or not ref.test_path:
            raise SessionError(400, "bad_config", "tsv datasets need train_path and test_path")
        for path in (ref.train_path, ref.test_path):
            if not Path(path).exists():
                raise SessionError(404, "missing_dataset", f"dataset file not found: {path}")
        return load_tsv(ref.train_path), load_tsv(ref.test_path)
    raise SessionError(404, "missing_dataset", f"unknown dataset kind {ref.kind!r}")


def _compute_queue(session: Session) -> list[str]:
    """Misclassified-first ordering over the test batch, stable until the
    model snapshot changes."""
    batch = session.test_distr
    probs = mixture_predict_batch(session.mixture, batch.samples)
    wrong = predicted_classes(probs) != batch.label_vector()
    policy = session.request.policy
    misclassified = [s.id for s, w in zip(batch.samples, wrong) if w]
    if policy == "misclassified":
        return misclassified
    if policy == "all":
        rest = [s.id for s, w in zip(batch.samples, wrong) if not w]
        return misclassified + rest
    raise SessionError(400, "bad_config", f"unknown policy {policy!r}")


def _evaluate(session: Session, round_index: int, alpha: float | None = None) -> MetricsReport:
    model = session.mixture
    if alpha is not None:
        model = replace(model, alpha=alpha)
    return evaluate_metrics(
        model,
        session.train_distr,
        session.test_distr,
        n_feedback=len(session.mixture.feedback),
        round_index=round_index,
        bootstrap_seed=session.request.seed,
    )


class SessionStore:
    """In-memory sessions with optional directory persistence."""

    def __init__(self, state_dir: str | Path | None = None):
        self.state_dir = Path(state_dir) if state_dir else None
        self.sessions: dict[str, Session] = {}
        self._counter = 0
        self._store_lock = threading.Lock()
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._load_all()

    # -- lifecycle -------------------------------------------------------

    def create(self, request: CreateSessionRequest) -> Session:
        if not 0.0 <= request.alpha <= 1.0:
            raise SessionError(400, "bad_config", f"alpha must be in [0, 1], got {request.alpha}")
        if request.policy not in ("misclassified", "all"):
            raise SessionError(400, "bad_config", f"unknown policy {request.policy!r}")
        try:
            train_cfg = _train_config(request)
        except ValueError as exc:
            raise SessionError(400, "bad_config", str(exc)) from None
        train, test = _load_datasets(request.dataset)
        try:
            hist = train_logistic(train, train_cfg)
        except ValueError as exc:
            raise SessionError(400, "bad_config", f"cannot train on dataset: {exc}") from None
        mixture = MixtureClassifier(
            alpha=request.alpha,
            hist=hist,
            feedback=FeedbackEnsemble.empty(),
            hist_frozen=request.hist_frozen,
        )
        with self._store_lock:
            session_id = f"s{self._counter:04d}"
            self._counter += 1
        session = Session(
            session_id=session_id,
            request=request,
            train_distr=train,
            test_distr=test,
            mixture=mixture,
        )
        session.queue_ids = _compute_queue(session)
        session.history.append(_evaluate(session, 0))
        self.sessions[session_id] = session
        self._save(session)
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError(404, "unknown_session", f"no session {session_id!r}")
        return session

    # -- operations -------------------------------------------------------

    def submit_feedback(self, session_id: str, sample_id: str, rule_text: str, author_id: str):
        session = self.get(session_id)
        with session.lock:
            if sample_id not in session.queue_ids:
                raise SessionError(
                    409, "not_in_queue", f"sample {sample_id!r} is not in the review queue"
                )
            sample = session.sample_by_id(sample_id)
            try:
                ast = parse(rule_text)
            except RuleError as exc:
                location = None
                line = getattr(exc, "line", None)
                if line is not None:
                    location = {"line": line, "column": getattr(exc, "column", None)}
                raise SessionError(422, "parse_error", str(exc), location) from None
            try:
                verdict = evaluate(ast, sample)
            except RuleError as exc:
                raise SessionError(422, "evaluation_error", str(exc)) from None
            rule = FeedbackRule(
                rule=ast,
                rule_id=f"{session.session_id}-r{session.rule_counter:04d}",
                author_id=author_id,
                anchor=sample_id,
                created_at=session.rule_counter,
            )
            session.rule_counter += 1
            ensemble = add_rule(session.mixture.feedback, rule, anchor_features=sample.features)
            session.mixture = replace(session.mixture, feedback=ensemble)
            if sample_id not in session.feedback_ids:
                session.feedback_ids.append(sample_id)
            warning = None
            if verdict.signed == 0:
                warning = "rule abstains on its anchor sample"
            self._save(session)
            return rule, verdict, warning

    def retrain(self, session_id: str) -> MetricsReport:
        session = self.get(session_id)
        if not session.lock.acquire(blocking=False):
            raise SessionError(409, "retrain_running", "a retrain is already in progress")
        try:
            if len(session.mixture.feedback) > 0 and session.feedback_ids:
                samples = tuple(session.sample_by_id(i) for i in session.feedback_ids)
                data = Dataset(samples=samples, dimension=session.train_distr.dimension)
                session.mixture = train_mixture(
                    session.mixture, data, _train_config(session.request)
                )
            session.queue_ids = _compute_queue(session)
            report = _evaluate(session, len(session.history))
            session.history.append(report)
            self._save(session)
            return report
        finally:
            session.lock.release()

    def what_if(self, session_id: str, alpha: float) -> MetricsReport:
        session = self.get(session_id)
        if not 0.0 <= alpha <= 1.0:
            raise SessionError(400, "bad_config", f"alpha must be in [0, 1], got {alpha}")
        return _evaluate(session, len(session.history), alpha=alpha)

    # -- persistence ------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path | None:
        return None if self.state_dir is None else self.state_dir / session_id

    def _save(self, session: Session) -> None:
        directory = self._session_dir(session.session_id)
        if directory is None:
            return
        directory.mkdir(parents=True, exist_ok=True)
        save_model(session.mixture.hist, directory / "hist.ckpt")
        save_ensemble(
            session.mixture.feedback, directory / "rules.log", directory / "weights.txt"
        )
        manifest = {
            "session_id": session.session_id,
            "request": session.request.model_dump(),
            "queue_ids": session.queue_ids,
            "feedback_ids": session.feedback_ids,
            "rule_counter": session.rule_counter,
            "history": [r.to_dict() for r in session.history],
        }
        (directory / "session.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _load_all(self) -> None:
        for manifest_path in sorted(self.state_dir.glob("*/session.json")):
            directory = manifest_path.parent
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            request = CreateSessionRequest.model_validate(manifest["request"])
            train, test = _load_datasets(request.dataset)
            hist = load_model(directory / "hist.ckpt")
            session = Session(
                session_id=manifest["session_id"],
                request=request,
                train_distr=train,
                test_distr=test,
                mixture=MixtureClassifier(
                    alpha=request.alpha,
                    hist=hist,
                    feedback=FeedbackEnsemble.empty(),
                    hist_frozen=request.hist_frozen,
                ),
                queue_ids=list(manifest["queue_ids"]),
                feedback_ids=list(manifest["feedback_ids"]),
                rule_counter=int(manifest["rule_counter"]),
            )
            ensemble = load_ensemble(directory / "rules.log", directory / "weights.txt")
            anchors = []
            for rule in ensemble.rules:
                sample = session.sample_by_id(rule.anchor) if rule.anchor else None
                anchors.append(None if sample is None else sample.features)
            ensemble = replace(ensemble, anchors=tuple(anchors))
            session.mixture = replace(session.mixture, feedback=ensemble)
            session.history = [
                MetricsReport(
                    round_index=entry["round"],
                    alpha=entry["alpha"],
                    n_feedback=entry["n_feedback"],
                    accuracy_train_distr=entry["accuracy_train_distr"],
                    accuracy_test_distr=entry["accuracy_test_distr"],
                    accuracy_combined=entry["accuracy_combined"],
                    se_train_distr=entry["se_train_distr"],
                    se_test_distr=entry["se_test_distr"],
                    se_combined=entry["se_combined"],
                )
                for entry in manifest["history"]
            ]
            self.sessions[session.session_id] = session
            number = int(session.session_id.lstrip("s"))
            self._counter = max(self._counter, number + 1)
