"""HTTP surface of the elicitation service.

Routes:
    POST /sessions                     create a session (201)
    GET  /sessions/{id}/queue?limit=   review queue, misclassified first
    POST /sessions/{id}/feedback       submit a rule for a queued sample
    POST /sessions/{id}/retrain        train on feedback, refresh queue/metrics
    GET  /sessions/{id}/metrics?alpha= history (+ read-only what-if at alpha)
    GET  /sessions/{id}/rules          rule log with current weights

Errors are JSON objects {code, message, location?}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..dsl import serialize
from ..ensemble import mixture_predict
from ..simulation import MetricsReport

from .schemas import (
    CreateSessionRequest,
    CreateSessionResponse,
    FeedbackRequest,
    FeedbackResponse,
    MetricsEntry,
    MetricsResponse,
    QueueItem,
    QueueResponse,
    RuleInfo,
    RulesResponse,
)
from .sessions import SessionError, SessionStore

_VERDICT_TEXT = {1: "positive", -1: "negative", 0: "abstain"}


def _entry(report: MetricsReport) -> MetricsEntry:
    return MetricsEntry(**report.to_dict())


def create_app(state_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="rulecast elicitation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(state_dir)
    app.state.store = store

    @app.exception_handler(SessionError)
    async def session_error_handler(_req: Request, exc: SessionError):
        body = {"code": exc.code, "message": exc.message}
        if exc.location:
            body["location"] = exc.location
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "bad_config", "message": str(exc.errors()[:3])},
        )

    @app.post("/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(request: CreateSessionRequest):
        session = store.create(request)
        return CreateSessionResponse(session_id=session.session_id)

    @app.get("/sessions/{session_id}/queue", response_model=QueueResponse)
    def get_queue(session_id: str, limit: int = 50):
        session = store.get(session_id)
        items = []
        for sample_id in session.queue_ids[:max(limit, 0)]:
            sample = session.sample_by_id(sample_id)
            items.append(
                QueueItem(
                    sample_id=sample.id,
                    features=None if sample.features is None else [float(v) for v in sample.features],
                    text=sample.text,
                    true_label=sample.label,
                    predicted_probability=mixture_predict(session.mixture, sample),
                )
            )
        return QueueResponse(session_id=session_id, total=len(session.queue_ids), items=items)

    @app.post("/sessions/{session_id}/feedback", response_model=FeedbackResponse)
    def submit_feedback(session_id: str, request: FeedbackRequest):
        rule, verdict, warning = store.submit_feedback(
            session_id, request.sample_id, request.rule_text, request.author_id
        )
        return FeedbackResponse(
            rule_id=rule.rule_id,
            verdict=_VERDICT_TEXT[verdict.signed],
            canonical_text=serialize(rule.rule),
            warning=warning,
        )

    @app.post("/sessions/{session_id}/retrain", response_model=MetricsEntry)
    def retrain(session_id: str):
        return _entry(store.retrain(session_id))

    @app.get("/sessions/{session_id}/metrics", response_model=MetricsResponse)
    def get_metrics(session_id: str, alpha: float | None = None):
        session = store.get(session_id)
        what_if = None
        if alpha is not None:
            what_if = _entry(store.what_if(session_id, alpha))
        return MetricsResponse(
            session_id=session_id,
            history=[_entry(r) for r in session.history],
            what_if=what_if,
        )

    @app.get("/sessions/{session_id}/rules", response_model=RulesResponse)
    def get_rules(session_id: str):
        session = store.get(session_id)
        ensemble = session.mixture.feedback
        rules = [
            RuleInfo(
                rule_id=rule.rule_id,
                author_id=rule.author_id,
                anchor=rule.anchor,
                text=serialize(rule.rule),
                weight=float(ensemble.weights[i]),
                created_at=rule.created_at,
            )
            for i, rule in enumerate(ensemble.rules)
        ]
        return RulesResponse(session_id=session_id, rules=rules)

    return app
