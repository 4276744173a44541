"""FastAPI elicitation service wrapping the core package."""

from .app import create_app
from .sessions import SessionError, SessionStore

__all__ = ["create_app", "SessionError", "SessionStore"]
