"""HTTP service exposing the library over FastAPI."""

from .app import app, create_app

__all__ = ["app", "create_app"]
