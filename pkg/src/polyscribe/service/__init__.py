"""FastAPI service exposing the transcription engine."""

from .app import create_app

__all__ = ["create_app"]
