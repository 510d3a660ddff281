"""HTTP service around the respcam pipeline."""

from .app import app, create_app

__all__ = ["app", "create_app"]
