"""Client factory used by the CLI.

With a server URL the client talks HTTP; without one it mounts the app
in-process, so the CLI works standalone while routing everything through
the same request/response surface.
"""

from __future__ import annotations

import warnings

import httpx


def open_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

        from .app import create_app

        return TestClient(create_app(), raise_server_exceptions=False)
