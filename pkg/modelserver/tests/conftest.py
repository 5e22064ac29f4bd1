"""Fixtures for the serving tests: in-process client and live server."""

from __future__ import annotations

import threading
import time

import pytest
import uvicorn
from fastapi.testclient import TestClient

from modelserver.app import create_app
from modelserver.config import ServerConfig


# The pattern backend is pinned so frozen expectations (relation labels,
# NLI verdicts) match the backend actually served in this environment.
@pytest.fixture(scope="session")
def pattern_config() -> ServerConfig:
    return ServerConfig(backend="pattern")


@pytest.fixture(scope="session")
def client(pattern_config):
    with TestClient(create_app(pattern_config)) as test_client:
        yield test_client


@pytest.fixture(scope="session")
def live_server(pattern_config):
    """A real uvicorn server on an ephemeral port; yields its base URL."""
    app = create_app(pattern_config)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start within 15s")
        time.sleep(0.02)
    host, port = server.servers[0].sockets[0].getsockname()[:2]
    yield f"http://{host}:{port}"
    server.should_exit = True
    thread.join(timeout=5)
