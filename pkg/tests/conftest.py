from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Iterator

import pytest

from secgen.mock_llm import MockLlmServer, Responder, fenced
from secgen.model import EngineConfig, EngineKind, LlmConfig
from secgen.security_agent import Rule, load_bundled_rules

FIXTURES = Path(__file__).parent / "fixtures"

# keep retry backoff out of the test clock
FAST_BACKOFF = 0.001

ECB_JAVA = (FIXTURES / "ecb.java").read_text().rstrip("\n")
CLEAN_JAVA = (FIXTURES / "clean_gcm.java").read_text().rstrip("\n")


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    status = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"\n[ACCEPTANCE] {name}: {status}", file=sys.stderr)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def bundled_rules() -> list[Rule]:
    return load_bundled_rules()


@pytest.fixture(scope="session")
def insecure_derive_example() -> str:
    return (FIXTURES / "insecure_derive_example.java").read_text()


@pytest.fixture(scope="session")
def random_salt_snippet() -> str:
    return (FIXTURES / "random_salt_snippet.java").read_text()


@pytest.fixture
def builtin_engine() -> EngineConfig:
    return EngineConfig(name="builtin", kind=EngineKind.BUILTIN)


@pytest.fixture
def mock_llm() -> Iterator[Callable[..., MockLlmServer]]:
    """Factory for mock LLM servers, all stopped at teardown."""
    servers: list[MockLlmServer] = []

    def factory(responder: Responder, **kwargs) -> MockLlmServer:
        server = MockLlmServer(responder, **kwargs).start()
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.stop()


def llm_for(server: MockLlmServer, name: str = "mock", **overrides) -> LlmConfig:
    settings = {
        "name": name,
        "endpoint": server.endpoint,
        "api_key": "test-key-do-not-log",
        "model": "mock-model",
        "timeout": 5.0,
    }
    settings.update(overrides)
    return LlmConfig(**settings)


def clean_java_responder(prompt: str) -> str:
    return fenced(CLEAN_JAVA, "java")


def ecb_java_responder(prompt: str) -> str:
    return fenced(ECB_JAVA, "java")


def repair_responder(cwe: str = "CWE-327") -> Responder:
    """Emits insecure code until the prompt names the CWE, then fixes it."""

    def responder(prompt: str) -> str:
        if cwe in prompt:
            return fenced(CLEAN_JAVA, "java")
        return fenced(ECB_JAVA, "java")

    return responder


class _StubRestHandler(BaseHTTPRequestHandler):
    def do_POST(self) -> None:  # noqa: N802
        stub = self.server.stub  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length) or b"{}")
        stub.requests.append(payload)
        status, body = stub.responder(payload)
        data = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args: object) -> None:
        pass


class StubRestEngine:
    """Minimal REST analyzer endpoint: responder(payload) -> (status, body)."""

    def __init__(self, responder: Callable[[dict], tuple[int, str]]):
        self.responder = responder
        self.requests: list[dict] = []
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubRestHandler)
        self._httpd.stub = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/analyze"

    def start(self) -> "StubRestEngine":
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.02), daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


@pytest.fixture
def rest_engine_stub() -> Iterator[Callable[..., StubRestEngine]]:
    stubs: list[StubRestEngine] = []

    def factory(responder: Callable[[dict], tuple[int, str]]) -> StubRestEngine:
        stub = StubRestEngine(responder).start()
        stubs.append(stub)
        return stub

    yield factory
    for stub in stubs:
        stub.stop()
