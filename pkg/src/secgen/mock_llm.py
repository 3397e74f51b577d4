"""An in-process mock LLM server implementing the chat-completion contract.

Used by the test suite and the desk-run script so the whole stack can be
exercised without a real provider. A responder callable maps the incoming
prompt to either completion text or a scripted failure.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Union


@dataclass(frozen=True)
class MockFailure:
    """Makes the server answer with an error instead of a completion."""

    status: int = 503
    body: str | None = None  # raw body override; defaults to a JSON error


Responder = Callable[[str], Union[str, MockFailure]]


def fenced(code: str, language: str = "java") -> str:
    """Wrap code in a markdown fence the way cooperative models answer."""
    return f"Here is the code:\n\n```{language}\n{code}\n```\n"


def echo_responder(prompt: str) -> str:
    return prompt


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        mock = self.server.mock  # type: ignore[attr-defined]
        mock.request_count += 1
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)

        if mock.require_key is not None:
            expected = f"Bearer {mock.require_key}"
            if self.headers.get("Authorization") != expected:
                self._reply(401, json.dumps({"error": "invalid api key"}))
                return

        try:
            payload = json.loads(body)
            prompt = payload["messages"][-1]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            self._reply(400, json.dumps({"error": "malformed request"}))
            return
        mock.prompts.append(prompt)

        result = mock.responder(prompt)
        if isinstance(result, MockFailure):
            body_text = result.body
            if body_text is None:
                body_text = json.dumps({"error": f"scripted failure {result.status}"})
            self._reply(result.status, body_text)
            return

        completion = {"choices": [{"message": {"role": "assistant", "content": result}}]}
        self._reply(200, json.dumps(completion))

    def _reply(self, status: int, body: str) -> None:
        data = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format: str, *args: object) -> None:
        pass  # keep test output quiet


class MockLlmServer:
    """A tiny threaded HTTP server speaking the LLM wire contract."""

    def __init__(
        self,
        responder: Responder,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        require_key: str | None = None,
    ) -> None:
        self.responder = responder
        self.require_key = require_key
        self.request_count = 0
        self.prompts: list[str] = []
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.mock = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self) -> "MockLlmServer":
        self._thread = threading.Thread(
            # short poll interval keeps shutdown() fast in test suites
            target=lambda: self._httpd.serve_forever(poll_interval=0.02),
            name="secgen-mock-llm",
            daemon=True,
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockLlmServer":
        return self.start()

    def __exit__(self, *exc_info: object) -> None:
        self.stop()
