"""Talks to LLM endpoints: sends prompts, extracts code, reformulates feedback.

The wire contract is a single chat-completion-style POST shared by every
endpoint: ``{"model": ..., "messages": [{"role": "user", "content": ...}]}``
with bearer-token auth. Providers with a different shape are expected to be
fronted by a shim. ``secgen.mock_llm`` implements exactly this contract.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import requests

from .errors import AuthError, EmptyCode, EmptyFindings, ProtocolError, TimeoutError
from .model import CodeArtifact, CodeOrigin, Finding, LlmConfig

DEFAULT_RETRIES = 2
DEFAULT_BACKOFF = 0.5  # seconds; doubles per retry


@dataclass(frozen=True)
class PromptText:
    """A code-generation task for an LLM."""

    text: str
    language_hint: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("prompt text must be non-empty")


@dataclass(frozen=True)
class LlmResponse:
    """Verbatim model output plus bookkeeping."""

    raw: str
    llm_name: str
    latency: float


def _redact(text: str, secret: str) -> str:
    if secret:
        return text.replace(secret, "***")
    return text


def _walk_path(document: Any, path: str) -> Any:
    """Follow a dotted path through nested dicts/lists; digits index lists."""
    node = document
    for step in path.split("."):
        if isinstance(node, list):
            node = node[int(step)]
        elif isinstance(node, dict):
            node = node[step]
        else:
            raise KeyError(step)
    return node


def send_prompt(
    llm: LlmConfig,
    prompt: PromptText,
    *,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
    session: Any = None,
) -> LlmResponse:
    """POST the prompt to the LLM endpoint and return its completion verbatim.

    Transient transport failures (timeouts, connection errors, HTTP 429/5xx)
    are retried up to ``retries`` times with exponential backoff. 401/403 fail
    immediately as AuthError; a response that is not the expected completion
    schema fails immediately as ProtocolError. The api_key never appears in
    any raised message.

    ``sleep`` and ``session`` exist so tests can observe backoff and traffic.
    """
    poster = session if session is not None else requests
    payload = {
        "model": llm.model,
        "messages": [{"role": "user", "content": prompt.text}],
    }
    headers = {"Authorization": f"Bearer {llm.api_key}"}
    attempts = retries + 1
    delay = backoff
    last_failure = "no attempt made"
    started = time.perf_counter()

    for attempt in range(attempts):
        try:
            response = poster.post(
                llm.endpoint, json=payload, headers=headers, timeout=llm.timeout
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_failure = _redact(str(exc), llm.api_key)
        else:
            status = response.status_code
            if status in (401, 403):
                raise AuthError(
                    f"LLM {llm.name!r} rejected credentials (HTTP {status}); api key redacted"
                )
            if status == 429 or status >= 500:
                last_failure = f"HTTP {status}"
            elif status != 200:
                raise ProtocolError(
                    f"LLM {llm.name!r} answered HTTP {status}, not a completion"
                )
            else:
                return _decode_completion(llm, response, started)
        if attempt < attempts - 1:
            sleep(delay)
            delay *= 2

    raise TimeoutError(
        f"LLM {llm.name!r} unreachable after {attempts} attempts: {last_failure}"
    )


def _decode_completion(llm: LlmConfig, response: Any, started: float) -> LlmResponse:
    try:
        document = response.json()
    except ValueError:
        raise ProtocolError(
            f"LLM {llm.name!r} returned a non-JSON body"
        ) from None
    try:
        content = _walk_path(document, llm.response_path)
    except (KeyError, IndexError, TypeError, ValueError):
        raise ProtocolError(
            f"LLM {llm.name!r} response has no completion at path {llm.response_path!r}"
        ) from None
    if not isinstance(content, str):
        raise ProtocolError(
            f"LLM {llm.name!r} completion at {llm.response_path!r} is not text"
        )
    return LlmResponse(
        raw=content, llm_name=llm.name, latency=time.perf_counter() - started
    )


# --- code extraction --------------------------------------------------------

_FENCE = re.compile(r"^\s*```")


def _fenced_blocks(raw: str) -> list[tuple[str, str]]:
    """All fenced code blocks as (info-string, content) pairs, in order."""
    blocks: list[tuple[str, str]] = []
    tag = ""
    buffer: list[str] = []
    in_block = False
    for line in raw.splitlines():
        if _FENCE.match(line):
            if in_block:
                blocks.append((tag, "\n".join(buffer)))
                in_block = False
            else:
                tag = line.strip()[3:].strip().lower()
                buffer = []
                in_block = True
        elif in_block:
            buffer.append(line)
    if in_block:  # unterminated fence: take the rest as the block
        blocks.append((tag, "\n".join(buffer)))
    return blocks


def extract_code(response: LlmResponse, language_hint: str | None = None) -> CodeArtifact:
    """Pull the code out of a model response.

    Concatenates (blank-line separated) every fenced block whose info-string
    matches ``language_hint``; falls back to all fenced blocks when none
    match, and to the whole raw text when there are no fences at all.
    """
    if not response.raw.strip():
        raise EmptyCode(f"LLM {response.llm_name!r} returned a whitespace-only response")

    blocks = _fenced_blocks(response.raw)
    hint = language_hint.lower() if language_hint else None
    selected = [b for b in blocks if hint and b[0] == hint] or blocks

    if selected:
        source = "\n\n".join(content for _, content in selected)
        language = hint or next((t for t, _ in selected if t), "text")
    else:
        source = response.raw
        language = hint or "text"
    return CodeArtifact(language=language, source=source, origin=CodeOrigin.LLM_GENERATED)


# --- prompt reformulation ---------------------------------------------------

_CLOSING_INSTRUCTION = (
    "Fix every issue listed above. Return the complete corrected code in a "
    "single fenced code block, and do not change the functional behavior."
)


def reformulate(
    original: PromptText, code: CodeArtifact, findings: Sequence[Finding]
) -> PromptText:
    """Build the repair prompt: task, previous code, numbered issue list.

    Findings are sorted by (line_start, cwe) so the output is byte-identical
    for equal inputs.
    """
    if not findings:
        raise EmptyFindings("reformulate requires at least one finding")

    ordered = sorted(findings, key=lambda f: (f.line_start, f.cwe.id))
    issue_lines = [
        f"{n}. {f.cwe} ({f.severity.value}) at line {f.line_start}: {f.message}"
        for n, f in enumerate(ordered, 1)
    ]
    text = (
        f"{original.text}\n\n"
        f"The previous solution was:\n\n"
        f"```{code.language}\n{code.source}\n```\n\n"
        f"A security review of that code reported the following issues:\n"
        + "\n".join(issue_lines)
        + f"\n\n{_CLOSING_INSTRUCTION}"
    )
    return PromptText(text=text, language_hint=original.language_hint)
