"""The secure code generation loop: generate, analyze, feed back, repeat.

One iteration is one LLM call followed by one analysis pass. The loop ends as
soon as the analysis comes back clean or the iteration cap is reached; either
way the user receives the last code together with its findings.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from . import store as store_module
from .benchmark_agent import Ranking
from .errors import (
    AuthError,
    EmptyCode,
    LlmFailure,
    NoEngines,
    ProtocolError,
    TimeoutError,
    UnknownLlm,
)
from .model import (
    CodeArtifact,
    EngineConfig,
    Finding,
    LlmConfig,
    TerminationPolicy,
    utc_now,
)
from .prompt_agent import PromptText, extract_code, reformulate, send_prompt
from .security_agent import Rule, analyze_with_engines, dedupe_and_merge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationRequest:
    """What the user asked for, plus loop limits and engine selection."""

    prompt: PromptText
    policy: TerminationPolicy
    engines: tuple[str, ...]
    llm_override: str | None = None

    def __post_init__(self) -> None:
        if not self.engines:
            raise ValueError("a generation request needs at least one engine name")


@dataclass(frozen=True)
class IterationRecord:
    """One generate-and-analyze pass."""

    index: int
    prompt_used: PromptText
    code: CodeArtifact
    findings: tuple[Finding, ...]

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("iteration index is 1-based")


@dataclass(frozen=True)
class GenerationOutcome:
    """Everything the loop produced; final_code is the last iteration's code."""

    final_code: CodeArtifact
    final_findings: tuple[Finding, ...]
    iterations: tuple[IterationRecord, ...]
    clean: bool
    llm_name: str
    diagnostics: str = ""

    def __post_init__(self) -> None:
        if not self.iterations:
            raise ValueError("an outcome requires at least one iteration")
        if self.clean != (len(self.final_findings) == 0):
            raise ValueError("clean must hold exactly when final_findings is empty")
        if self.final_code != self.iterations[-1].code:
            raise ValueError("final_code must equal the last iteration's code")


def select_llm(
    llms: Sequence[LlmConfig],
    ranking: Ranking | None = None,
    override: str | None = None,
) -> LlmConfig:
    """Pick the LLM: explicit override, else benchmark winner, else config order."""
    if not llms:
        raise ValueError("no LLMs configured")
    by_name = {llm.name: llm for llm in llms}
    if override is not None:
        try:
            return by_name[override]
        except KeyError:
            raise UnknownLlm(f"no configured LLM named {override!r}") from None
    if ranking is not None:
        # a stale ranking may name LLMs that are no longer configured
        for entry in ranking.entries:
            if entry.llm_name in by_name:
                return by_name[entry.llm_name]
    return llms[0]


def should_terminate(
    findings: Sequence[Finding], iteration: int, policy: TerminationPolicy
) -> bool:
    """True when the code is clean or the analysis-pass budget is spent."""
    if iteration < 1:
        raise ValueError("iteration is 1-based")
    return not findings or iteration >= policy.max_iterations


def trace_to_json(outcome: GenerationOutcome) -> dict[str, Any]:
    """The persisted/wire form of a generation run; field names are fixed."""
    return {
        "llm_name": outcome.llm_name,
        "clean": outcome.clean,
        "iterations": [
            {
                "index": record.index,
                "prompt_used": record.prompt_used.text,
                "code": record.code.to_json(),
                "findings": [f.to_json() for f in record.findings],
            }
            for record in outcome.iterations
        ],
    }


class Orchestrator:
    """Wires the prompt agent and security agent under a termination policy."""

    def __init__(
        self,
        llms: Sequence[LlmConfig],
        engines: Sequence[EngineConfig],
        rules: Sequence[Rule],
        *,
        record_store: store_module.RecordStore | None = None,
        send: Callable[..., Any] = send_prompt,
        retries: int = 2,
        backoff: float = 0.5,
    ) -> None:
        self.llms = list(llms)
        self.engines = {engine.name: engine for engine in engines}
        self.rules = list(rules)
        self.record_store = record_store
        self._send = send
        self._retries = retries
        self._backoff = backoff

    def _resolve_engines(self, names: Sequence[str]) -> list[EngineConfig]:
        resolved = [self.engines[name] for name in names if name in self.engines]
        if not resolved:
            raise NoEngines(f"none of the requested engines exist: {list(names)}")
        return resolved

    def _latest_ranking(self) -> Ranking | None:
        if self.record_store is None:
            return None
        return self.record_store.latest_ranking()

    def secure_generate(self, request: GenerationRequest) -> GenerationOutcome:
        """Run the generation loop and persist its trace.

        The first iteration sends the user's prompt verbatim; later iterations
        send a reformulation carrying the previous code and its findings. A
        failed LLM call mid-loop returns the iterations gathered so far with
        diagnostics; a failure before any iteration raises LlmFailure.
        """
        engines = self._resolve_engines(request.engines)
        llm = select_llm(self.llms, self._latest_ranking(), request.llm_override)

        iterations: list[IterationRecord] = []
        prompt = request.prompt
        diagnostics = ""

        for index in range(1, request.policy.max_iterations + 1):
            try:
                response = self._send(
                    llm, prompt, retries=self._retries, backoff=self._backoff
                )
                code = extract_code(response, request.prompt.language_hint)
            except (AuthError, TimeoutError, ProtocolError, EmptyCode) as exc:
                if not iterations:
                    raise LlmFailure(
                        f"LLM {llm.name!r} failed before producing any code: {exc}",
                        trace={"llm_name": llm.name, "clean": False, "iterations": []},
                    ) from exc
                diagnostics = f"iteration {index} aborted: {exc}"
                logger.warning("%s; reporting the last completed iteration", diagnostics)
                break

            reports, _ = analyze_with_engines(code, engines, self.rules)
            findings = dedupe_and_merge(reports)
            iterations.append(
                IterationRecord(
                    index=index,
                    prompt_used=prompt,
                    code=code,
                    findings=tuple(findings),
                )
            )
            if should_terminate(findings, index, request.policy):
                break
            prompt = reformulate(request.prompt, code, findings)

        last = iterations[-1]
        outcome = GenerationOutcome(
            final_code=last.code,
            final_findings=last.findings,
            iterations=tuple(iterations),
            clean=not last.findings,
            llm_name=llm.name,
            diagnostics=diagnostics,
        )
        self._persist(outcome)
        return outcome

    def _persist(self, outcome: GenerationOutcome) -> None:
        if self.record_store is None:
            return
        self.record_store.put_record(
            store_module.StoredRecord(
                key=uuid.uuid4().hex,
                kind=store_module.RecordKind.GENERATION_TRACE,
                created_at=utc_now(),
                payload=trace_to_json(outcome),
            )
        )
