"""The shared core behind both the CLI and the REST service.

Every user-facing verb (generate, analyze, benchmark, listings) goes through
one Application method, so the two frontends cannot drift apart.
"""

from __future__ import annotations

import logging
import threading
import uuid
from typing import Any, Callable

from .benchmark_agent import (
    BenchmarkScheduler,
    ScheduleHandle,
    load_challenges,
    ranking_to_json,
    run_benchmark,
)
from .config import AppConfig
from .errors import AllEnginesUnavailable, BenchmarkBusy
from .model import CodeArtifact, CodeOrigin, TerminationPolicy
from .orchestrator import GenerationRequest, Orchestrator, trace_to_json
from .prompt_agent import PromptText, send_prompt
from .security_agent import analyze_with_engines, dedupe_and_merge, load_rules
from .store import RecordStore

logger = logging.getLogger(__name__)


class Application:
    """Owns the configured LLMs, engines, rules, suite, store, and scheduler."""

    def __init__(
        self,
        config: AppConfig,
        *,
        record_store: RecordStore | None = None,
        send: Callable[..., Any] = send_prompt,
        retries: int = 2,
        backoff: float = 0.5,
    ) -> None:
        self.config = config
        self.rules = load_rules(config.rules_path.read_text())
        self.challenges = load_challenges(config.suite_path.read_text())
        self.store = record_store or RecordStore(config.store_path)
        self.scheduler = BenchmarkScheduler()
        self._send = send
        self._retries = retries
        self._backoff = backoff
        self._orchestrator = Orchestrator(
            config.llms,
            config.engines,
            self.rules,
            record_store=self.store,
            send=send,
            retries=retries,
            backoff=backoff,
        )

    # --- generation ---------------------------------------------------------

    def generate(
        self,
        prompt_text: str,
        llm_name: str | None = None,
        max_iterations: int | None = None,
    ) -> dict[str, Any]:
        """Run the secure generation loop; returns the trace JSON."""
        prompt = PromptText(text=prompt_text)
        policy = (
            TerminationPolicy(max_iterations=max_iterations)
            if max_iterations is not None
            else self.config.policy
        )
        request = GenerationRequest(
            prompt=prompt,
            policy=policy,
            engines=tuple(engine.name for engine in self.config.engines),
            llm_override=llm_name,
        )
        outcome = self._orchestrator.secure_generate(request)
        return trace_to_json(outcome)

    # --- analysis -----------------------------------------------------------

    def analyze(self, language: str, source: str) -> list[dict[str, Any]]:
        """Run every configured engine over the source and merge the findings."""
        artifact = CodeArtifact(
            language=language.lower(), source=source, origin=CodeOrigin.USER_SUPPLIED
        )
        attempted = [e for e in self.config.engines if e.in_scope(artifact.language)]
        reports, unavailable = analyze_with_engines(artifact, attempted, self.rules)
        if attempted and len(unavailable) == len(attempted):
            raise AllEnginesUnavailable(
                f"all engines unavailable: {', '.join(unavailable)}"
            )
        return [finding.to_json() for finding in dedupe_and_merge(reports)]

    # --- benchmarking ---------------------------------------------------------

    def _run_benchmark(self, run_id: str) -> None:
        run_benchmark(
            self.config.llms,
            self.challenges,
            self.config.engines,
            rules=self.rules,
            record_store=self.store,
            run_id=run_id,
            send=self._send,
            retries=self._retries,
            backoff=self._backoff,
        )

    def run_benchmark_once(self) -> str:
        """Run one benchmark synchronously; raises BenchmarkBusy when one is active."""
        run_id = uuid.uuid4().hex
        self.scheduler.schedule(lambda: self._run_benchmark(run_id), None)
        return run_id

    def start_benchmark(self) -> str:
        """Kick off one benchmark in the background and return its run id."""
        if not self.scheduler.gate.try_acquire():
            raise BenchmarkBusy("a benchmark run is already in progress")
        run_id = uuid.uuid4().hex

        def worker() -> None:
            try:
                self._run_benchmark(run_id)
            except Exception:
                logger.exception("background benchmark run %s failed", run_id)
            finally:
                self.scheduler.gate.release()

        threading.Thread(target=worker, name="secgen-benchmark", daemon=True).start()
        return run_id

    def start_recurring_benchmark(self) -> ScheduleHandle | None:
        """Start the configured interval schedule, if any."""
        if self.config.benchmark_interval is None:
            return None
        return self.scheduler.schedule(
            lambda: self._run_benchmark(uuid.uuid4().hex),
            self.config.benchmark_interval,
        )

    def benchmark_results(self) -> dict[str, Any] | None:
        ranking = self.store.latest_ranking()
        return ranking_to_json(ranking) if ranking else None

    # --- listings ---------------------------------------------------------------

    def list_llms(self) -> list[dict[str, Any]]:
        return [llm.to_public_json() for llm in self.config.llms]

    def list_engines(self) -> list[dict[str, Any]]:
        return [engine.to_public_json() for engine in self.config.engines]
