"""secgen: secure code generation orchestration.

Routes code-generation prompts to LLM endpoints, statically analyzes the
returned code, feeds findings back to the model until the code is clean or an
iteration cap is hit, and benchmarks/ranks LLMs on security challenge suites.
"""

from .model import (
    CodeArtifact,
    CodeOrigin,
    CweId,
    EngineConfig,
    EngineKind,
    Finding,
    LlmConfig,
    Severity,
    TerminationPolicy,
    severity_weight,
)
from .prompt_agent import LlmResponse, PromptText, extract_code, reformulate, send_prompt
from .security_agent import (
    AnalyzerReport,
    Rule,
    analyze_builtin,
    analyze_external,
    dedupe_and_merge,
    load_rules,
    normalize_severity,
)
from .benchmark_agent import (
    BenchmarkScheduler,
    Challenge,
    ChallengeResult,
    LlmScore,
    Ranking,
    evaluate_challenge,
    load_challenges,
    rank_llms,
    run_benchmark,
    score_llm,
)
from .orchestrator import (
    GenerationOutcome,
    GenerationRequest,
    IterationRecord,
    Orchestrator,
    select_llm,
    should_terminate,
)
from .store import RecordKind, RecordStore, StoredRecord

__version__ = "0.1.0"

__all__ = [
    "AnalyzerReport",
    "BenchmarkScheduler",
    "Challenge",
    "ChallengeResult",
    "CodeArtifact",
    "CodeOrigin",
    "CweId",
    "EngineConfig",
    "EngineKind",
    "Finding",
    "GenerationOutcome",
    "GenerationRequest",
    "IterationRecord",
    "LlmConfig",
    "LlmResponse",
    "LlmScore",
    "Orchestrator",
    "PromptText",
    "Ranking",
    "RecordKind",
    "RecordStore",
    "Rule",
    "Severity",
    "StoredRecord",
    "TerminationPolicy",
    "analyze_builtin",
    "analyze_external",
    "dedupe_and_merge",
    "evaluate_challenge",
    "extract_code",
    "load_challenges",
    "load_rules",
    "normalize_severity",
    "rank_llms",
    "reformulate",
    "run_benchmark",
    "score_llm",
    "select_llm",
    "send_prompt",
    "severity_weight",
    "should_terminate",
]
