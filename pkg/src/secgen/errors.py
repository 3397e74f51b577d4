"""Exception hierarchy shared across the package."""

from __future__ import annotations

import builtins


class SecgenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SecgenError):
    """Application configuration failed to load or validate."""


# --- prompt agent ---------------------------------------------------------

class AuthError(SecgenError):
    """LLM endpoint rejected our credentials (HTTP 401/403)."""


class TimeoutError(SecgenError, builtins.TimeoutError):
    """LLM call failed after exhausting its retry budget."""


class ProtocolError(SecgenError):
    """LLM endpoint answered, but not with the expected completion schema."""


class EmptyCode(SecgenError):
    """The model response contained no extractable code."""


class EmptyFindings(SecgenError):
    """A prompt reformulation was requested without any findings."""


# --- security agent -------------------------------------------------------

class RuleParseError(SecgenError):
    """A rule file was malformed or a rule pattern failed to compile."""


class EngineUnavailable(SecgenError):
    """An external analysis engine could not be spawned or reached."""


class AdapterParseError(SecgenError):
    """An external engine produced output that is not canonical findings JSON."""


# --- benchmark agent ------------------------------------------------------

class SuiteParseError(SecgenError):
    """A challenge suite file was malformed."""


class EmptyResults(SecgenError):
    """score_llm was called with no challenge results."""


class DuplicateLlm(SecgenError):
    """A ranking was requested over scores with repeated LLM names."""


class NoLlmConfigured(SecgenError):
    """A benchmark run needs at least one configured LLM."""


class NoEngineConfigured(SecgenError):
    """A benchmark run needs at least one configured analysis engine."""


class AlreadyScheduled(SecgenError):
    """A recurring benchmark schedule is already active."""


class BenchmarkBusy(SecgenError):
    """A benchmark run is already in progress (runs are globally exclusive)."""


# --- orchestrator ---------------------------------------------------------

class UnknownLlm(SecgenError):
    """An LLM override named something that is not configured."""


class NoEngines(SecgenError):
    """A generation request resolved to an empty engine list."""


class LlmFailure(SecgenError):
    """The LLM call failed before any iteration completed.

    Carries the partial generation trace (zero iterations) so callers can
    still report what was attempted.
    """

    def __init__(self, message: str, trace: dict | None = None):
        super().__init__(message)
        self.trace = trace


class AllEnginesUnavailable(SecgenError):
    """Every engine eligible for an analysis request was unreachable."""


# --- store ----------------------------------------------------------------

class DuplicateKey(SecgenError):
    """put_record attempted to overwrite an existing (kind, key)."""


class NotFound(SecgenError):
    """get_record found no record under the given (kind, key)."""


class StorageUnavailable(SecgenError):
    """The record store directory could not be read or written."""
