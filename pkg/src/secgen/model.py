"""Shared domain types: severities, CWE ids, findings, and configuration records.

All types here are immutable value objects; they can be shared freely between
threads. The JSON encodings produced by ``to_json`` methods are the wire
format used by every other module (engine adapters, the REST service, and the
record store).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Mapping
from urllib.parse import urlparse


class Severity(Enum):
    """Five-level finding severity with a strict total order."""

    INFO = "info"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"

    def __lt__(self, other: object) -> bool:
        if isinstance(other, Severity):
            return _SEVERITY_RANK[self] < _SEVERITY_RANK[other]
        return NotImplemented

    def __le__(self, other: object) -> bool:
        if isinstance(other, Severity):
            return _SEVERITY_RANK[self] <= _SEVERITY_RANK[other]
        return NotImplemented

    def __gt__(self, other: object) -> bool:
        if isinstance(other, Severity):
            return _SEVERITY_RANK[self] > _SEVERITY_RANK[other]
        return NotImplemented

    def __ge__(self, other: object) -> bool:
        if isinstance(other, Severity):
            return _SEVERITY_RANK[self] >= _SEVERITY_RANK[other]
        return NotImplemented


_SEVERITY_RANK = {level: rank for rank, level in enumerate(Severity)}

# Super-linear weights so one critical outweighs several lows; info never
# penalizes.
_SEVERITY_WEIGHT = {
    Severity.INFO: 0,
    Severity.LOW: 1,
    Severity.MEDIUM: 2,
    Severity.HIGH: 5,
    Severity.CRITICAL: 10,
}


def severity_weight(severity: Severity) -> int:
    """Numeric penalty for one finding of the given severity."""
    return _SEVERITY_WEIGHT[severity]


def parse_severity(label: str) -> Severity:
    try:
        return Severity(label.strip().lower())
    except ValueError:
        raise ValueError(f"unknown severity label: {label!r}") from None


@dataclass(frozen=True, order=True)
class CweId:
    """A MITRE CWE number; opaque beyond being a positive integer."""

    id: int

    def __post_init__(self) -> None:
        if isinstance(self.id, bool) or not isinstance(self.id, int):
            raise ValueError(f"CWE id must be an integer, got {self.id!r}")
        if self.id < 1:
            raise ValueError(f"CWE id must be >= 1, got {self.id}")

    def __str__(self) -> str:
        return f"CWE-{self.id}"

    @classmethod
    def parse(cls, value: int | str) -> CweId:
        """Accept 327, "327", or "CWE-327" (case-insensitive)."""
        if isinstance(value, int) and not isinstance(value, bool):
            return cls(value)
        if isinstance(value, str):
            text = value.strip()
            if text.upper().startswith("CWE-"):
                text = text[4:]
            if text.isdigit():
                return cls(int(text))
        raise ValueError(f"not a CWE id: {value!r}")


@dataclass(frozen=True)
class Finding:
    """One detected security issue located in a code artifact."""

    cwe: CweId
    severity: Severity
    line_start: int
    line_end: int
    message: str
    rule_id: str
    engine: str

    def __post_init__(self) -> None:
        if self.line_start < 1:
            raise ValueError(f"line_start must be >= 1, got {self.line_start}")
        if self.line_end < self.line_start:
            raise ValueError(
                f"line_end ({self.line_end}) precedes line_start ({self.line_start})"
            )
        if not self.message.strip():
            raise ValueError("finding message must be non-empty")
        if not self.rule_id.strip():
            raise ValueError("finding rule_id must be non-empty")

    def sort_key(self) -> tuple:
        # primary order is (line_start, cwe); the rest keeps sorting total
        return (
            self.line_start,
            self.cwe.id,
            self.line_end,
            _SEVERITY_RANK[self.severity],
            self.rule_id,
            self.engine,
        )

    def overlaps(self, other: Finding) -> bool:
        return self.line_start <= other.line_end and other.line_start <= self.line_end

    def to_json(self) -> dict[str, Any]:
        return {
            "cwe": str(self.cwe),
            "severity": self.severity.value,
            "line_start": self.line_start,
            "line_end": self.line_end,
            "message": self.message,
            "rule_id": self.rule_id,
            "engine": self.engine,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Finding:
        try:
            cwe = CweId.parse(data["cwe"])
            severity = parse_severity(data["severity"])
            line_start = int(data["line_start"])
            line_end = int(data.get("line_end", line_start))
            message = str(data["message"])
            rule_id = str(data["rule_id"])
            engine = str(data.get("engine", ""))
        except KeyError as exc:
            raise ValueError(f"finding JSON missing field {exc.args[0]!r}") from None
        return cls(cwe, severity, line_start, line_end, message, rule_id, engine)


def _require_url(value: str, what: str) -> None:
    parsed = urlparse(value)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ValueError(f"{what} is not a valid http(s) URL: {value!r}")


@dataclass(frozen=True)
class LlmConfig:
    """Connection settings for one LLM endpoint.

    ``api_key`` is a secret: it is excluded from repr and from every public
    serialization; only the HTTP Authorization header ever sees it.
    """

    name: str
    endpoint: str
    api_key: str = field(repr=False)
    model: str = ""
    timeout: float = 30.0
    # Dotted path into the completion response JSON; integers index arrays.
    response_path: str = "choices.0.message.content"

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("LLM name must be non-empty")
        _require_url(self.endpoint, f"LLM {self.name!r} endpoint")
        if not self.timeout > 0:
            raise ValueError(f"LLM {self.name!r} timeout must be > 0")

    def to_public_json(self) -> dict[str, Any]:
        """Serialization safe to log or return from the API (no api_key)."""
        return {
            "name": self.name,
            "endpoint": self.endpoint,
            "model": self.model,
            "timeout": self.timeout,
        }


class EngineKind(Enum):
    BUILTIN = "builtin"
    SUBPROCESS = "subprocess"
    REST = "rest"


@dataclass(frozen=True)
class EngineConfig:
    """One analysis engine: the bundled rule engine or an external adapter."""

    name: str
    kind: EngineKind
    location: str = ""
    language_scope: frozenset[str] = frozenset()
    # Maps engine-specific severity labels (e.g. "ERROR") onto our scale.
    severity_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("engine name must be non-empty")
        if self.kind is EngineKind.BUILTIN and self.location:
            raise ValueError(f"builtin engine {self.name!r} must not set a location")
        if self.kind is EngineKind.SUBPROCESS and not self.location.strip():
            raise ValueError(f"subprocess engine {self.name!r} needs a command template")
        if self.kind is EngineKind.REST:
            _require_url(self.location, f"REST engine {self.name!r} location")

    def in_scope(self, language: str) -> bool:
        """Empty scope means the engine accepts every language."""
        return not self.language_scope or language in self.language_scope

    def to_public_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "location": self.location,
            "language_scope": sorted(self.language_scope),
        }


@dataclass(frozen=True)
class TerminationPolicy:
    """Caps how many analyze passes a generation loop may perform."""

    max_iterations: int = 3

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class CodeOrigin(Enum):
    USER_SUPPLIED = "user_supplied"
    LLM_GENERATED = "llm_generated"


_LANGUAGE_TAG = re.compile(r"[a-z0-9+._#-]+")


@dataclass(frozen=True)
class CodeArtifact:
    """A piece of source code together with its language tag and provenance."""

    language: str
    source: str
    origin: CodeOrigin

    def __post_init__(self) -> None:
        if not _LANGUAGE_TAG.fullmatch(self.language):
            raise ValueError(f"language tag must be lowercase ASCII, got {self.language!r}")
        if not self.source and self.origin is not CodeOrigin.USER_SUPPLIED:
            raise ValueError("only user-supplied artifacts may have empty source")

    def lines(self) -> list[str]:
        return self.source.splitlines()

    def line_count(self) -> int:
        return len(self.source.splitlines())

    def to_json(self) -> dict[str, Any]:
        return {
            "language": self.language,
            "source": self.source,
            "origin": self.origin.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> CodeArtifact:
        return cls(
            language=str(data["language"]),
            source=str(data["source"]),
            origin=CodeOrigin(data["origin"]),
        )


# --- timestamps ------------------------------------------------------------
# UTC at millisecond resolution; the ISO form compares lexicographically in
# chronological order, which the record store relies on.

def utc_now() -> datetime:
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=(now.microsecond // 1000) * 1000)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
