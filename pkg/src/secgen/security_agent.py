"""Static analysis: the bundled rule engine, external adapters, and merging.

The bundled engine is deliberately line-oriented regex matching with no data
flow; its job is to be fast, predictable, and honest about its precision.
Deeper analysis belongs to external engines wired in through the subprocess
or REST adapter contracts (see README).
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .errors import AdapterParseError, EngineUnavailable, RuleParseError
from .model import (
    CodeArtifact,
    CweId,
    EngineConfig,
    EngineKind,
    Finding,
    Severity,
    parse_severity,
    severity_weight,
)

logger = logging.getLogger(__name__)

BUILTIN_ENGINE_NAME = "builtin"
SUBPROCESS_TIMEOUT = 30.0  # seconds per external engine invocation
REST_TIMEOUT = 30.0


@dataclass(frozen=True)
class Rule:
    """One line-oriented detection pattern with its CWE and severity."""

    rule_id: str
    cwe: CweId
    severity: Severity
    languages: frozenset[str]
    pattern: re.Pattern[str]
    message: str

    def __post_init__(self) -> None:
        if not self.rule_id.strip():
            raise ValueError("rule_id must be non-empty")
        if not self.languages:
            raise ValueError(f"rule {self.rule_id!r} must declare at least one language")
        if not self.message.strip():
            raise ValueError(f"rule {self.rule_id!r} message must be non-empty")


@dataclass
class AnalyzerReport:
    """What one engine said about one artifact."""

    engine: str
    findings: list[Finding] = field(default_factory=list)
    exit_ok: bool = True
    diagnostics: str = ""

    def __post_init__(self) -> None:
        if not self.exit_ok:
            if self.findings:
                raise ValueError("a failed report must carry no findings")
            if not self.diagnostics.strip():
                raise ValueError("a failed report must explain itself in diagnostics")


# --- rule loading -----------------------------------------------------------

def load_rules(source: str) -> list[Rule]:
    """Parse the JSON rule-file format; see README for the schema."""
    try:
        raw = json.loads(source)
    except json.JSONDecodeError as exc:
        raise RuleParseError(f"rule file is not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise RuleParseError("rule file must be a JSON array of rule objects")

    rules: list[Rule] = []
    seen: set[str] = set()
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise RuleParseError(f"rule at index {index} is not an object")
        rule_id = str(entry.get("rule_id", "")).strip()
        if not rule_id:
            raise RuleParseError(f"rule at index {index} is missing rule_id")
        if rule_id in seen:
            raise RuleParseError(f"duplicate rule_id {rule_id!r} at index {index}")
        seen.add(rule_id)
        try:
            pattern = re.compile(entry["pattern"])
        except KeyError:
            raise RuleParseError(f"rule {rule_id!r} at index {index} has no pattern") from None
        except re.error as exc:
            raise RuleParseError(
                f"rule {rule_id!r} at index {index} pattern does not compile: {exc}"
            ) from None
        try:
            rules.append(
                Rule(
                    rule_id=rule_id,
                    cwe=CweId.parse(entry["cwe"]),
                    severity=parse_severity(entry["severity"]),
                    languages=frozenset(str(t).lower() for t in entry["languages"]),
                    pattern=pattern,
                    message=str(entry["message"]),
                )
            )
        except KeyError as exc:
            raise RuleParseError(
                f"rule {rule_id!r} at index {index} is missing field {exc.args[0]!r}"
            ) from None
        except ValueError as exc:
            raise RuleParseError(f"rule {rule_id!r} at index {index}: {exc}") from None
    return rules


def bundled_rules_path() -> Path:
    return Path(str(resources.files("secgen").joinpath("data/rules.json")))


def load_bundled_rules() -> list[Rule]:
    return load_rules(bundled_rules_path().read_text())


# --- built-in engine --------------------------------------------------------

def analyze_builtin(code: CodeArtifact, rules: Sequence[Rule]) -> AnalyzerReport:
    """Apply every language-matching rule line by line.

    One finding per (rule, matching line); pure and deterministic.
    """
    findings: list[Finding] = []
    applicable = [r for r in rules if code.language in r.languages]
    if applicable:
        for lineno, line in enumerate(code.lines(), 1):
            for rule in applicable:
                match = rule.pattern.search(line)
                if match:
                    findings.append(
                        Finding(
                            cwe=rule.cwe,
                            severity=rule.severity,
                            line_start=lineno,
                            line_end=lineno,
                            message=rule.message.replace("{match}", match.group(0)),
                            rule_id=rule.rule_id,
                            engine=BUILTIN_ENGINE_NAME,
                        )
                    )
    findings.sort(key=Finding.sort_key)
    return AnalyzerReport(engine=BUILTIN_ENGINE_NAME, findings=findings)


# --- severity normalization --------------------------------------------------

def normalize_severity(
    engine_name: str, raw_label: str, mapping: Mapping[str, str] | None = None
) -> Severity:
    """Map an engine-specific severity label onto the five-level scale.

    Canonical labels pass through untouched; unknown labels default to MEDIUM
    with a logged diagnostic.
    """
    label = raw_label.strip()
    try:
        return parse_severity(label)
    except ValueError:
        pass
    if mapping:
        mapped = mapping.get(label) or mapping.get(label.lower()) or mapping.get(label.upper())
        if mapped is not None:
            return parse_severity(mapped)
    logger.warning(
        "engine %r reported unknown severity label %r; defaulting to medium",
        engine_name,
        raw_label,
    )
    return Severity.MEDIUM


# --- external engine adapters -------------------------------------------------

def _decode_findings(text: str, engine: EngineConfig, code: CodeArtifact) -> list[Finding]:
    """Parse canonical findings JSON from an external engine.

    The engine field is overridden with the configured engine name; severity
    labels run through the engine's normalization map. Line numbers outside
    the artifact are non-conforming output.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AdapterParseError(f"engine {engine.name!r} output is not JSON: {exc}") from None
    if not isinstance(raw, list):
        raise AdapterParseError(f"engine {engine.name!r} output is not a JSON array")

    limit = max(1, code.line_count())
    findings: list[Finding] = []
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise AdapterParseError(
                f"engine {engine.name!r} finding at index {index} is not an object"
            )
        entry = dict(entry)
        entry["severity"] = normalize_severity(
            engine.name, str(entry.get("severity", "")), engine.severity_map
        ).value
        entry["engine"] = engine.name
        try:
            finding = Finding.from_json(entry)
        except ValueError as exc:
            raise AdapterParseError(
                f"engine {engine.name!r} finding at index {index}: {exc}"
            ) from None
        if finding.line_end > limit:
            raise AdapterParseError(
                f"engine {engine.name!r} finding at index {index} cites line "
                f"{finding.line_end}, beyond the {limit}-line artifact"
            )
        findings.append(finding)
    return findings


def _suffix_for(language: str) -> str:
    return "." + language if language.isalnum() else ".txt"


def _run_subprocess_engine(engine: EngineConfig, code: CodeArtifact) -> AnalyzerReport:
    tmp = tempfile.NamedTemporaryFile(
        "w", suffix=_suffix_for(code.language), delete=False
    )
    try:
        tmp.write(code.source)
        tmp.close()
        argv = [part.replace("{file}", tmp.name) for part in shlex.split(engine.location)]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=SUBPROCESS_TIMEOUT
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EngineUnavailable(f"engine {engine.name!r} failed to run: {exc}") from None
        # exit 0 = clean, 1 = findings; anything else is an engine failure
        if proc.returncode not in (0, 1):
            return AnalyzerReport(
                engine=engine.name,
                exit_ok=False,
                diagnostics=(
                    f"engine exited with status {proc.returncode}: "
                    f"{proc.stderr.strip() or proc.stdout.strip() or 'no output'}"
                ),
            )
        try:
            findings = _decode_findings(proc.stdout, engine, code)
        except AdapterParseError as exc:
            return AnalyzerReport(engine=engine.name, exit_ok=False, diagnostics=str(exc))
        return AnalyzerReport(engine=engine.name, findings=findings)
    finally:
        Path(tmp.name).unlink(missing_ok=True)


def _run_rest_engine(engine: EngineConfig, code: CodeArtifact) -> AnalyzerReport:
    payload = {"language": code.language, "source": code.source}
    try:
        response = requests.post(engine.location, json=payload, timeout=REST_TIMEOUT)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise EngineUnavailable(f"engine {engine.name!r} unreachable: {exc}") from None
    if response.status_code != 200:
        return AnalyzerReport(
            engine=engine.name,
            exit_ok=False,
            diagnostics=f"engine answered HTTP {response.status_code}",
        )
    try:
        findings = _decode_findings(response.text, engine, code)
    except AdapterParseError as exc:
        return AnalyzerReport(engine=engine.name, exit_ok=False, diagnostics=str(exc))
    return AnalyzerReport(engine=engine.name, findings=findings)


def analyze_external(engine: EngineConfig, code: CodeArtifact) -> AnalyzerReport:
    """Run one external engine over the artifact.

    Raises EngineUnavailable when the engine cannot be spawned or reached;
    output that is not canonical findings JSON yields a failed report with
    diagnostics instead.
    """
    if engine.kind is EngineKind.SUBPROCESS:
        return _run_subprocess_engine(engine, code)
    if engine.kind is EngineKind.REST:
        return _run_rest_engine(engine, code)
    raise ValueError(f"engine {engine.name!r} is not an external engine")


def analyze_with_engines(
    code: CodeArtifact,
    engines: Sequence[EngineConfig],
    rules: Sequence[Rule],
) -> tuple[list[AnalyzerReport], list[str]]:
    """Run every in-scope engine; returns (reports, names of unreachable engines).

    Unreachable engines contribute a failed report so diagnostics survive;
    engines whose language scope excludes the artifact are skipped entirely.
    """
    reports: list[AnalyzerReport] = []
    unavailable: list[str] = []
    for engine in engines:
        if not engine.in_scope(code.language):
            continue
        if engine.kind is EngineKind.BUILTIN:
            reports.append(analyze_builtin(code, rules))
            continue
        try:
            reports.append(analyze_external(engine, code))
        except EngineUnavailable as exc:
            logger.warning("%s", exc)
            unavailable.append(engine.name)
            reports.append(
                AnalyzerReport(engine=engine.name, exit_ok=False, diagnostics=str(exc))
            )
    return reports, unavailable


# --- merging ------------------------------------------------------------------

def dedupe_and_merge(reports: Iterable[AnalyzerReport]) -> list[Finding]:
    """Collapse findings from successful reports into one finding per issue.

    Findings are grouped by (cwe, transitively-overlapping line ranges). Each
    group keeps the attributes of its highest-severity member (earliest seen
    wins ties) with the engine field rewritten to every distinct engine name
    in first-seen order, joined by "+".
    """
    findings = [f for report in reports if report.exit_ok for f in report.findings]
    return merge_findings(findings)


def merge_findings(findings: Sequence[Finding]) -> list[Finding]:
    by_cwe: dict[int, list[tuple[int, Finding]]] = {}
    for position, finding in enumerate(findings):
        by_cwe.setdefault(finding.cwe.id, []).append((position, finding))

    merged: list[Finding] = []
    for group in by_cwe.values():
        group.sort(key=lambda item: (item[1].line_start, item[1].line_end, item[0]))
        cluster: list[tuple[int, Finding]] = []
        cluster_end = -1
        for position, finding in group:
            if cluster and finding.line_start > cluster_end:
                merged.append(_collapse(cluster))
                cluster = []
                cluster_end = -1
            cluster.append((position, finding))
            cluster_end = max(cluster_end, finding.line_end)
        if cluster:
            merged.append(_collapse(cluster))

    merged.sort(key=Finding.sort_key)
    return merged


def _collapse(cluster: list[tuple[int, Finding]]) -> Finding:
    representative = max(
        cluster, key=lambda item: (severity_weight(item[1].severity), -item[0])
    )[1]
    engines: list[str] = []
    for position, finding in sorted(cluster, key=lambda item: item[0]):
        if finding.engine and finding.engine not in engines:
            engines.append(finding.engine)
    engine = "+".join(engines)
    if engine == representative.engine:
        return representative
    return Finding(
        cwe=representative.cwe,
        severity=representative.severity,
        line_start=representative.line_start,
        line_end=representative.line_end,
        message=representative.message,
        rule_id=representative.rule_id,
        engine=engine,
    )
