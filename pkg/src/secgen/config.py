"""Application configuration: one JSON document, env-indirected secrets.

Secret values (and any other string) may be written as "${VAR}" to pull the
real value from the environment at load time, keeping keys out of config
files checked into version control.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .model import EngineConfig, EngineKind, LlmConfig, TerminationPolicy
from .security_agent import bundled_rules_path
from .benchmark_agent import bundled_suite_path

DEFAULT_STORE_PATH = "secgen_store"
DEFAULT_LISTEN_ADDRESS = "127.0.0.1:8400"

_ENV_REF = re.compile(r"^\$\{([A-Za-z_][A-Za-z0-9_]*)\}$")


@dataclass(frozen=True)
class AppConfig:
    """Everything the service and CLI need to run."""

    llms: tuple[LlmConfig, ...]
    engines: tuple[EngineConfig, ...]
    policy: TerminationPolicy
    suite_path: Path
    rules_path: Path
    listen_address: str = DEFAULT_LISTEN_ADDRESS
    benchmark_interval: float | None = None
    store_path: Path = Path(DEFAULT_STORE_PATH)

    def __post_init__(self) -> None:
        if not self.llms:
            raise ConfigError("configuration needs at least one LLM")
        if not self.engines:
            raise ConfigError("configuration needs at least one analysis engine")
        if self.benchmark_interval is not None and not self.benchmark_interval > 0:
            raise ConfigError("benchmark_interval must be > 0 when set")

    def llm_named(self, name: str) -> LlmConfig | None:
        return next((llm for llm in self.llms if llm.name == name), None)

    def host_and_port(self) -> tuple[str, int]:
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen_address must be host:port, got {self.listen_address!r}")
        return host, int(port)


def _expand_env(value: Any) -> Any:
    if isinstance(value, str):
        match = _ENV_REF.match(value)
        if match:
            name = match.group(1)
            try:
                return os.environ[name]
            except KeyError:
                raise ConfigError(f"config references unset environment variable {name!r}") from None
        return value
    if isinstance(value, list):
        return [_expand_env(item) for item in value]
    if isinstance(value, dict):
        return {key: _expand_env(item) for key, item in value.items()}
    return value


def parse_llm_config(data: Mapping[str, Any]) -> LlmConfig:
    try:
        return LlmConfig(
            name=str(data["name"]),
            endpoint=str(data["endpoint"]),
            api_key=str(data.get("api_key", "")),
            model=str(data.get("model", "")),
            timeout=float(data.get("timeout", 30.0)),
            response_path=str(data.get("response_path", "choices.0.message.content")),
        )
    except KeyError as exc:
        raise ConfigError(f"LLM entry is missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_engine_config(data: Mapping[str, Any]) -> EngineConfig:
    try:
        kind = EngineKind(str(data["kind"]).lower())
        return EngineConfig(
            name=str(data["name"]),
            kind=kind,
            location=str(data.get("location", "")),
            language_scope=frozenset(
                str(tag).lower() for tag in data.get("language_scope", [])
            ),
            severity_map=dict(data.get("severity_map", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"engine entry is missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _resolve_data_path(value: str, bundled: Path, what: str) -> Path:
    # "bundled" points at the files shipped inside the package
    if value == "bundled":
        return bundled
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def parse_app_config(data: Mapping[str, Any]) -> AppConfig:
    data = _expand_env(dict(data))

    llm_entries = data.get("llms", [])
    engine_entries = data.get("engines", [])
    llms = tuple(parse_llm_config(entry) for entry in llm_entries)
    engines = tuple(parse_engine_config(entry) for entry in engine_entries)

    llm_names = [llm.name for llm in llms]
    if len(set(llm_names)) != len(llm_names):
        raise ConfigError(f"duplicate LLM names in config: {sorted(llm_names)}")
    engine_names = [engine.name for engine in engines]
    if len(set(engine_names)) != len(engine_names):
        raise ConfigError(f"duplicate engine names in config: {sorted(engine_names)}")

    policy_data = data.get("policy", {})
    try:
        policy = TerminationPolicy(max_iterations=int(policy_data.get("max_iterations", 3)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    interval = data.get("benchmark_interval")
    return AppConfig(
        llms=llms,
        engines=engines,
        policy=policy,
        suite_path=_resolve_data_path(
            str(data.get("suite_path", "bundled")), bundled_suite_path(), "suite_path"
        ),
        rules_path=_resolve_data_path(
            str(data.get("rules_path", "bundled")), bundled_rules_path(), "rules_path"
        ),
        listen_address=str(data.get("listen_address", DEFAULT_LISTEN_ADDRESS)),
        benchmark_interval=float(interval) if interval is not None else None,
        store_path=Path(str(data.get("store_path", DEFAULT_STORE_PATH))),
    )


def load_app_config(path: str | Path) -> AppConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return parse_app_config(data)
