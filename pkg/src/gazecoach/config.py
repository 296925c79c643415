"""Run configuration: one declarative object driving every pipeline run.

Configs load from YAML (JSON is valid YAML, so both work), validate eagerly,
and echo back as a dict so a run's effective settings can be printed and
stored next to its outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import yaml

from .complexity import POLICIES, POLICY_BY_COMPLEXITY

MODE_LLM = "llm"
MODE_REFERENCE = "reference"
MODES = (MODE_LLM, MODE_REFERENCE)

MATCHER_EXACT = "exact"
MATCHER_LLM = "llm_matcher"
MATCHERS = (MATCHER_EXACT, MATCHER_LLM)

BACKEND_REMOTE = "remote"
BACKEND_SCRIPTED = "scripted"
BACKEND_KINDS = (BACKEND_REMOTE, BACKEND_SCRIPTED)


class ConfigError(ValueError):
    """A config value is missing, mistyped, or out of range."""

    def __init__(self, key: str, reason: str) -> None:
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


@dataclass(frozen=True)
class Thresholds:
    """Deterministic-classifier knobs; defaults match the synthesis rules."""

    radius: float = 0.1
    dwell_fraction: float = 0.5

    def validate(self) -> None:
        if not 0 < self.radius:
            raise ConfigError("thresholds.radius", f"must be > 0, got {self.radius}")
        if not 0 < self.dwell_fraction <= 1:
            raise ConfigError(
                "thresholds.dwell_fraction",
                f"must be in (0, 1], got {self.dwell_fraction}",
            )


@dataclass(frozen=True)
class BackendSettings:
    """Where chat completions come from.

    Remote backends read their credential from the environment variable named
    by api_key_env; the secret itself never lives in config.
    """

    kind: str
    base_url: str | None = None
    model_id: str | None = None
    api_key_env: str | None = None
    script_path: str | None = None
    timeout_s: float = 60.0
    max_tokens: int = 1024
    max_concurrent: int = 8

    def validate(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(
                "backend.kind", f"must be one of {BACKEND_KINDS}, got {self.kind!r}"
            )
        if self.kind == BACKEND_REMOTE:
            for name in ("base_url", "model_id", "api_key_env"):
                if not getattr(self, name):
                    raise ConfigError(f"backend.{name}", "required for remote backend")
        else:
            if not self.script_path:
                raise ConfigError(
                    "backend.script_path", "required for scripted backend"
                )
        if self.timeout_s <= 0:
            raise ConfigError("backend.timeout_s", "must be positive")
        if self.max_tokens < 1:
            raise ConfigError("backend.max_tokens", "must be a positive int")
        if self.max_concurrent < 1:
            raise ConfigError("backend.max_concurrent", "must be a positive int")


@dataclass(frozen=True)
class RunConfig:
    backend: BackendSettings | None = None
    temperature: float = 0.2
    policy: str = POLICY_BY_COMPLEXITY
    agent_cap: int | None = None
    mode: str = MODE_REFERENCE
    communication: bool = False
    matcher: str = MATCHER_EXACT
    synonym_table_path: str | None = None
    tolerance_ms: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)
    # None means "as many workers as the case has agents".
    max_parallel_agents: int | None = None
    max_parallel_cases: int = 4
    seed: int = 0

    def validate(self) -> None:
        if not 0 <= self.temperature <= 2:
            raise ConfigError(
                "temperature", f"must be in [0, 2], got {self.temperature}"
            )
        if self.policy not in POLICIES:
            raise ConfigError(
                "policy", f"must be one of {POLICIES}, got {self.policy!r}"
            )
        if self.agent_cap is not None and self.agent_cap < 1:
            raise ConfigError("agent_cap", "must be a positive int or omitted")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.matcher not in MATCHERS:
            raise ConfigError(
                "matcher", f"must be one of {MATCHERS}, got {self.matcher!r}"
            )
        if self.tolerance_ms < 0:
            raise ConfigError("tolerance_ms", "must be nonnegative")
        self.thresholds.validate()
        if self.max_parallel_agents is not None and self.max_parallel_agents < 1:
            raise ConfigError("max_parallel_agents", "must be a positive int")
        if self.max_parallel_cases < 1:
            raise ConfigError("max_parallel_cases", "must be a positive int")
        needs_backend = self.mode == MODE_LLM or self.matcher == MATCHER_LLM
        if needs_backend and self.backend is None:
            raise ConfigError(
                "backend", f"required when mode={self.mode!r}, matcher={self.matcher!r}"
            )
        if self.backend is not None:
            self.backend.validate()

    def to_dict(self) -> dict[str, Any]:
        backend = None
        if self.backend is not None:
            backend = {
                "kind": self.backend.kind,
                "base_url": self.backend.base_url,
                "model_id": self.backend.model_id,
                "api_key_env": self.backend.api_key_env,
                "script_path": self.backend.script_path,
                "timeout_s": self.backend.timeout_s,
                "max_tokens": self.backend.max_tokens,
                "max_concurrent": self.backend.max_concurrent,
            }
        return {
            "backend": backend,
            "temperature": self.temperature,
            "policy": self.policy,
            "agent_cap": self.agent_cap,
            "mode": self.mode,
            "communication": self.communication,
            "matcher": self.matcher,
            "synonym_table_path": self.synonym_table_path,
            "tolerance_ms": self.tolerance_ms,
            "thresholds": {
                "radius": self.thresholds.radius,
                "dwell_fraction": self.thresholds.dwell_fraction,
            },
            "max_parallel_agents": self.max_parallel_agents,
            "max_parallel_cases": self.max_parallel_cases,
            "seed": self.seed,
        }


_SCALAR_FIELDS: dict[str, type | tuple[type, ...]] = {
    "temperature": (int, float),
    "policy": str,
    "agent_cap": int,
    "mode": str,
    "communication": bool,
    "matcher": str,
    "synonym_table_path": str,
    "tolerance_ms": int,
    "max_parallel_agents": int,
    "max_parallel_cases": int,
    "seed": int,
}

_BACKEND_FIELDS: dict[str, type | tuple[type, ...]] = {
    "kind": str,
    "base_url": str,
    "model_id": str,
    "api_key_env": str,
    "script_path": str,
    "timeout_s": (int, float),
    "max_tokens": int,
    "max_concurrent": int,
}

_THRESHOLD_FIELDS: dict[str, type | tuple[type, ...]] = {
    "radius": (int, float),
    "dwell_fraction": (int, float),
}


def _typed(section: str, key: str, value: Any, want: type | tuple[type, ...]) -> Any:
    label = f"{section}.{key}" if section else key
    # bool is an int subclass; only accept it where bool is what we want.
    if isinstance(value, bool) and want is not bool:
        raise ConfigError(label, f"expected {want}, got bool")
    if not isinstance(value, want):  # type: ignore[arg-type]
        raise ConfigError(label, f"expected {want}, got {type(value).__name__}")
    return value


def _parse_section(
    section: str,
    data: Mapping[str, Any],
    schema: dict[str, type | tuple[type, ...]],
) -> dict[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError(section or "config", "expected a mapping")
    unknown = set(data) - set(schema)
    if unknown:
        label = f"{section}.{sorted(unknown)[0]}" if section else sorted(unknown)[0]
        raise ConfigError(label, "unknown key")
    out: dict[str, Any] = {}
    for key, value in data.items():
        if value is None:
            continue
        out[key] = _typed(section, key, value, schema[key])
    return out


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from plain parsed data."""
    if not isinstance(data, Mapping):
        raise ConfigError("config", "top level must be a mapping")
    known = set(_SCALAR_FIELDS) | {"backend", "thresholds"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    kwargs: dict[str, Any] = _parse_section(
        "", {k: v for k, v in data.items() if k in _SCALAR_FIELDS}, _SCALAR_FIELDS
    )
    if data.get("backend") is not None:
        kwargs["backend"] = BackendSettings(
            **_parse_section("backend", data["backend"], _BACKEND_FIELDS)
        )
    if data.get("thresholds") is not None:
        kwargs["thresholds"] = Thresholds(
            **_parse_section("thresholds", data["thresholds"], _THRESHOLD_FIELDS)
        )
    config = RunConfig(**kwargs)
    config.validate()
    return config


def load_config(path: str) -> RunConfig:
    """Read a YAML or JSON config file."""
    with open(path, "rb") as handle:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"unparseable file: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data)


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Replace top-level fields, dropping None values; revalidates."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    updated = replace(config, **changes) if changes else config
    updated.validate()
    return updated
