"""Layered run configuration: defaults, then YAML file, then overrides.

The file is a single YAML document with nested sections; unknown
sections or keys are rejected so typos fail fast.  Command-line
overrides use ``section.key=value`` paths and always win over the file.
Secrets never live here: API keys are read from environment variables
by the HTTP clients.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .clients import (
    EchoGenerationClient,
    EntailmentClient,
    GenerationClient,
    HttpEntailmentClient,
    HttpGenerationClient,
    LexicalEntailmentClient,
    StaticGenerationClient,
    TemplateGenerationClient,
)
from .corpus import ChunkConfig
from .extraction import DEFAULT_VERB_LEXICON, ExtractorConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_DEFAULTS: dict[str, dict[str, Any]] = {
    "corpus": {
        "forget_path": None,
        "retain_path": None,
    },
    "chunking": {
        "window_words": 256,
        "overlap_words": 32,
    },
    "extractor": {
        "backend": "rule_based",
        "endpoint_url": None,
        "timeout_ms": 10000,
        "max_retries": 2,
        "max_in_flight": 4,
        "verb_lexicon": list(DEFAULT_VERB_LEXICON),
    },
    "synthesis": {
        "client": "template",
        "endpoint_url": None,
        "model": "template-v1",
        "temperature": 0.2,
        "context_budget": 4000,
        "parse_retries": 2,
        "questions_per_fact": 3,
        "max_in_flight": 4,
    },
    "model": {
        "client": "echo",
        "endpoint_url": None,
        "model": "model-under-test",
        "static_reply": "I don't know.",
    },
    "judge": {
        "client": "lexical",
        "endpoint_url": None,
        "max_in_flight": 4,
    },
    "limits": {
        "max_failure_rate": 0.25,
    },
    "run": {
        "run_id": "default",
        "out_dir": "runs",
        "emit_full_suite": False,
    },
}

_CLIENT_CHOICES = {
    "synthesis": ("template", "http"),
    "model": ("echo", "static", "http"),
    "judge": ("lexical", "http"),
}


@dataclass
class Config:
    """Validated effective configuration as one nested mapping."""

    data: dict[str, dict[str, Any]]

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.data[section]

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return copy.deepcopy(self.data)

    def chunk_config(self) -> ChunkConfig:
        c = self.data["chunking"]
        return ChunkConfig(
            window_words=c["window_words"], overlap_words=c["overlap_words"]
        )

    def extractor_config(self) -> ExtractorConfig:
        e = self.data["extractor"]
        return ExtractorConfig(
            backend=e["backend"],
            endpoint_url=e["endpoint_url"],
            timeout_ms=e["timeout_ms"],
            max_retries=e["max_retries"],
            max_in_flight=e["max_in_flight"],
            verb_lexicon=tuple(e["verb_lexicon"]),
        )

    def synthesis_client(self) -> GenerationClient:
        s = self.data["synthesis"]
        if s["client"] == "template":
            return TemplateGenerationClient(questions_per_fact=s["questions_per_fact"])
        return HttpGenerationClient(
            endpoint_url=s["endpoint_url"],
            model=s["model"],
            temperature=s["temperature"],
            api_key_env="AUDIT_GEN_API_KEY",
        )

    def model_client(self) -> GenerationClient:
        m = self.data["model"]
        if m["client"] == "echo":
            return EchoGenerationClient()
        if m["client"] == "static":
            return StaticGenerationClient(reply=m["static_reply"])
        return HttpGenerationClient(
            endpoint_url=m["endpoint_url"],
            model=m["model"],
            temperature=0.0,
            api_key_env="AUDIT_MODEL_API_KEY",
        )

    def judge_client(self) -> EntailmentClient:
        j = self.data["judge"]
        if j["client"] == "lexical":
            return LexicalEntailmentClient()
        return HttpEntailmentClient(endpoint_url=j["endpoint_url"])


def _check_types(section: str, key: str, value: Any, default: Any) -> Any:
    """Coerce/validate one merged value against its default's type."""
    if default is None or value is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise ConfigError(f"{section}.{key}: expected a list of strings")
        return value
    raise ConfigError(f"{section}.{key}: unsupported value type")


def _parse_override_value(raw: str, default: Any) -> Any:
    """Interpret an override string using the default value's type."""
    if raw.lower() in ("null", "none", "~"):
        return None
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse integer from {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse number from {raw!r}") from exc
    if isinstance(default, list):
        return [part for part in raw.split(",") if part]
    return raw


def _validate_semantics(data: dict[str, dict[str, Any]]) -> None:
    for section in ("synthesis", "model", "judge"):
        client = data[section]["client"]
        choices = _CLIENT_CHOICES[section]
        if client not in choices:
            raise ConfigError(
                f"{section}.client: {client!r} is not one of {list(choices)}"
            )
        url = data[section]["endpoint_url"]
        if client == "http" and not url:
            raise ConfigError(f"{section}.endpoint_url: required for the http client")
        if client != "http" and url:
            raise ConfigError(
                f"{section}.endpoint_url: set but {section}.client is {client!r}"
            )
    if not 0.0 <= data["limits"]["max_failure_rate"] <= 1.0:
        raise ConfigError("limits.max_failure_rate: must be in [0, 1]")
    if not 1 <= data["synthesis"]["questions_per_fact"] <= 5:
        raise ConfigError("synthesis.questions_per_fact: must be in 1..5")
    for section in ("synthesis", "judge"):
        if data[section]["max_in_flight"] < 1:
            raise ConfigError(f"{section}.max_in_flight: must be at least 1")
    run_id = data["run"]["run_id"]
    if not run_id or "/" in run_id or run_id in (".", ".."):
        raise ConfigError(f"run.run_id: {run_id!r} is not a valid directory name")
    # Constructor validation covers chunking and extractor ranges.
    cfg = Config(data)
    try:
        cfg.chunk_config()
        cfg.extractor_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> Config:
    """Build the effective config from defaults, file, and overrides.

    ``overrides`` entries are ``section.key=value`` strings.  Unknown
    sections/keys anywhere raise ConfigError, as do type or range
    violations.
    """
    data = copy.deepcopy(_DEFAULTS)
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file not found: {file_path}")
        try:
            loaded = yaml.safe_load(file_path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{file_path}: invalid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{file_path}: top level must be a mapping")
        for section, values in loaded.items():
            if section not in data:
                raise ConfigError(f"unknown config section {section!r}")
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key, value in values.items():
                if key not in data[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                data[section][key] = _check_types(
                    section, key, value, _DEFAULTS[section][key]
                )
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, key = dotted.split(".", 1)
        if section not in data or key not in data[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        value = _parse_override_value(raw, _DEFAULTS[section][key])
        data[section][key] = _check_types(section, key, value, _DEFAULTS[section][key])
    _validate_semantics(data)
    return Config(data)
