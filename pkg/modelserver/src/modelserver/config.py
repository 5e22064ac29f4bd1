"""Server configuration: one flat YAML mapping, no secrets.

Everything the server needs is non-sensitive (bind address, model ids,
limits, feature toggles), so the whole config may live in a file checked
into version control.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml

BACKENDS = ("auto", "transformers", "pattern")


class ServerConfigError(ValueError):
    """Invalid server configuration; the message names the key."""


@dataclass(frozen=True)
class ServerConfig:
    """Validated server settings.

    ``backend`` selects model loading: ``transformers`` requires the
    pretrained weights locally, ``pattern`` uses the deterministic rule
    backends, ``auto`` tries transformers and falls back to pattern.
    """

    host: str = "127.0.0.1"
    port: int = 8008
    backend: str = "auto"
    extractor_model_id: str = "Babelscape/rebel-large"
    nli_model_id: str = "tasksource/deberta-small-long-nli"
    max_text_chars: int = 100_000
    coref_enabled: bool = False
    max_new_tokens: int = 256
    num_beams: int = 3

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ServerConfigError(
                f"backend: {self.backend!r} is not one of {list(BACKENDS)}"
            )
        if not 0 <= self.port <= 65535:
            raise ServerConfigError(f"port: {self.port} outside 0..65535")
        if self.max_text_chars < 1:
            raise ServerConfigError(f"max_text_chars: must be positive, got {self.max_text_chars}")
        if self.max_new_tokens < 1:
            raise ServerConfigError(f"max_new_tokens: must be positive, got {self.max_new_tokens}")
        if self.num_beams < 1:
            raise ServerConfigError(f"num_beams: must be positive, got {self.num_beams}")
        for key in ("host", "extractor_model_id", "nli_model_id"):
            if not getattr(self, key):
                raise ServerConfigError(f"{key}: must be non-empty")


def load_server_config(path: str | Path | None = None) -> ServerConfig:
    """Read a flat YAML mapping over the defaults; unknown keys fail."""
    if path is None:
        return ServerConfig()
    file_path = Path(path)
    if not file_path.exists():
        raise ServerConfigError(f"config file not found: {file_path}")
    try:
        loaded = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ServerConfigError(f"{file_path}: invalid YAML: {exc}") from exc
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ServerConfigError(f"{file_path}: top level must be a mapping")
    known = {f.name: f for f in fields(ServerConfig)}
    values: dict[str, Any] = {}
    defaults = ServerConfig()
    for key, value in loaded.items():
        if key not in known:
            raise ServerConfigError(f"unknown config key {key!r}")
        default = getattr(defaults, key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ServerConfigError(f"{key}: expected a boolean")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ServerConfigError(f"{key}: expected an integer")
        elif not isinstance(value, str):
            raise ServerConfigError(f"{key}: expected a string")
        values[key] = value
    return ServerConfig(**values)
