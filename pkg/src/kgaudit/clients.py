"""Clients for the generation, entailment, and extraction services.

Three remote contracts, all JSON over POST:

* generation: chat-style ``{"model", "messages", "temperature"}`` in,
  ``{"content": string}`` out
* entailment: ``{"premise", "hypothesis"}`` in, ``{"label", "scores"}`` out
* extraction: ``{"text"}`` in, ``{"triples": [{"head","relation","tail"}]}`` out

Each HTTP client retries transport failures with a short backoff and
validates the response schema, raising SchemaError on violations so
callers can distinguish bad data from unreachable services.  API keys
are read from environment variables only; they never appear in configs.

The offline clients (TemplateGenerationClient, EchoGenerationClient,
StaticGenerationClient, LexicalEntailmentClient) are deterministic
stand-ins that let every pipeline stage run with no service deployed.
"""

from __future__ import annotations

import ast
import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Any, Protocol

import requests

log = logging.getLogger(__name__)

ENTAILMENT_LABELS: tuple[str, ...] = ("entailment", "neutral", "contradiction")

# Base delay between retry attempts, doubled per attempt.
RETRY_BACKOFF_S = 0.1


class ClientError(RuntimeError):
    """A remote call failed after retries or returned unusable data."""


class TransportError(ClientError):
    """Network failure, timeout, or non-200 status after all retries."""


class SchemaError(ClientError):
    """Response parsed but did not match the documented schema."""


class GenerationClient(Protocol):
    def generate(self, system_text: str | None, user_text: str) -> str: ...


class EntailmentClient(Protocol):
    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]: ...


class ExtractorClient(Protocol):
    def extract(self, text: str) -> list[tuple[str, str, str]]: ...


def _brief(value: Any, limit: int = 120) -> str:
    text = repr(value)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _post_json(
    url: str,
    payload: dict[str, Any],
    timeout_ms: int,
    max_retries: int,
    api_key: str | None = None,
) -> Any:
    """POST JSON and return the decoded body, retrying on failure.

    Attempts max_retries + 1 times total.  Raises TransportError for
    network problems and non-200 statuses, SchemaError for bodies that
    are not JSON.
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: ClientError = TransportError(f"POST {url}: no attempt made")
    for attempt in range(max_retries + 1):
        if attempt:
            time.sleep(RETRY_BACKOFF_S * (2 ** (attempt - 1)))
        try:
            resp = requests.post(
                url, json=payload, headers=headers, timeout=timeout_ms / 1000.0
            )
        except requests.RequestException as exc:
            last_error = TransportError(f"POST {url} failed: {exc}")
            continue
        if resp.status_code != 200:
            last_error = TransportError(
                f"POST {url} returned status {resp.status_code}"
            )
            continue
        try:
            return resp.json()
        except ValueError as exc:
            last_error = SchemaError(f"POST {url} returned a non-JSON body: {exc}")
            continue
    raise last_error


def validate_entailment_response(body: Any) -> tuple[str, dict[str, float]]:
    """Check an entailment response body; return (label, scores).

    The body must carry one of the three labels and a scores map with a
    value in [0, 1] for every label.  Extra score keys are ignored.
    """
    if not isinstance(body, dict):
        raise SchemaError(f"entailment response is not an object: {_brief(body)}")
    label = body.get("label")
    if label not in ENTAILMENT_LABELS:
        raise SchemaError(f"entailment response has invalid label: {_brief(label)}")
    raw_scores = body.get("scores")
    if not isinstance(raw_scores, dict):
        raise SchemaError(
            f"entailment response has no scores object: {_brief(body)}"
        )
    scores: dict[str, float] = {}
    for name in ENTAILMENT_LABELS:
        value = raw_scores.get(name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"entailment score {name!r} is not numeric: {_brief(value)}")
        if not 0.0 <= value <= 1.0:
            raise SchemaError(f"entailment score {name!r} outside [0, 1]: {value}")
        scores[name] = float(value)
    return label, scores


def validate_extraction_response(body: Any) -> list[tuple[str, str, str]]:
    """Check an extraction response body; return its triples as tuples."""
    if not isinstance(body, dict) or not isinstance(body.get("triples"), list):
        raise SchemaError(f"extraction response has no triples list: {_brief(body)}")
    triples: list[tuple[str, str, str]] = []
    for i, item in enumerate(body["triples"]):
        if not isinstance(item, dict):
            raise SchemaError(f"extraction triple #{i} is not an object: {_brief(item)}")
        head = item.get("head")
        relation = item.get("relation")
        tail = item.get("tail")
        if not all(isinstance(part, str) for part in (head, relation, tail)):
            raise SchemaError(
                f"extraction triple #{i} has non-string fields: {_brief(item)}"
            )
        triples.append((head, relation, tail))
    return triples


@dataclass
class HttpGenerationClient:
    """Chat-completion endpoint client used for both the QA generator
    and the model under audit.

    A ``None`` or empty system text sends the user message alone, which
    is how audit questions reach the model with no added instruction.
    The bearer token, when needed, comes from the environment variable
    named by ``api_key_env``.
    """

    endpoint_url: str
    model: str
    temperature: float = 0.2
    timeout_ms: int = 60000
    max_retries: int = 2
    api_key_env: str = "AUDIT_GEN_API_KEY"

    def generate(self, system_text: str | None, user_text: str) -> str:
        messages = []
        if system_text:
            messages.append({"role": "system", "content": system_text})
        messages.append({"role": "user", "content": user_text})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        }
        body = _post_json(
            self.endpoint_url,
            payload,
            self.timeout_ms,
            self.max_retries,
            api_key=os.environ.get(self.api_key_env),
        )
        if not isinstance(body, dict) or not isinstance(body.get("content"), str):
            raise SchemaError(
                f"generation response missing string 'content': {_brief(body)}"
            )
        return body["content"]


@dataclass
class HttpEntailmentClient:
    """Three-way NLI endpoint client."""

    endpoint_url: str
    timeout_ms: int = 30000
    max_retries: int = 2
    api_key_env: str = "AUDIT_NLI_API_KEY"

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        body = _post_json(
            self.endpoint_url,
            {"premise": premise, "hypothesis": hypothesis},
            self.timeout_ms,
            self.max_retries,
            api_key=os.environ.get(self.api_key_env),
        )
        return validate_entailment_response(body)


@dataclass
class HttpExtractorClient:
    """Remote triple-extraction endpoint client."""

    endpoint_url: str
    timeout_ms: int = 10000
    max_retries: int = 2
    api_key_env: str = "AUDIT_EXTRACTOR_API_KEY"

    def extract(self, text: str) -> list[tuple[str, str, str]]:
        body = _post_json(
            self.endpoint_url,
            {"text": text},
            self.timeout_ms,
            self.max_retries,
            api_key=os.environ.get(self.api_key_env),
        )
        return validate_extraction_response(body)


def _relationship_from_prompt(user_text: str) -> dict[str, str]:
    """Recover the relationship dict embedded in a composed user prompt."""
    marker = "\nRelationship: "
    idx = user_text.rfind(marker)
    if idx < 0:
        raise SchemaError("user prompt has no relationship line")
    line = user_text[idx + len(marker) :].strip()
    try:
        rel = ast.literal_eval(line)
    except (ValueError, SyntaxError) as exc:
        raise SchemaError(f"unparseable relationship line: {_brief(line)}") from exc
    if not isinstance(rel, dict) or not {"head", "type", "tail"} <= set(rel):
        raise SchemaError(f"relationship line missing keys: {_brief(line)}")
    return rel


@dataclass
class TemplateGenerationClient:
    """Offline QA generator: deterministic questions from the triple.

    Reads the relationship back out of the composed prompt and emits up
    to ``questions_per_fact`` templated questions as the JSON object the
    response parser expects.  Every question is answerable from the
    triple alone, so suites built this way are self-consistent without
    any language model.
    """

    questions_per_fact: int = 3

    def __post_init__(self) -> None:
        if not 1 <= self.questions_per_fact <= 5:
            raise ValueError(
                f"questions_per_fact must be in 1..5, got {self.questions_per_fact}"
            )

    def generate(self, system_text: str | None, user_text: str) -> str:
        rel = _relationship_from_prompt(user_text)
        head, relation, tail = rel["head"], rel["type"], rel["tail"]
        entries = [
            (
                f"In the source text, which entity does the relation "
                f"'{relation}' connect {head} to?",
                tail,
            ),
            (
                f"In the source text, which entity is connected by the "
                f"relation '{relation}' to {tail}?",
                head,
            ),
            (
                f"What relation links {head} and {tail} in the source text?",
                relation,
            ),
            (f"Which entity appears as the subject of '{relation}' involving {tail}?", head),
            (f"Which entity appears as the object of '{relation}' involving {head}?", tail),
        ]
        payload = {
            str(i + 1): {"question": q, "reference_answer": a}
            for i, (q, a) in enumerate(entries[: self.questions_per_fact])
        }
        return json.dumps(payload, ensure_ascii=False)


@dataclass
class EchoGenerationClient:
    """Model stand-in that answers every question with the question."""

    def generate(self, system_text: str | None, user_text: str) -> str:
        return user_text


@dataclass
class StaticGenerationClient:
    """Model stand-in that returns one fixed reply to everything."""

    reply: str = "I don't know."

    def generate(self, system_text: str | None, user_text: str) -> str:
        return self.reply


@dataclass
class LexicalEntailmentClient:
    """Offline judging fallback: token-subsequence entailment rule.

    Labels entailment exactly when every hypothesis token occurs in the
    premise in order, neutral otherwise.  The fixed score triples sum to
    one.  This is a deliberately coarse deterministic rule for running
    without an NLI service; it never emits contradiction.
    """

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        from .rouge import lcs_length, tokenize

        hyp = tokenize(hypothesis)
        if hyp and lcs_length(tokenize(premise), hyp) == len(hyp):
            return "entailment", {"entailment": 0.94, "neutral": 0.04, "contradiction": 0.02}
        return "neutral", {"entailment": 0.1, "neutral": 0.8, "contradiction": 0.1}
