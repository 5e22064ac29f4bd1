"""Fact-anchored QA synthesis: context retrieval, prompt composition,
response validation, and suite assembly.

For every fact in the test graph the generator is prompted with both
the fact's source passage and the fact itself rendered as a dict, and
must reply with a JSON object of up to five question/answer entries.
Parsing distinguishes not-JSON, wrong-shape, and zero-valid-entry
failures so the caller can retry; facts still failing after retries are
recorded in the suite rather than aborting the run.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
from dataclasses import dataclass, field

from .clients import ClientError, GenerationClient
from .corpus import TextChunk
from .graph import Fact, KnowledgeGraph, meta_path
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .prompts import SYSTEM_PROMPT, USER_PROMPT

log = logging.getLogger(__name__)

TRUNCATION_MARKER = " ...[truncated]"
MAX_PAIRS_PER_FACT = 5

# The user template split once around its two slots, so substitution is
# a single concatenation and braces inside the context survive as-is.
_before_text, _after_text = USER_PROMPT.split("{text}")
_between, _after_rel = _after_text.split("{relationship}")


class SynthesisError(RuntimeError):
    """Unrecoverable synthesis failure (bad inputs, dangling chunks)."""


class QAParseError(RuntimeError):
    """Base for generator-response rejections; subclasses say why."""


class NotJsonError(QAParseError):
    """The response body was not parseable JSON."""


class WrongShapeError(QAParseError):
    """The JSON was structurally wrong (keys, nesting, or field types)."""


class EmptyResponseError(QAParseError):
    """The JSON was well-shaped but held zero usable QA entries."""


@dataclass(frozen=True)
class PromptBundle:
    """System and user texts for one generation call."""

    system_text: str
    user_text: str


@dataclass(frozen=True)
class QAPair:
    """One audit question anchored to a test-graph fact.

    ``chunk_id`` names the first provenance chunk, the leading source of
    the passage the question was generated from.
    """

    qa_id: str
    fact_key: str
    question: str
    reference_answer: str
    chunk_id: str

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.reference_answer.strip():
            raise SynthesisError(f"QA pair {self.qa_id!r} has an empty field")


@dataclass
class AuditSuite:
    """All generated QA pairs plus per-fact failure accounting."""

    suite_id: str
    qa_pairs: list[QAPair] = field(default_factory=list)
    generation_meta: dict[str, object] = field(default_factory=dict)
    succeeded_facts: int = 0
    failed_facts: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    def fact_keys(self) -> set[str]:
        return {qa.fact_key for qa in self.qa_pairs}


@dataclass(frozen=True)
class SynthesisConfig:
    """Generation parameters and bookkeeping for suite assembly."""

    model: str = "template-v1"
    temperature: float = 0.2
    context_budget: int = 4000
    parse_retries: int = 2
    suite_id: str = "suite"
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.context_budget <= len(TRUNCATION_MARKER):
            raise ValueError(
                f"context_budget must exceed {len(TRUNCATION_MARKER)}, "
                f"got {self.context_budget}"
            )
        if self.parse_retries < 0:
            raise ValueError(f"parse_retries must be non-negative, got {self.parse_retries}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature outside [0, 2]: {self.temperature}")


def retrieve_context(f: Fact, chunks: dict[str, TextChunk], budget: int = 4000) -> str:
    """Concatenate the fact's provenance chunk texts in chunk_id order.

    Multiple chunks are joined by a blank line.  Text longer than
    ``budget`` code points is cut and suffixed with a truncation marker;
    the result never exceeds the budget.
    """
    texts = []
    for chunk_id in sorted(f.provenance):
        if chunk_id not in chunks:
            raise SynthesisError(f"fact {f.norm_key!r} cites unknown chunk {chunk_id!r}")
        texts.append(chunks[chunk_id].text)
    ctx = "\n\n".join(texts)
    if len(ctx) > budget:
        ctx = ctx[: budget - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER
    return ctx


def compose_prompt(f: Fact, ctx: str) -> PromptBundle:
    """Fill the quiz templates with the passage and the rendered triple.

    The relationship is rendered as a single-quoted dict literal over
    the original un-normalized surfaces, matching the format the system
    prompt documents.  The system text is the template byte-for-byte.
    """
    if not ctx:
        raise SynthesisError("compose_prompt requires a non-empty context")
    relationship = str({"head": f.head, "type": f.relation, "tail": f.tail})
    user_text = _before_text + ctx + _between + relationship + _after_rel
    return PromptBundle(system_text=SYSTEM_PROMPT, user_text=user_text)


def _fact_id_prefix(fact_key: str) -> str:
    return hashlib.sha256(fact_key.encode("utf-8")).hexdigest()[:12]


def parse_qa_response(raw: str, f: Fact) -> list[QAPair]:
    """Validate a generator reply into 1..5 QAPairs bound to ``f``.

    Accepts an optional Markdown code fence around the JSON.  Keys must
    be decimal strings; entries must be objects with exactly "question"
    and "reference_answer" string fields.  Entries past the fifth are
    dropped with a warning.  Raises NotJsonError, WrongShapeError, or
    EmptyResponseError so callers can decide whether to retry.
    """
    text = raw.strip()
    if text.startswith("```"):
        first_break = text.find("\n")
        if first_break >= 0 and text.endswith("```"):
            text = text[first_break + 1 : -3].strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NotJsonError(f"response is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise WrongShapeError(f"response is not a JSON object: {type(data).__name__}")
    for key, entry in data.items():
        if not key.isdigit():
            raise WrongShapeError(f"non-numeric entry key {key!r}")
        if not isinstance(entry, dict):
            raise WrongShapeError(f"entry {key!r} is not an object")
        if set(entry) != {"question", "reference_answer"}:
            raise WrongShapeError(f"entry {key!r} has wrong fields: {sorted(entry)}")
        if not all(isinstance(entry[k], str) for k in ("question", "reference_answer")):
            raise WrongShapeError(f"entry {key!r} has non-string fields")
    ordered = sorted(data.items(), key=lambda item: int(item[0]))
    if len(ordered) > MAX_PAIRS_PER_FACT:
        log.warning(
            "fact %s: %d QA entries returned, keeping the first %d",
            f.norm_key,
            len(ordered),
            MAX_PAIRS_PER_FACT,
        )
        ordered = ordered[:MAX_PAIRS_PER_FACT]
    prefix = _fact_id_prefix(f.norm_key)
    chunk_id = min(f.provenance)
    pairs = []
    for key, entry in ordered:
        question = entry["question"].strip()
        answer = entry["reference_answer"].strip()
        if not question or not answer:
            log.warning("fact %s: entry %s has an empty field, skipping", f.norm_key, key)
            continue
        pairs.append(
            QAPair(
                qa_id=f"{prefix}-{key}",
                fact_key=f.norm_key,
                question=question,
                reference_answer=answer,
                chunk_id=chunk_id,
            )
        )
    if not pairs:
        raise EmptyResponseError("response held zero usable QA entries")
    return pairs


def synthesize_suite(
    g: KnowledgeGraph,
    chunks: dict[str, TextChunk],
    llm: GenerationClient,
    cfg: SynthesisConfig,
) -> AuditSuite:
    """Generate an audit suite covering every fact of a test graph.

    Facts are visited in norm_key order.  Each fact gets one generation
    call plus up to cfg.parse_retries retries on parse failure; facts
    that still fail, or whose client call fails, are recorded in the
    suite's failure list and do not abort the run.
    """
    if g.label != "test":
        raise SynthesisError(f"synthesis requires a test-labeled graph, got {g.label!r}")
    timestamp = cfg.timestamp or dt.datetime.now(dt.timezone.utc).isoformat()
    suite = AuditSuite(
        suite_id=cfg.suite_id,
        generation_meta={
            "model": cfg.model,
            "temperature": cfg.temperature,
            "timestamp": timestamp,
        },
    )
    for key in sorted(g.facts):
        fact = g.facts[key]
        ctx = retrieve_context(fact, chunks, budget=cfg.context_budget)
        bundle = compose_prompt(fact, ctx)
        failure: str | None = None
        pairs: list[QAPair] = []
        for attempt in range(cfg.parse_retries + 1):
            try:
                raw = llm.generate(bundle.system_text, bundle.user_text)
            except ClientError as exc:
                failure = f"generation call failed: {exc}"
                break
            try:
                pairs = parse_qa_response(raw, fact)
                failure = None
                break
            except QAParseError as exc:
                failure = f"attempt {attempt + 1}: {type(exc).__name__}: {exc}"
        if failure is not None:
            suite.failed_facts += 1
            suite.failures.append((key, failure))
            continue
        suite.succeeded_facts += 1
        suite.qa_pairs.extend(pairs)
    return suite


def write_suite(path, suite: AuditSuite) -> int:
    """Persist QA rows as JSONL plus a sidecar with meta and failures."""
    rows = [
        {
            "qa_id": qa.qa_id,
            "fact_key": qa.fact_key,
            "chunk_id": qa.chunk_id,
            "question": qa.question,
            "reference_answer": qa.reference_answer,
        }
        for qa in suite.qa_pairs
    ]
    count = write_jsonl(path, rows)
    write_json(
        meta_path(path),
        {
            "failed_facts": suite.failed_facts,
            "failures": [list(item) for item in suite.failures],
            "generation_meta": suite.generation_meta,
            "qa_count": count,
            "succeeded_facts": suite.succeeded_facts,
            "suite_id": suite.suite_id,
        },
    )
    return count


def read_suite(path) -> AuditSuite:
    """Load a suite written by :func:`write_suite`, checking qa_id uniqueness."""
    meta = read_json(meta_path(path))
    suite = AuditSuite(
        suite_id=meta["suite_id"],
        generation_meta=dict(meta["generation_meta"]),
        succeeded_facts=int(meta["succeeded_facts"]),
        failed_facts=int(meta["failed_facts"]),
        failures=[tuple(item) for item in meta["failures"]],
    )
    seen: set[str] = set()
    for row in read_jsonl(path):
        qa = QAPair(
            qa_id=row["qa_id"],
            fact_key=row["fact_key"],
            question=row["question"],
            reference_answer=row["reference_answer"],
            chunk_id=row["chunk_id"],
        )
        if qa.qa_id in seen:
            raise SynthesisError(f"{path}: duplicate qa_id {qa.qa_id!r}")
        seen.add(qa.qa_id)
        suite.qa_pairs.append(qa)
    return suite
