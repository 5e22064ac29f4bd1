"""Chunk-to-triple extraction behind a pluggable backend contract.

Two backends: ``rule_based`` matches TitleCase entity spans around a
fixed verb lexicon and is fully deterministic, so the whole pipeline is
testable offline; ``remote`` POSTs chunk text to an extraction service.
Both yield RawTriples that build_graph folds into a KnowledgeGraph,
recording every chunk a triple came from as provenance.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

from .clients import ClientError, ExtractorClient, HttpExtractorClient
from .corpus import TextChunk
from .graph import Fact, KnowledgeGraph, add_fact, normalize_surface

log = logging.getLogger(__name__)

Backend = Literal["rule_based", "remote"]

DEFAULT_VERB_LEXICON: tuple[str, ...] = (
    "attends",
    "wrote",
    "is located in",
    "works for",
    "founded",
)

# A TitleCase entity span: capitalized words separated by single spaces.
_ENTITY = r"[A-Z][A-Za-z0-9'’\-]*(?:[ ][A-Z][A-Za-z0-9'’\-]*)*"
_SENTENCE_SPLIT = re.compile(r"[.!?;\n]+")


class ExtractionError(RuntimeError):
    """A chunk could not be extracted; the message names the chunk."""


@dataclass(frozen=True)
class RawTriple:
    """One extracted (head, relation, tail) with its source chunk id."""

    head: str
    relation: str
    tail: str
    chunk_id: str


@dataclass(frozen=True)
class ExtractorConfig:
    """Backend selection plus remote transport limits.

    ``endpoint_url`` must be set exactly when the backend is remote.
    ``max_in_flight`` bounds concurrent remote requests; the rule-based
    backend always runs sequentially.
    """

    backend: Backend = "rule_based"
    endpoint_url: str | None = None
    timeout_ms: int = 10000
    max_retries: int = 2
    max_in_flight: int = 4
    verb_lexicon: tuple[str, ...] = DEFAULT_VERB_LEXICON

    def __post_init__(self) -> None:
        if self.backend not in ("rule_based", "remote"):
            raise ValueError(f"unknown extractor backend: {self.backend!r}")
        if self.backend == "remote" and not self.endpoint_url:
            raise ValueError("remote extractor backend requires endpoint_url")
        if self.backend == "rule_based" and self.endpoint_url:
            raise ValueError("rule_based extractor backend takes no endpoint_url")
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be non-negative, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be at least 1, got {self.max_in_flight}")
        if not self.verb_lexicon:
            raise ValueError("verb_lexicon must not be empty")


@lru_cache(maxsize=8)
def _rule_patterns(verb_lexicon: tuple[str, ...]) -> tuple[re.Pattern[str], ...]:
    return tuple(
        re.compile(rf"({_ENTITY})[ ]+{re.escape(verb)}[ ]+({_ENTITY})")
        for verb in verb_lexicon
    )


def rule_based_triples(text: str, verb_lexicon: tuple[str, ...]) -> list[tuple[str, str, str]]:
    """Deterministic SVO extraction over TitleCase spans and known verbs.

    Each sentence is scanned once per verb phrase; matches do not
    overlap within one verb's scan.  The same text always yields the
    same triples in the same order.
    """
    patterns = _rule_patterns(verb_lexicon)
    triples: list[tuple[str, str, str]] = []
    for sentence in _SENTENCE_SPLIT.split(text):
        for verb, pattern in zip(verb_lexicon, patterns):
            for match in pattern.finditer(sentence):
                triples.append((match.group(1), verb, match.group(2)))
    return triples


def extract(
    chunk: TextChunk,
    cfg: ExtractorConfig,
    client: ExtractorClient | None = None,
) -> list[RawTriple]:
    """Extract triples from one chunk via the configured backend.

    Triples with any part empty after normalization are dropped with a
    warning rather than failing the chunk.  Remote failures surface as
    ExtractionError naming the chunk id.
    """
    if cfg.backend == "rule_based":
        candidates = rule_based_triples(chunk.text, cfg.verb_lexicon)
    else:
        if client is None:
            client = HttpExtractorClient(
                endpoint_url=cfg.endpoint_url or "",
                timeout_ms=cfg.timeout_ms,
                max_retries=cfg.max_retries,
            )
        try:
            candidates = client.extract(chunk.text)
        except ClientError as exc:
            raise ExtractionError(f"chunk {chunk.chunk_id}: {exc}") from exc
    triples: list[RawTriple] = []
    for head, relation, tail in candidates:
        if not all(normalize_surface(part) for part in (head, relation, tail)):
            log.warning(
                "chunk %s: dropping triple with empty part: %r",
                chunk.chunk_id,
                (head, relation, tail),
            )
            continue
        triples.append(RawTriple(head=head, relation=relation, tail=tail, chunk_id=chunk.chunk_id))
    return triples


@dataclass
class BuildResult:
    """Graph plus partial-progress accounting for failed chunks."""

    graph: KnowledgeGraph
    succeeded_chunks: int = 0
    failed_chunks: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        total = self.succeeded_chunks + self.failed_chunks
        return self.failed_chunks / total if total else 0.0


def build_graph(
    chunks: list[TextChunk],
    cfg: ExtractorConfig,
    label: Literal["forget", "retain"],
    client: ExtractorClient | None = None,
) -> BuildResult:
    """Fold per-chunk extraction into one graph for a corpus label.

    A chunk whose extraction fails is recorded in the result and skipped;
    the graph covers every chunk that succeeded.  Remote extractions run
    concurrently up to cfg.max_in_flight; the fold itself is sequential,
    and the result is independent of chunk order.
    """
    result = BuildResult(graph=KnowledgeGraph(label=label))

    def one(chunk: TextChunk) -> list[RawTriple]:
        return extract(chunk, cfg, client=client)

    if cfg.backend == "remote" and cfg.max_in_flight > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            outcomes = list(pool.map(_catching(one), chunks))
    else:
        outcomes = [_catching(one)(chunk) for chunk in chunks]

    for chunk, outcome in zip(chunks, outcomes):
        if isinstance(outcome, ExtractionError):
            result.failed_chunks += 1
            result.failures.append((chunk.chunk_id, str(outcome)))
            continue
        result.succeeded_chunks += 1
        for triple in outcome:
            if cfg.backend == "remote" and (
                triple.head not in chunk.text or triple.tail not in chunk.text
            ):
                log.warning(
                    "chunk %s: remote triple surfaces not verbatim in chunk: %r",
                    chunk.chunk_id,
                    (triple.head, triple.relation, triple.tail),
                )
            add_fact(
                result.graph,
                Fact(
                    head=triple.head,
                    relation=triple.relation,
                    tail=triple.tail,
                    provenance=frozenset([triple.chunk_id]),
                ),
            )
    return result


def _catching(fn):
    """Wrap a per-chunk call so failures travel as values, not raises."""

    def wrapped(chunk: TextChunk):
        try:
            return fn(chunk)
        except ExtractionError as exc:
            return exc

    return wrapped
