"""Knowledge-graph data model and set algebra over normalized facts.

A fact is a (head, relation, tail) triple of surface strings.  Identity
is decided by a normalized key, so triples that differ only in case or
whitespace collapse to a single stored fact whose provenance records
every chunk that produced it.  The algebra (key intersection, key
subtraction) is what turns a forget graph and a retain graph into the
deduplicated test graph.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from .jsonl import read_json, read_jsonl, write_json, write_jsonl

# Bump whenever normalize_surface changes; graphs written under different
# versions must not be mixed in one algebra call.
NORMALIZATION_VERSION = "exact-nfc-casefold-v1"

GraphLabel = Literal["forget", "retain", "test"]
GRAPH_LABELS: tuple[str, ...] = ("forget", "retain", "test")

_WS_RUN = re.compile(r"\s+")


class GraphError(ValueError):
    """Raised for invalid facts or malformed graph artifacts."""


def normalize_surface(s: str) -> str:
    """Canonicalize an entity or relation surface form.

    Applies Unicode canonical composition, case folding, collapsing of
    whitespace runs to single spaces, and stripping, in that order.  Two
    surfaces are treated as the same graph element exactly when their
    normalized forms are equal; no fuzzier matching is attempted.
    """
    s = unicodedata.normalize("NFC", s)
    s = s.casefold()
    s = _WS_RUN.sub(" ", s)
    return s.strip()


def fact_key(head: str, relation: str, tail: str) -> str:
    """Canonical identity of a triple: normalized parts joined by tabs.

    Normalization collapses every whitespace run, so a tab can never
    survive inside a part and the join is unambiguous.
    """
    return "\t".join(
        (normalize_surface(head), normalize_surface(relation), normalize_surface(tail))
    )


@dataclass(frozen=True)
class Fact:
    """One directed edge: head entity, relation label, tail entity.

    ``provenance`` holds the ids of every chunk the triple was extracted
    from and must be non-empty; all three surface parts must survive
    normalization as non-empty strings.
    """

    head: str
    relation: str
    tail: str
    provenance: frozenset[str]

    def __post_init__(self) -> None:
        for part in (self.head, self.relation, self.tail):
            if not normalize_surface(part):
                raise GraphError(
                    "fact part is empty after normalization: "
                    f"{(self.head, self.relation, self.tail)!r}"
                )
        if not self.provenance:
            raise GraphError(
                f"fact has empty provenance: {(self.head, self.relation, self.tail)!r}"
            )

    @property
    def norm_key(self) -> str:
        return fact_key(self.head, self.relation, self.tail)

    def surface(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


@dataclass(frozen=True)
class GraphStats:
    """Counts of stored facts and distinct normalized surfaces."""

    fact_count: int
    entity_count: int
    relation_count: int


@dataclass
class KnowledgeGraph:
    """Directed edge-labeled graph keyed by normalized triple identity.

    Construction is single-writer; once built, instances are treated as
    immutable and safe to read from any number of threads.
    """

    label: GraphLabel
    facts: dict[str, Fact] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, norm_key: str) -> bool:
        return norm_key in self.facts

    def keys(self) -> set[str]:
        return set(self.facts)


def add_fact(g: KnowledgeGraph, f: Fact) -> KnowledgeGraph:
    """Insert a fact, merging provenance when the normalized key exists.

    On a merge the lexicographically smallest surface tuple is kept, so
    the stored graph does not depend on chunk processing order.  Returns
    ``g`` to allow accumulation-style call sites.
    """
    key = f.norm_key
    existing = g.facts.get(key)
    if existing is None:
        g.facts[key] = f
        return g
    head, relation, tail = min(existing.surface(), f.surface())
    g.facts[key] = Fact(
        head=head,
        relation=relation,
        tail=tail,
        provenance=existing.provenance | f.provenance,
    )
    return g


def intersect(g_fgt: KnowledgeGraph, g_ret: KnowledgeGraph) -> set[str]:
    """Normalized keys present in both graphs (the conflict set)."""
    return set(g_fgt.facts) & set(g_ret.facts)


def subtract(g_fgt: KnowledgeGraph, conf: set[str]) -> KnowledgeGraph:
    """Test-labeled graph holding the facts of ``g_fgt`` not keyed in ``conf``.

    Keys in ``conf`` that are absent from the graph are ignored, so a
    conflict set computed from a superset graph can be applied directly.
    Provenance is carried over unchanged.
    """
    result = KnowledgeGraph(label="test")
    for key, fact in g_fgt.facts.items():
        if key not in conf:
            result.facts[key] = fact
    return result


def stats(g: KnowledgeGraph) -> GraphStats:
    """Fact count plus distinct normalized entity and relation counts."""
    entities: set[str] = set()
    relations: set[str] = set()
    for fact in g.facts.values():
        entities.add(normalize_surface(fact.head))
        entities.add(normalize_surface(fact.tail))
        relations.add(normalize_surface(fact.relation))
    return GraphStats(
        fact_count=len(g.facts),
        entity_count=len(entities),
        relation_count=len(relations),
    )


def check_provenance(g: KnowledgeGraph, known_chunk_ids: set[str]) -> None:
    """Verify every provenance chunk id exists in the chunk store."""
    for fact in g.facts.values():
        missing = fact.provenance - known_chunk_ids
        if missing:
            raise GraphError(
                f"fact {fact.norm_key!r} cites unknown chunks: {sorted(missing)}"
            )


def meta_path(path: Path) -> Path:
    """Sidecar path recording label and normalization version."""
    return path.with_suffix(".meta.json")


def write_graph(path: Path, g: KnowledgeGraph) -> int:
    """Persist a graph as sorted JSONL rows plus a metadata sidecar.

    Rows are sorted by norm_key and provenance lists are sorted, so the
    same graph always serializes to identical bytes.  Returns the number
    of rows written.
    """
    rows = [
        {
            "head": fact.head,
            "relation": fact.relation,
            "tail": fact.tail,
            "norm_key": key,
            "provenance": sorted(fact.provenance),
        }
        for key, fact in sorted(g.facts.items())
    ]
    count = write_jsonl(path, rows)
    write_json(
        meta_path(path),
        {
            "fact_count": count,
            "label": g.label,
            "normalization_version": NORMALIZATION_VERSION,
        },
    )
    return count


def read_graph(path: Path) -> KnowledgeGraph:
    """Load a graph written by :func:`write_graph`, verifying its keys.

    Raises GraphError when the sidecar is missing or inconsistent, when
    a stored norm_key does not match the recomputed one, or when two
    rows collide on a key.
    """
    sidecar = meta_path(path)
    if not sidecar.exists():
        raise GraphError(f"{path}: missing metadata sidecar {sidecar.name}")
    meta = read_json(sidecar)
    version = meta.get("normalization_version")
    if version != NORMALIZATION_VERSION:
        raise GraphError(
            f"{path}: normalization version {version!r} does not match "
            f"{NORMALIZATION_VERSION!r}"
        )
    label = meta.get("label")
    if label not in GRAPH_LABELS:
        raise GraphError(f"{path}: invalid graph label {label!r}")
    g = KnowledgeGraph(label=label)
    for row in read_jsonl(path):
        fact = Fact(
            head=row["head"],
            relation=row["relation"],
            tail=row["tail"],
            provenance=frozenset(row["provenance"]),
        )
        if row.get("norm_key") != fact.norm_key:
            raise GraphError(
                f"{path}: stored norm_key {row.get('norm_key')!r} does not "
                "match the recomputed key"
            )
        if fact.norm_key in g.facts:
            raise GraphError(f"{path}: duplicate norm_key {fact.norm_key!r}")
        g.facts[fact.norm_key] = fact
    return g
