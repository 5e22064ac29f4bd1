"""Corpus loading and word-window segmentation.

Documents come from plain-text files or JSONL files with a ``text`` field.
Segmentation slides a fixed word window with a configurable overlap across
each document; chunk character spans tile the document exactly, so the
union of spans per document is ``[0, len(text))`` and concatenating chunk
texts with overlaps removed reconstructs the document.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

from .jsonl import read_jsonl, write_jsonl

CorpusLabel = Literal["forget", "retain"]

_WORD_RE = re.compile(r"\S+")


class CorpusError(Exception):
    """Raised when a corpus path or file cannot be loaded."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    corpus_label: CorpusLabel
    text: str
    source_path: str


@dataclass(frozen=True)
class TextChunk:
    chunk_id: str
    doc_id: str
    start: int  # code-point offset, inclusive
    end: int  # code-point offset, exclusive
    text: str


@dataclass(frozen=True)
class ChunkConfig:
    window_words: int = 256
    overlap_words: int = 32

    def __post_init__(self) -> None:
        if self.window_words <= 0:
            raise ValueError(f"window_words must be positive, got {self.window_words}")
        if not 0 <= self.overlap_words < self.window_words:
            raise ValueError(
                f"overlap_words must be in [0, window_words), got {self.overlap_words}"
            )


def load_corpus(path: str | Path, label: CorpusLabel) -> list[Document]:
    """Load a corpus directory or single file into Documents.

    ``.jsonl`` files yield one Document per line (the ``text`` field is
    required); any other file is read whole as UTF-8 plain text.  Files are
    visited in sorted order so doc_ids are deterministic.
    """
    root = Path(path)
    if not root.exists():
        raise CorpusError(f"corpus path does not exist: {root}")
    if root.is_file():
        files = [root]
        base = root.parent
    else:
        files = sorted(p for p in root.rglob("*") if p.is_file())
        base = root

    docs: list[Document] = []
    for file in files:
        rel = file.relative_to(base).as_posix()
        if file.suffix == ".jsonl":
            docs.extend(_load_jsonl_file(file, rel, label))
        else:
            docs.append(_load_text_file(file, rel, label))
    return docs


def _load_text_file(file: Path, rel: str, label: CorpusLabel) -> Document:
    try:
        text = file.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{file}: not valid UTF-8: {exc}") from exc
    except OSError as exc:
        raise CorpusError(f"{file}: unreadable: {exc}") from exc
    return Document(doc_id=f"{label}:{rel}", corpus_label=label, text=text, source_path=str(file))


def _load_jsonl_file(file: Path, rel: str, label: CorpusLabel) -> list[Document]:
    docs: list[Document] = []
    try:
        lines = file.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{file}: not valid UTF-8: {exc}") from exc
    except OSError as exc:
        raise CorpusError(f"{file}: unreadable: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{file}:{line_no}: invalid JSON: {exc}") from exc
        if not isinstance(row, dict) or "text" not in row:
            raise CorpusError(f"{file}:{line_no}: JSONL line missing 'text' field")
        if not isinstance(row["text"], str):
            raise CorpusError(f"{file}:{line_no}: 'text' field is not a string")
        docs.append(
            Document(
                doc_id=f"{label}:{rel}:{line_no}",
                corpus_label=label,
                text=row["text"],
                source_path=str(file),
            )
        )
    return docs


def segment_corpus(docs: Iterable[Document], cfg: ChunkConfig) -> list[TextChunk]:
    chunks: list[TextChunk] = []
    for doc in docs:
        chunks.extend(segment_document(doc, cfg))
    return chunks


def segment_document(doc: Document, cfg: ChunkConfig) -> list[TextChunk]:
    """Split one document into word-window chunks with tiling char spans.

    Chunk i holds words ``[i*step, i*step + window)`` where
    ``step = window_words - overlap_words``.  The first chunk's span starts
    at 0 and the last ends at ``len(text)``; with zero overlap a chunk's
    span extends to the next chunk's first word so no code point is lost.
    """
    text = doc.text
    if not text:
        return []
    words = [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]
    if not words:
        # Whitespace-only document: one chunk keeps the coverage invariant.
        return [TextChunk(chunk_id=f"{doc.doc_id}#0000", doc_id=doc.doc_id, start=0, end=len(text), text=text)]

    step = cfg.window_words - cfg.overlap_words
    n = len(words)
    chunks: list[TextChunk] = []
    i = 0
    while True:
        lo = i * step
        hi = min(lo + cfg.window_words, n)
        start = 0 if i == 0 else words[lo][0]
        if hi == n:
            end = len(text)
        else:
            # Next chunk starts at words[lo + step]; cover up to whichever
            # comes later so consecutive spans always meet or overlap.
            end = max(words[hi - 1][1], words[lo + step][0])
        chunks.append(
            TextChunk(
                chunk_id=f"{doc.doc_id}#{i:04d}",
                doc_id=doc.doc_id,
                start=start,
                end=end,
                text=text[start:end],
            )
        )
        if hi == n:
            break
        i += 1
    return chunks


def index_chunks(chunks: Iterable[TextChunk]) -> dict[str, TextChunk]:
    """chunk_id -> TextChunk map; duplicate ids are an error."""
    index: dict[str, TextChunk] = {}
    for chunk in chunks:
        if chunk.chunk_id in index:
            raise ValueError(f"duplicate chunk_id: {chunk.chunk_id}")
        index[chunk.chunk_id] = chunk
    return index


def write_chunks(path: str | Path, chunks: Iterable[TextChunk]) -> int:
    return write_jsonl(
        path,
        (
            {"chunk_id": c.chunk_id, "doc_id": c.doc_id, "start": c.start, "end": c.end, "text": c.text}
            for c in chunks
        ),
    )


def read_chunks(path: str | Path) -> list[TextChunk]:
    return [
        TextChunk(
            chunk_id=row["chunk_id"],
            doc_id=row["doc_id"],
            start=row["start"],
            end=row["end"],
            text=row["text"],
        )
        for row in read_jsonl(path)
    ]
