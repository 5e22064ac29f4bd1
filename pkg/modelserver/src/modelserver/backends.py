"""Extraction and NLI backends: pretrained models or pattern rules.

The transformers backends load pretrained weights from the local cache
only; when that fails they raise BackendUnavailable so the caller can
fall back to the pattern backends, which are pure functions over the
input text and therefore deterministic across processes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol

from .config import ServerConfig

ENTAILMENT_LABELS = ("entailment", "neutral", "contradiction")


class BackendUnavailable(RuntimeError):
    """The requested model backend cannot be constructed here."""


class ExtractorBackend(Protocol):
    name: str
    model_id: str

    def extract(self, text: str) -> list[tuple[str, str, str]]: ...


class NliBackend(Protocol):
    name: str
    model_id: str

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]: ...


# --- pattern extractor ---

# Surface verb phrases mapped to the relation labels the service emits.
VERB_RELATIONS: tuple[tuple[str, str], ...] = (
    ("attends", "educated at"),
    ("studied at", "educated at"),
    ("wrote", "author of"),
    ("is located in", "located in"),
    ("works for", "employed by"),
    ("founded", "founder of"),
)

_ENTITY_SRC = r"[A-Z][A-Za-z0-9'’\-]*(?:[ ][A-Z][A-Za-z0-9'’\-]*)*"
_SENTENCE_SPLIT = re.compile(r"[.!?;\n]+")
_PRONOUNS = frozenset({"He", "She", "It", "They", "I", "We", "You"})

_VERB_PATTERNS: tuple[tuple[re.Pattern[str], str], ...] = tuple(
    (
        re.compile(
            rf"({_ENTITY_SRC})[ ]+{re.escape(verb)}[ ]+(?:the[ ]+|an?[ ]+)?({_ENTITY_SRC})"
        ),
        relation,
    )
    for verb, relation in VERB_RELATIONS
)


@dataclass
class PatternExtractor:
    """Rule extractor: TitleCase spans joined by a known verb phrase."""

    name: str = "pattern"
    model_id: str = "builtin-pattern-v1"

    def extract(self, text: str) -> list[tuple[str, str, str]]:
        triples: list[tuple[str, str, str]] = []
        for sentence in _SENTENCE_SPLIT.split(text):
            for pattern, relation in _VERB_PATTERNS:
                for match in pattern.finditer(sentence):
                    head, tail = match.group(1), match.group(2)
                    if head in _PRONOUNS or tail in _PRONOUNS:
                        continue
                    triples.append((head, relation, tail))
        return triples


# --- pattern NLI ---

_WORD = re.compile(r"\w+")
_NEGATORS = frozenset({"not", "no", "never", "none", "cannot"})


def _tokens(s: str) -> list[str]:
    return _WORD.findall(s.casefold())


def _is_subsequence(needle: list[str], haystack: list[str]) -> bool:
    it = iter(haystack)
    return all(token in it for token in needle)


@dataclass
class PatternNli:
    """Deterministic three-way classifier from token-level evidence.

    Entailment when the hypothesis tokens are the premise tokens or an
    in-order subset of them; contradiction when one side negates the
    other or the sequences disagree in exactly one position; neutral
    otherwise.  Score triples are fixed per rule and sum to one.
    """

    name: str = "pattern"
    model_id: str = "builtin-pattern-v1"

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        p, h = _tokens(premise), _tokens(hypothesis)
        if p and p == h:
            return _verdict("entailment", 0.97)
        p_negated, h_negated = bool(_NEGATORS & set(p)), bool(_NEGATORS & set(h))
        if p_negated != h_negated:
            p_stripped = [t for t in p if t not in _NEGATORS]
            h_stripped = [t for t in h if t not in _NEGATORS]
            if p_stripped == h_stripped:
                return _verdict("contradiction", 0.92)
        if h and _is_subsequence(h, p):
            return _verdict("entailment", 0.91)
        if len(p) == len(h) and len(p) >= 3:
            mismatches = sum(a != b for a, b in zip(p, h))
            if mismatches == 1:
                return _verdict("contradiction", 0.86)
        return _verdict("neutral", 0.84)


def _verdict(label: str, confidence: float) -> tuple[str, dict[str, float]]:
    rest = round((1.0 - confidence) / 2, 6)
    scores = {name: rest for name in ENTAILMENT_LABELS}
    scores[label] = 1.0 - 2 * rest
    return label, scores


# --- transformers backends ---

def parse_linearized_triples(decoded: str) -> list[tuple[str, str, str]]:
    """Decode the seq2seq extractor's linearized triple markup.

    The format is ``<triplet> head <subj> tail <obj> relation`` repeated;
    special tokens around it are ignored.  Incomplete trailing groups are
    dropped.
    """
    text = decoded.replace("<s>", " ").replace("</s>", " ").replace("<pad>", " ")
    triples: list[tuple[str, str, str]] = []
    head: list[str] = []
    tail: list[str] = []
    relation: list[str] = []
    current: list[str] | None = None

    def flush() -> None:
        if head and tail and relation:
            triples.append((" ".join(head), " ".join(relation), " ".join(tail)))

    for token in text.split():
        if token == "<triplet>":
            flush()
            head, tail, relation = [], [], []
            current = head
        elif token == "<subj>":
            current = tail
        elif token == "<obj>":
            current = relation
        elif current is not None:
            current.append(token)
    flush()
    return triples


class TransformersExtractor:
    """Seq2seq relation extractor loaded from the local model cache."""

    name = "transformers"

    def __init__(self, cfg: ServerConfig) -> None:
        self.model_id = cfg.extractor_model_id
        self.max_new_tokens = cfg.max_new_tokens
        self.num_beams = cfg.num_beams
        try:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(
                cfg.extractor_model_id, local_files_only=True
            )
            self._model = AutoModelForSeq2SeqLM.from_pretrained(
                cfg.extractor_model_id, local_files_only=True
            )
            self._model.eval()
        except Exception as exc:
            raise BackendUnavailable(
                f"extractor model {cfg.extractor_model_id!r} not available locally: {exc}"
            ) from exc

    def extract(self, text: str) -> list[tuple[str, str, str]]:
        if not text.strip():
            return []
        import torch

        inputs = self._tokenizer(
            text, return_tensors="pt", truncation=True, max_length=1024
        )
        with torch.no_grad():
            # Beam search with sampling off keeps identical inputs on
            # identical outputs within a process.
            generated = self._model.generate(
                **inputs,
                max_new_tokens=self.max_new_tokens,
                num_beams=self.num_beams,
                do_sample=False,
            )
        decoded = self._tokenizer.decode(generated[0], skip_special_tokens=False)
        seen: set[tuple[str, str, str]] = set()
        triples: list[tuple[str, str, str]] = []
        for triple in parse_linearized_triples(decoded):
            if triple not in seen:
                seen.add(triple)
                triples.append(triple)
        return triples


class TransformersNli:
    """Sequence-pair classifier loaded from the local model cache."""

    name = "transformers"

    def __init__(self, cfg: ServerConfig) -> None:
        self.model_id = cfg.nli_model_id
        try:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(
                cfg.nli_model_id, local_files_only=True
            )
            self._model = AutoModelForSequenceClassification.from_pretrained(
                cfg.nli_model_id, local_files_only=True
            )
            self._model.eval()
        except Exception as exc:
            raise BackendUnavailable(
                f"NLI model {cfg.nli_model_id!r} not available locally: {exc}"
            ) from exc
        self._label_map = self._resolve_labels()

    def _resolve_labels(self) -> dict[int, str]:
        mapping: dict[int, str] = {}
        for idx, raw in self._model.config.id2label.items():
            lowered = str(raw).casefold()
            for canonical in ENTAILMENT_LABELS:
                if canonical.startswith(lowered[:6]) or lowered.startswith(canonical[:6]):
                    mapping[int(idx)] = canonical
        if sorted(mapping.values()) != sorted(ENTAILMENT_LABELS):
            raise BackendUnavailable(
                f"NLI model labels unrecognized: {self._model.config.id2label}"
            )
        return mapping

    def classify(self, premise: str, hypothesis: str) -> tuple[str, dict[str, float]]:
        import torch

        inputs = self._tokenizer(
            premise, hypothesis, return_tensors="pt", truncation=True, max_length=1024
        )
        with torch.no_grad():
            logits = self._model(**inputs).logits[0]
        probabilities = torch.softmax(logits, dim=-1)
        scores = {
            self._label_map[i]: float(probabilities[i]) for i in range(len(probabilities))
        }
        label = max(scores, key=lambda name: scores[name])
        return label, scores


# --- selection ---

@dataclass
class LoadedModels:
    """What the server actually serves, plus fallback notes for /health."""

    extractor: ExtractorBackend | None
    nli: NliBackend | None
    notes: list[str] = field(default_factory=list)


def build_backends(cfg: ServerConfig) -> LoadedModels:
    """Construct backends per config; ``auto`` degrades to pattern rules.

    With ``backend: transformers`` a missing model leaves that slot None,
    so the endpoints answer 503 rather than silently switching behavior.
    """
    notes: list[str] = []

    def pick(transformers_cls, pattern_cls):
        if cfg.backend == "pattern":
            return pattern_cls()
        try:
            return transformers_cls(cfg)
        except BackendUnavailable as exc:
            notes.append(str(exc))
            if cfg.backend == "auto":
                return pattern_cls()
            return None

    extractor = pick(TransformersExtractor, PatternExtractor)
    nli = pick(TransformersNli, PatternNli)
    return LoadedModels(extractor=extractor, nli=nli, notes=notes)
